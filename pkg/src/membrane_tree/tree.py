"""Finite balls V_n of the m-regular tree.

Vertices are indexed in BFS order: the root is 0, generation g occupies a
contiguous block, and the children of a vertex are contiguous and ordered by
creation. Every matrix and sample in the package uses this ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_VERTICES = 50_000_000
DISTANCE_TABLE_CAP = 5000


@dataclass(frozen=True)
class TreeParams:
    m: int
    n: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 3:
            raise ValueError(f"branching degree must be an integer >= 3, got m={self.m}")
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"depth must be a nonnegative integer, got n={self.n}")


def ball_size(m: int, n: int) -> int:
    """|V_n| = (m(m-1)^n - 2)/(m-2), exact integer arithmetic."""
    return (m * (m - 1) ** n - 2) // (m - 2)


def generation_size(m: int, g: int) -> int:
    return 1 if g == 0 else m * (m - 1) ** (g - 1)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RegularTree:
    params: TreeParams
    depth: np.ndarray
    parent: np.ndarray
    first_child: np.ndarray
    n_children: np.ndarray
    generation_start: np.ndarray
    _dist: list = field(default_factory=list, repr=False)

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def vertex_count(self) -> int:
        return int(self.depth.shape[0])

    N = vertex_count

    @property
    def root(self) -> int:
        return 0

    def children(self, x: int) -> range:
        x = self._check(x)
        start = int(self.first_child[x])
        return range(start, start + int(self.n_children[x]))

    def generation(self, g: int) -> range:
        return range(int(self.generation_start[g]), int(self.generation_start[g + 1]))

    def leaves(self) -> range:
        return self.generation(self.n)

    def exterior_degree(self) -> np.ndarray:
        """Number of neighbours of each vertex lying outside V_n."""
        out = np.zeros(self.vertex_count, dtype=np.int64)
        out[self.leaves().start:] = self.m if self.n == 0 else self.m - 1
        return out

    def neighbors(self, x: int) -> list[int]:
        x = self._check(x)
        nb = [] if x == 0 else [int(self.parent[x])]
        nb.extend(self.children(x))
        return nb

    def edges(self) -> np.ndarray:
        """(N-1, 2) array of (parent, child) pairs."""
        child = np.arange(1, self.vertex_count, dtype=np.int64)
        return np.column_stack([self.parent[1:], child])

    def _check(self, x) -> int:
        xi = int(x)
        if xi != x or not 0 <= xi < self.vertex_count:
            raise IndexError(f"vertex {x!r} not in V_{self.n} (N={self.vertex_count})")
        return xi

    def ancestor_table(self) -> np.ndarray:
        """anc[v, k] = ancestor of v at depth k, or -1 when k > depth(v)."""
        N, n = self.vertex_count, self.n
        anc = np.full((N, n + 1), -1, dtype=np.int64)
        anc[:, 0] = 0
        for g in range(1, n + 1):
            rows = self.generation(g)
            # a vertex of generation g inherits its parent's row, then itself
            anc[rows.start:rows.stop, :g] = anc[self.parent[rows.start:rows.stop], :g]
            anc[rows.start:rows.stop, g] = np.arange(rows.start, rows.stop)
        return anc

    def distance_matrix(self, cap: int = DISTANCE_TABLE_CAP) -> np.ndarray:
        """Full N x N distance table, cached; refused above ``cap`` vertices."""
        if self._dist:
            return self._dist[0]
        N = self.vertex_count
        if N > cap:
            raise MemoryError(f"distance table for N={N} exceeds cap {cap}")
        anc = self.ancestor_table()
        depth = self.depth
        D = np.empty((N, N), dtype=np.int64)
        block = max(1, 2_000_000 // (N * (self.n + 1)))
        for s in range(0, N, block):
            a = anc[s:s + block, None, :]
            same = (a == anc[None, :, :]) & (a >= 0)
            lca_depth = same.sum(axis=2) - 1
            D[s:s + block] = depth[s:s + block, None] + depth[None, :] - 2 * lca_depth
        self._dist.append(_readonly(D))
        return D


def build_tree(params: TreeParams | tuple, max_vertices: int = MAX_VERTICES) -> RegularTree:
    if not isinstance(params, TreeParams):
        params = TreeParams(*params)
    m, n = params.m, params.n
    N = ball_size(m, n)
    if N > max_vertices:
        raise OverflowError(f"V_{n} of the {m}-regular tree has {N} vertices (> {max_vertices})")

    starts = np.zeros(n + 2, dtype=np.int64)
    for g in range(n + 1):
        starts[g + 1] = starts[g] + generation_size(m, g)
    assert starts[-1] == N

    depth = np.empty(N, dtype=np.int64)
    parent = np.full(N, -1, dtype=np.int64)
    n_children = np.zeros(N, dtype=np.int64)
    first_child = np.full(N, N, dtype=np.int64)
    for g in range(n + 1):
        lo, hi = starts[g], starts[g + 1]
        depth[lo:hi] = g
        if g >= 1:
            per = m if g == 1 else m - 1
            parent[lo:hi] = starts[g - 1] + np.arange(hi - lo) // per
        if g < n:
            per = m if g == 0 else m - 1
            n_children[lo:hi] = per
            first_child[lo:hi] = starts[g + 1] + np.arange(hi - lo) * per

    return RegularTree(
        params=params,
        depth=_readonly(depth),
        parent=_readonly(parent),
        first_child=_readonly(first_child),
        n_children=_readonly(n_children),
        generation_start=_readonly(starts),
    )


def graph_distance(tree: RegularTree, x: int, y: int) -> int:
    """Distance through the lowest common ancestor, by parent climbing."""
    x, y = tree._check(x), tree._check(y)
    dx, dy = int(tree.depth[x]), int(tree.depth[y])
    d = 0
    while dx > dy:
        x, dx, d = int(tree.parent[x]), dx - 1, d + 1
    while dy > dx:
        y, dy, d = int(tree.parent[y]), dy - 1, d + 1
    while x != y:
        x, y, d = int(tree.parent[x]), int(tree.parent[y]), d + 2
    return d


def boundary_distance(tree: RegularTree, x: int) -> int:
    """d(x, exterior boundary of V_n) = n + 1 - depth(x)."""
    return tree.n + 1 - int(tree.depth[tree._check(x)])


# ---------------------------------------------------------------------------
# counting pairs by distance


@dataclass(frozen=True)
class DistanceClassTable:
    m: int
    n: int
    counts: np.ndarray
    proof_sum: np.ndarray

    def shape_ratio(self) -> np.ndarray:
        """C_k / (m-1)^(n + floor(k/2)) for every k."""
        k = np.arange(self.counts.size)
        return self.counts / float(self.m - 1) ** (self.n + k // 2)


def orbit_sizes(m: int, n: int, e: int):
    """Classes of y relative to a fixed x at depth e, with their sizes.

    Yields (a, t, size) where a is the depth of lca(x, y) and t = depth(y);
    then d(x, y) = e + t - 2a. Every y in V_n falls in exactly one class.
    """
    for a in range(e + 1):
        for t in range(a, n + 1):
            if a == e:
                if t == e:
                    size = 1
                elif e == 0:
                    size = m * (m - 1) ** (t - 1)
                else:
                    size = (m - 1) ** (t - e)
            elif t == a:
                size = 1
            else:
                others = m - 1 if a == 0 else m - 2
                size = others * (m - 1) ** (t - a - 1)
            yield a, t, size


def _proof_count_sum(m: int, n: int, k: int) -> int:
    # the explicit summation appearing in the counting argument, for 1 <= k <= n
    s = sum(m * (m - 1) ** (n - l - 1) * (m - 1) ** ((k - l) // 2 + l) for l in range(k))
    s += sum(m * (m - 1) ** (n - l - 1) * m * (m - 1) ** (k - 1) for l in range(k, n))
    return s + m * (m - 1) ** (k - 1)


def distance_class_counts(tree: RegularTree | TreeParams) -> DistanceClassTable:
    """Exact C_k = #{(x,y) in V_n^2 : d(x,y) = k}, k = 0..2n.

    Uses the class decomposition of ``orbit_sizes`` (O(n^3) work), so it is
    exact for trees far too large to enumerate.
    """
    params = tree.params if isinstance(tree, RegularTree) else tree
    m, n = params.m, params.n
    counts = [0] * (2 * n + 1)
    for e in range(n + 1):
        g = generation_size(m, e)
        for a, t, size in orbit_sizes(m, n, e):
            counts[e + t - 2 * a] += g * size
    proof = [0] * (2 * n + 1)
    for k in range(1, n + 1):
        proof[k] = _proof_count_sum(m, n, k)
    # exact integers while they fit, floats beyond
    dtype = np.int64 if ball_size(m, n) ** 2 < 2**62 else float
    return DistanceClassTable(m=m, n=n, counts=np.array(counts, dtype=dtype),
                              proof_sum=np.array(proof, dtype=dtype))


def counting_constant(m: int) -> float:
    """Explicit constant from summing the geometric series in the C_k bound."""
    return 2 * m / (m - 2) + m * m / ((m - 1) * (m - 2)) + m / (m - 1)


# ---------------------------------------------------------------------------
# separated leaf set used in the lower bound for the expected maximum


def log_floor(n: int) -> int:
    """floor(log n), natural logarithm."""
    return int(math.floor(math.log(n)))


def separated_leaf_set(tree: RegularTree) -> np.ndarray:
    """One vertex y_z at depth n - L below each z at depth n - 2L, L = floor(log n).

    y_z is reached from z by always taking the first child.
    """
    n = tree.n
    if n < 1:
        raise ValueError("separated leaf set needs n >= 1")
    L = log_floor(n)
    if L < 1:
        raise ValueError(f"n={n} too small: floor(log n) = 0 gives no separation")
    if n - 2 * L < 1:
        raise ValueError(f"n={n} too small: n - 2*floor(log n) = {n - 2 * L} < 1")
    ys = np.arange(tree.generation(n - 2 * L).start, tree.generation(n - 2 * L).stop)
    for _ in range(L):
        ys = tree.first_child[ys]
    return ys
