"""Symmetry-reduced covariances for trees too large to factor densely.

Fix x at depth e. Automorphisms of V_n fixing the root and x act on the
other vertices with orbits labelled (a, t): a = depth of lca(x, y), t =
depth(y). These orbits form an equitable partition, so every operator that
commutes with the automorphisms (Q, Delta^2_Lambda, their inverses) acts on
orbit-constant functions through a small quotient matrix. The column
G_n(x, .) is orbit-constant, and solving the quotient system gives it
exactly with O(n^2) unknowns instead of N.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tree import RegularTree, generation_size, orbit_sizes


def _neighbour_classes(m: int, n: int, e: int, a: int, t: int):
    """[(class, count)] for a representative of (a, t), and its exterior count."""
    inside = []
    ext = 0
    down = m if t == 0 else m - 1  # number of children of a depth-t vertex
    if a == e:
        if t == e:
            if e >= 1:
                inside.append(((e - 1, e - 1), 1))
        else:
            inside.append(((e, t - 1), 1))
        if t < n:
            inside.append(((e, t + 1), down))
        else:
            ext = down
    elif t == a:
        if a >= 1:
            inside.append(((a - 1, a - 1), 1))
        nxt = (a + 1, a + 1) if a + 1 < e else (e, e)
        inside.append((nxt, 1))
        inside.append(((a, a + 1), down - 1))
    else:
        inside.append(((a, a) if t == a + 1 else (a, t - 1), 1))
        if t < n:
            inside.append(((a, t + 1), m - 1))
        else:
            ext = m - 1
    return inside, ext


@dataclass(frozen=True)
class OrbitColumns:
    """Columns G_n(x, .), Gbar_n(x, .), E_n(x, .) for x at depth e, per orbit."""

    m: int
    n: int
    e: int
    a: np.ndarray
    t: np.ndarray
    size: np.ndarray
    G: np.ndarray
    Gbar: np.ndarray

    @property
    def E(self) -> np.ndarray:
        return self.Gbar - self.G

    @property
    def d(self) -> np.ndarray:
        return self.e + self.t - 2 * self.a

    def self_index(self) -> int:
        return int(np.nonzero((self.a == self.e) & (self.t == self.e))[0][0])


def quotient_operators(m: int, n: int, e: int):
    """Quotient of Q and of Delta^2_Lambda on the orbits relative to depth e."""
    classes = list(orbit_sizes(m, n, e))
    index = {(a, t): i for i, (a, t, _) in enumerate(classes)}
    k = len(classes)
    Q = np.zeros((k, k))
    ext = np.zeros(k)
    for i, (a, t, _) in enumerate(classes):
        inside, ex = _neighbour_classes(m, n, e, a, t)
        for cls, c in inside:
            Q[i, index[cls]] += c / m
        ext[i] = ex
    L = np.eye(k) - Q
    A = L @ L + np.diag(ext / m**2)
    return classes, Q, A


def orbit_columns(m: int, n: int, e: int) -> OrbitColumns:
    classes, Q, A = quotient_operators(m, n, e)
    k = len(classes)
    rhs = np.zeros(k)
    rhs[[i for i, (a, t, _) in enumerate(classes) if a == e and t == e][0]] = 1.0
    G = np.linalg.solve(A, rhs)
    L = np.eye(k) - Q
    Gbar = np.linalg.solve(L, np.linalg.solve(L, rhs))
    arr = np.array(classes, dtype=np.int64)
    return OrbitColumns(m, n, e, arr[:, 0], arr[:, 1], arr[:, 2], G, Gbar)


@dataclass(frozen=True)
class OrbitTable:
    """All ordered pairs (x, y) of V_n grouped into orbits.

    ``pairs[i]`` is the number of ordered pairs in orbit i; every pair in an
    orbit shares d(x,y), both boundary distances and all covariance values.
    """

    m: int
    n: int
    ex: np.ndarray
    ey: np.ndarray
    d: np.ndarray
    pairs: np.ndarray
    G: np.ndarray
    Gbar: np.ndarray
    Gxx: np.ndarray
    Gyy: np.ndarray

    @property
    def E(self) -> np.ndarray:
        return self.Gbar - self.G

    @property
    def dx(self) -> np.ndarray:
        return self.n + 1 - self.ex

    @property
    def dy(self) -> np.ndarray:
        return self.n + 1 - self.ey

    @property
    def R(self) -> np.ndarray:
        """Correlation G_n(x,y) / sqrt(G_n(x,x) G_n(y,y))."""
        return self.G / np.sqrt(self.Gxx * self.Gyy)

    def diagonal_by_depth(self) -> np.ndarray:
        """G_n(x, x) for x at depth 0..n."""
        out = np.empty(self.n + 1)
        sel = self.d == 0
        out[self.ex[sel]] = self.G[sel]
        return out


def orbit_table(m: int, n: int) -> OrbitTable:
    cols = [orbit_columns(m, n, e) for e in range(n + 1)]
    diag = np.array([c.G[c.self_index()] for c in cols])
    ex, ey, d, pairs, G, Gb = [], [], [], [], [], []
    for c in cols:
        ex.append(np.full(c.a.size, c.e))
        ey.append(c.t)
        d.append(c.d)
        pairs.append(c.size.astype(float) * generation_size(m, c.e))
        G.append(c.G)
        Gb.append(c.Gbar)
    ex = np.concatenate(ex)
    ey = np.concatenate(ey)
    return OrbitTable(
        m, n, ex, ey, np.concatenate(d), np.concatenate(pairs),
        np.concatenate(G), np.concatenate(Gb), diag[ex], diag[ey],
    )


def expand_column(tree: RegularTree, x: int, cols: OrbitColumns, which: str = "G") -> np.ndarray:
    """Lift an orbit column back to a length-N vector (for cross-checks)."""
    anc = tree.ancestor_table()
    ax = anc[x]
    same = (anc == ax[None, :]) & (anc >= 0)
    lca = same.sum(axis=1) - 1
    lookup = {(a, t): i for i, (a, t) in enumerate(zip(cols.a, cols.t))}
    vals = getattr(cols, which)
    return np.array([vals[lookup[(int(l), int(t))]] for l, t in zip(lca, tree.depth)])
