"""Dirichlet Laplacian / bilaplacian on V_n, finite-volume covariances and
the explicit covariance bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .tree import RegularTree

DENSE_CAP = 20000

KINDS = ("dirichlet_laplacian", "dirichlet_bilaplacian")
ROLES = ("G_n", "Gbar_n", "E_n", "G_restricted")


class SizeCapError(MemoryError):
    """Requested dense object exceeds the configured vertex cap."""


class RegimeError(ValueError):
    """Bound evaluated outside the regime where its constants are valid."""


def _check_cap(tree: RegularTree, cap: int) -> None:
    if tree.vertex_count > cap:
        raise SizeCapError(f"N={tree.vertex_count} exceeds dense cap {cap}")


def transition_matrix(tree: RegularTree) -> sp.csr_matrix:
    """Q: one-step matrix of the simple random walk killed on leaving V_n."""
    e = tree.edges()
    N = tree.vertex_count
    w = np.full(2 * len(e), 1.0 / tree.m)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    return sp.csr_matrix((w, (rows, cols)), shape=(N, N))


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    tree: RegularTree
    kind: str
    matrix: sp.csr_matrix

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def assemble_operator(tree: RegularTree, kind: str) -> OperatorMatrix:
    """Sparse I - Q or Delta^2 restricted to V_n.

    The bilaplacian is (I - Q)^2 plus the paths x -> z -> x through the
    exterior neighbours z of x; this reproduces the stencil 1 + 1/m,
    -2/m at distance 1, 1/m^2 at distance 2.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    N = tree.vertex_count
    L = (sp.identity(N, format="csr") - transition_matrix(tree)).tocsr()
    if kind == "dirichlet_laplacian":
        return OperatorMatrix(tree, kind, L)
    ext = tree.exterior_degree() / tree.m**2
    A = (L @ L + sp.diags(ext)).tocsr()
    A.sum_duplicates()
    return OperatorMatrix(tree, kind, A)


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    tree: RegularTree
    role: str
    matrix: np.ndarray
    residual: float = 0.0
    min_pivot: float = float("nan")

    def diag(self) -> np.ndarray:
        return np.diag(self.matrix)


def _spd_inverse(A: np.ndarray):
    c, low = sla.cho_factor(A, lower=True)
    pivots = np.diag(c) ** 2
    inv = sla.cho_solve((c, low), np.eye(A.shape[0]))
    inv = 0.5 * (inv + inv.T)
    return inv, float(pivots.min())


def finite_covariance(tree: RegularTree, cap: int = DENSE_CAP) -> CovarianceMatrix:
    """G_n = (Delta^2_Lambda)^{-1} by Cholesky."""
    _check_cap(tree, cap)
    A = assemble_operator(tree, "dirichlet_bilaplacian").dense()
    try:
        G, piv = _spd_inverse(A)
    except np.linalg.LinAlgError as exc:  # provably PD; reaching here is a bug
        raise RuntimeError("bilaplacian factorization failed") from exc
    res = float(np.abs(A @ G - np.eye(A.shape[0])).max())
    return CovarianceMatrix(tree, "G_n", G, residual=res, min_pivot=piv)


def gbar_matrix(tree: RegularTree, cap: int = DENSE_CAP) -> CovarianceMatrix:
    """Gbar_n = sum_k (k+1) Q^k = (I - Q)^{-2}."""
    _check_cap(tree, cap)
    L = assemble_operator(tree, "dirichlet_laplacian").dense()
    W, piv = _spd_inverse(L)
    Gb = W @ W
    Gb = 0.5 * (Gb + Gb.T)
    res = float(np.abs(L @ (L @ Gb) - np.eye(L.shape[0])).max())
    return CovarianceMatrix(tree, "Gbar_n", Gb, residual=res, min_pivot=piv)


def error_matrix(gbar: CovarianceMatrix, g: CovarianceMatrix) -> CovarianceMatrix:
    """E_n = Gbar_n - G_n."""
    if gbar.matrix.shape != g.matrix.shape or gbar.tree.params != g.tree.params:
        raise ValueError("Gbar_n and G_n come from different trees")
    return CovarianceMatrix(g.tree, "E_n", gbar.matrix - g.matrix)


# ---------------------------------------------------------------------------
# explicit constants and bound formulas


@dataclass(frozen=True)
class BoundConstants:
    m: int
    c1: float
    c2: float

    @property
    def large_m(self) -> bool:
        """Whether C_1(m)/m < 1, which the finer error bound needs."""
        return self.c1 < self.m


def bound_constants(m: int) -> BoundConstants:
    s = math.sqrt(m - 1)
    c1 = (m - 1) ** 1.5 / ((m - 2) * (s - 1)) + m / (m - 2)
    c2 = 2 * (m - 1) ** 2 / (m - 2) ** 3 + m * (m - 1) / (m - 2) ** 2
    return BoundConstants(m, c1, c2)


def en_crude_bound_shape(m: int, dx, dy):
    """dx^2 dy^2 min((m-1)^-dx, (m-1)^-dy); the generic constant is left out."""
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    out = dx**2 * dy**2 * float(m - 1) ** (-np.maximum(dx, dy))
    return float(out) if out.ndim == 0 else out


def _finer_first_term_log(m: int, d: float, J0: int) -> float:
    q = 4 * (m - 1) / (m - 2)
    return (
        math.log(J0)
        + (4 * J0 + 2) * math.log(2 * J0 + 1)
        + 4 * J0 * J0 * math.log(3)
        + (2 * J0 + 1) * math.log(q)
        + math.log((m - 1) / (m - 2))
        + (2 * J0 + 1) * math.log(d)
        - d * math.log(m - 1)
    )


def en_finer_bound(m: int, d, dx, dy, J0: int = 0):
    """Two-term bound on |E_n(x,y)| with explicit constants.

    Vectorised over d, dx, dy. Raises RegimeError unless C_1(m) < m.
    """
    bc = bound_constants(m)
    if not bc.large_m:
        raise RegimeError(f"C_1({m})/{m} = {bc.c1 / m:.4f} >= 1; finer bound needs large m")
    if J0 < 0 or int(J0) != J0:
        raise ValueError("J0 must be a nonnegative integer")
    d = np.asarray(d, dtype=float)
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    ratio = bc.c1 / m
    second = (bc.c1 * bc.c2 / (1 - ratio)) * dx * dy * float(m - 1) ** (-np.maximum(dx, dy))
    second = second * ratio**J0
    if J0 == 0:
        out = second + 0.0 * d
    else:
        first = np.vectorize(lambda dd: math.exp(_finer_first_term_log(m, dd, J0)) if dd > 0 else 0.0)(d)
        out = first + second
    return float(out) if np.ndim(out) == 0 else out


def bk_bound(m: int, k, C: float = 1.0) -> float:
    """B_k with the caller-supplied additive constant C (real k >= 2 allowed)."""
    if k < 2:
        raise ValueError("B_k needs k >= 2")
    lk = math.log(k)
    q = 4 * (m - 1) / (m - 2)
    log_first = (
        math.log(lk)
        + (4 * lk + 2) * math.log(2 * lk + 1)
        + 4 * lk * lk * math.log(3)
        + (2 * lk + 1) * math.log(q)
        + math.log((m - 1) / (m - 2))
        + (2 * lk + 1) * lk
        - k * math.log(m - 1)
    )
    r = bound_constants(m).c1 / m
    return math.exp(log_first) + C * r**lk


def bk_decreasing_from(m: int, C: float = 1.0, t_max: float = 1e4, h: float = 1e-3) -> float:
    """Smallest grid point t0 such that B(t) is decreasing on [t0, t_max].

    Locates the last sign change of a central finite difference of log B(t)
    on a geometric grid.
    """
    grid = np.geomspace(2.5, t_max, 4000)
    logB = lambda t: math.log(bk_bound(m, t, C))  # noqa: E731
    slope = np.array([logB(t * (1 + h)) - logB(t * (1 - h)) for t in grid])
    up = np.nonzero(slope >= 0)[0]
    if up.size == 0:
        return float(grid[0])
    if up[-1] == grid.size - 1:
        raise ValueError(f"B(t) still increasing at t_max={t_max}")
    return float(grid[up[-1] + 1])


def variance_floor(g: CovarianceMatrix | np.ndarray) -> float:
    """min_x G_n(x, x)."""
    M = g.matrix if isinstance(g, CovarianceMatrix) else np.asarray(g)
    return float(np.diag(M).min()) if M.ndim == 2 else float(M.min())


def variance_floor_bound(m: int) -> float:
    """1 - C_1 C_2 / ((m-1)(1 - C_1/m)); meaningful only when C_1 < m."""
    bc = bound_constants(m)
    if not bc.large_m:
        raise RegimeError(f"C_1({m}) >= {m}")
    return 1 - bc.c1 * bc.c2 / ((m - 1) * (1 - bc.c1 / m))


# ---------------------------------------------------------------------------
# matrix export


def write_matrix_csv(path, M: np.ndarray) -> None:
    """Row-major CSV, 17 significant digits."""
    np.savetxt(path, np.asarray(M, dtype=float), delimiter=",", fmt="%.17g")


def write_matrix_binary(path, M: np.ndarray) -> None:
    """Two little-endian uint64 dimensions followed by float64 entries, row-major."""
    M = np.ascontiguousarray(M, dtype="<f8")
    if M.ndim != 2:
        raise ValueError("expected a 2-d array")
    with open(path, "wb") as fh:
        fh.write(np.array(M.shape, dtype="<u8").tobytes())
        fh.write(M.tobytes(order="C"))


def read_matrix_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        rows, cols = np.frombuffer(fh.read(16), dtype="<u8")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ValueError(f"binary matrix truncated: expected {rows * cols} values, got {data.size}")
    return data.reshape(int(rows), int(cols)).copy()


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
