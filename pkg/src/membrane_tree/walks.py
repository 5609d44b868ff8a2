"""Simple random walk on the m-regular tree: transition series, exit-time
moments and excursion simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .operators import gbar_matrix, transition_matrix
from .rng import replicate_rng, replicate_slices
from .tree import RegularTree

MAX_STEPS = 10**7
SERIES_TOL = 1e-12


class TruncationError(RuntimeError):
    """A simulated walk exceeded its step budget."""


def spectral_radius(m: int) -> float:
    """Norm of the transition operator on l^2(T_m); p_k(x, y) <= rho^k."""
    return 2.0 * math.sqrt(m - 1) / m


def series_horizon(m: int, power: float = 1.0, tol: float = SERIES_TOL) -> int:
    """Smallest K with sum_{k>K} (k+1)^power rho^k < tol.

    Since p_k <= rho^k this bounds the truncation error of any series
    sum_k w_k p_k with weights w_k <= (k+1)^power.
    """
    rho = spectral_radius(m)
    lr = math.log(rho)
    k = 0
    while True:
        nxt = k + 1
        ratio = ((nxt + 2) / (nxt + 1)) ** power * rho
        if ratio < 1:
            tail = math.exp(power * math.log(nxt + 1) + nxt * lr) / (1 - ratio)
            if tail < tol:
                return k
        k += 1


@dataclass(frozen=True)
class DistanceChainSeries:
    m: int
    d: int
    K: int
    p: np.ndarray

    def weighted_sum(self, weights) -> float:
        return float(np.dot(weights, self.p))


def distance_chain(m: int, d: int, K: int) -> np.ndarray:
    """Law of d(S_k, y) for k = 0..K; row k is a distribution on 0..d+K.

    From j >= 1 the distance drops w.p. 1/m and grows w.p. (m-1)/m; from 0
    it moves to 1. Exact on a tree.
    """
    if m < 3 or d < 0 or K < 0:
        raise ValueError("need m >= 3, d >= 0, K >= 0")
    width = d + K + 1
    out = np.zeros((K + 1, width))
    v = np.zeros(width)
    v[d] = 1.0
    out[0] = v
    down, up = 1.0 / m, (m - 1.0) / m
    for k in range(1, K + 1):
        w = np.zeros(width)
        w[:-1] += down * v[1:]
        w[2:] += up * v[1:-1]
        w[1] += v[0]
        v = w
        out[k] = v
    return out


def pk_series(m: int, d: int, K: int) -> DistanceChainSeries:
    """p_k = P_x(S_k = y) for d(x, y) = d and k = 0..K."""
    if m < 3 or d < 0 or K < 0:
        raise ValueError("need m >= 3, d >= 0, K >= 0")
    # only states <= K - k can still reach 0 by time K
    width = max(d, K) + 2
    v = np.zeros(width)
    if d < width:
        v[d] = 1.0
    p = np.zeros(K + 1)
    p[0] = v[0]
    down, up = 1.0 / m, (m - 1.0) / m
    for k in range(1, K + 1):
        w = np.zeros(width)
        w[:-1] += down * v[1:]
        w[2:] += up * v[1:-1]
        w[1] += v[0]
        v = w
        p[k] = v[0]
    return DistanceChainSeries(m, d, K, p)


def green_series(m: int, d: int, tol: float = SERIES_TOL) -> float:
    """sum_k (k+1) p_k, truncated by the tail rule."""
    K = series_horizon(m, 1.0, tol)
    s = pk_series(m, d, max(K, d))
    return s.weighted_sum(np.arange(s.K + 1) + 1.0)


# ---------------------------------------------------------------------------
# exit times


@dataclass(frozen=True)
class ExitTimeMoments:
    first_moment: np.ndarray
    second_moment: np.ndarray


def _solve_checked(A: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    u = spsolve(A.tocsc(), b)
    res = np.abs(A @ u - b).max()
    if not res <= 1e-10 * max(np.abs(b).max(), 1.0):
        raise RuntimeError(f"exit-time solve residual {res:.3e} too large")
    return u


def exit_time_moments(tree: RegularTree) -> ExitTimeMoments:
    """E_x[tau_0] and E_x[tau_0^2] for every x in V_n.

    u = (I-Q)^{-1} 1 and v = (I-Q)^{-1} (1 + 2 Q u), from
    tau = 1 + tau' after one step.
    """
    Q = transition_matrix(tree)
    A = (sp.identity(tree.vertex_count, format="csr") - Q).tocsr()
    one = np.ones(tree.vertex_count)
    u = _solve_checked(A, one)
    v = _solve_checked(A, one + 2 * (Q @ u))
    return ExitTimeMoments(u, v)


def exit_time_by_depth(m: int, n: int) -> ExitTimeMoments:
    """Exit-time moments indexed by depth 0..n (the depth process is Markov)."""
    Q = np.zeros((n + 1, n + 1))
    for e in range(n + 1):
        if e == 0:
            if n >= 1:
                Q[0, 1] = 1.0
        else:
            Q[e, e - 1] = 1.0 / m
            if e < n:
                Q[e, e + 1] = (m - 1.0) / m
    A = np.eye(n + 1) - Q
    u = np.linalg.solve(A, np.ones(n + 1))
    v = np.linalg.solve(A, 1 + 2 * Q @ u)
    return ExitTimeMoments(u, v)


# ---------------------------------------------------------------------------
# excursions across the boundary of V_n


@dataclass(frozen=True)
class ExcursionRecord:
    """tau[j] = (j+1)-th visit time to the complement of V_n, j = 0..J.

    ``local_times[j]`` is sum_{k=tau_{j-1}}^{tau_j - 1} (k - tau_{j-1}) 1{S_k = y}
    with tau_{-1} = -1, and ``m_products[j]`` = M_j = prod_{i<=j}(tau_i - tau_{i-1} - 1).
    """

    tau: np.ndarray
    m_products: np.ndarray
    local_times: np.ndarray


def _neighbour_table(tree: RegularTree) -> np.ndarray:
    """(N, m) neighbour indices; -1 marks an exterior neighbour. Column 0 is
    the parent for non-root vertices."""
    N, m = tree.vertex_count, tree.m
    nb = np.full((N, m), -1, dtype=np.int64)
    for v in range(N):
        row = tree.neighbors(v)
        nb[v, : len(row)] = row
    return nb


def _simulate(tree, nb, x, y, J, count, rng, max_steps):
    """Vectorised walkers. Outside V_n a walker is (anchor leaf, height >= 1);
    from height h it moves to h-1 w.p. 1/m."""
    m = tree.m
    pos = np.full(count, x, dtype=np.int64)
    height = np.zeros(count, dtype=np.int64)
    tau = np.zeros((count, J + 1), dtype=np.int64)
    local = np.zeros((count, J + 1), dtype=np.float64)
    seen = np.zeros(count, dtype=np.int64)
    last = np.full(count, -1, dtype=np.int64)
    active = np.arange(count)
    k = 0
    while active.size:
        if k > max_steps:
            raise TruncationError(f"{active.size} walkers still running after {max_steps} steps")
        h = height[active]
        outside = h > 0
        hit = active[outside]
        if hit.size:
            tau[hit, seen[hit]] = k
            last[hit] = k
            seen[hit] += 1
        at_y = active[~outside & (pos[active] == y)]
        if at_y.size:
            local[at_y, seen[at_y]] += k - last[at_y]
        active = active[seen[active] <= J]
        if not active.size:
            break
        c = rng.integers(0, m, size=active.size)
        h = height[active]
        ins = h == 0
        ai = active[ins]
        nxt = nb[pos[ai], c[ins]]
        leave = nxt < 0
        height[ai[leave]] = 1
        pos[ai[~leave]] = nxt[~leave]
        ao = active[~ins]
        height[ao] += np.where(c[~ins] == 0, -1, 1)
        k += 1
    return tau, local


def _m_products(tau: np.ndarray) -> np.ndarray:
    prev = np.concatenate([np.full((tau.shape[0], 1), -1), tau[:, :-1]], axis=1)
    return np.cumprod((tau - prev - 1).astype(float), axis=1)


def simulate_excursions(tree: RegularTree, x: int, y: int, J: int, samples: int, seed: int,
                        max_steps: int = MAX_STEPS):
    """(tau, local, M) arrays of shape (samples, J+1), replicate-seeded."""
    tree._check(x)
    tree._check(y)
    if J < 0:
        raise ValueError("J must be >= 0")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    nb = _neighbour_table(tree)
    taus, locs = [], []
    for r, lo, hi in replicate_slices(samples):
        t, loc = _simulate(tree, nb, x, y, J, hi - lo, replicate_rng(seed, r), max_steps)
        taus.append(t)
        locs.append(loc)
    tau = np.concatenate(taus)
    return tau, np.concatenate(locs), _m_products(tau)


def mc_excursion_walk(tree: RegularTree, x: int, y: int, max_excursions: int, rng_seed: int,
                      max_steps: int = MAX_STEPS) -> ExcursionRecord:
    if max_excursions < 1:
        raise ValueError("max_excursions must be >= 1")
    tau, loc, M = simulate_excursions(tree, x, y, max_excursions, 1, rng_seed, max_steps)
    return ExcursionRecord(tau[0], M[0], loc[0])


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    partial_sum: float = float("nan")
    partial_sum_stderr: float = float("nan")


def _mean_se(a: np.ndarray):
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else float("inf")


def mc_gbar(tree, x, y, samples, seed) -> MCEstimate:
    """Monte Carlo Gbar_n(x, y) = E_x[sum_{k<tau_0} (k+1) 1{S_k = y}]."""
    _, loc, _ = simulate_excursions(tree, x, y, 0, samples, seed)
    return MCEstimate(*_mean_se(loc[:, 0]))


def mc_estimate_aj(tree, x, y, j: int, samples: int, seed: int) -> MCEstimate:
    """a_j = E_x[M_{j-1} sum_{k=tau_{j-1}}^{tau_j-1} (k - tau_{j-1}) 1{S_k = y}].

    Also returns the alternating partial sum Gbar_n - a_1 + ... +- a_j,
    estimated from the same walks.
    """
    if j < 1:
        raise ValueError("j must be >= 1")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    _, loc, M = simulate_excursions(tree, x, y, j, samples, seed)
    Mprev = np.concatenate([np.ones((samples, 1)), M[:, :-1]], axis=1)
    terms = Mprev * loc
    signs = (-1.0) ** np.arange(j + 1)
    est, se = _mean_se(terms[:, j])
    ps, pse = _mean_se(terms @ signs)
    return MCEstimate(est, se, ps, pse)


# ---------------------------------------------------------------------------
# exact excursion coefficients


def boundary_kernel(tree: RegularTree, gbar: np.ndarray | None = None):
    """(leaves, D, Gbar) with D = diag(exterior degree)/m^2 on the leaves.

    Leaving V_n from leaf w has weight Gbar(x, w)/m per exterior neighbour,
    and re-entering from an exterior neighbour of w contributes Gbar(w, .)/m,
    so a_j = Gbar[x, L] D (Gbar[L, L] D)^{j-1} Gbar[L, y].
    """
    if gbar is None:
        gbar = gbar_matrix(tree).matrix
    leaves = np.arange(tree.leaves().start, tree.leaves().stop)
    D = tree.exterior_degree()[leaves] / tree.m**2
    return leaves, D, gbar


def exact_aj(tree: RegularTree, x: int, y: int, j: int, gbar: np.ndarray | None = None) -> float:
    if j < 1:
        raise ValueError("j must be >= 1")
    leaves, D, Gb = boundary_kernel(tree, gbar)
    v = Gb[x, leaves] * D
    K = Gb[np.ix_(leaves, leaves)] * D[None, :]
    for _ in range(j - 1):
        v = v @ K
    return float(v @ Gb[leaves, y])


def boundary_error_matrix(tree: RegularTree, gbar: np.ndarray | None = None) -> np.ndarray:
    """E_n from the excursion series in resolvent form,
    Gbar[:, L] D (I + Gbar[L, L] D)^{-1} Gbar[L, :]."""
    leaves, D, Gb = boundary_kernel(tree, gbar)
    K = Gb[np.ix_(leaves, leaves)] * D[None, :]
    right = np.linalg.solve(np.eye(leaves.size) + K, Gb[leaves, :])
    return (Gb[:, leaves] * D[None, :]) @ right
