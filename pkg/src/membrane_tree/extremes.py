"""Scaling constants, Gumbel comparison and Poisson approximation of the
number of high exceedances."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, special, stats

from . import greens
from .tree import RegularTree, TreeParams, ball_size, distance_class_counts

THETA_GRID = (-1.0, 0.0, 1.0, 2.0)
Z99 = float(stats.norm.ppf(0.995))


@dataclass(frozen=True)
class ScalingConstants:
    N: int
    g00: float
    b_n: float
    a_n: float
    B_n: float
    A_n: float

    def u(self, theta):
        """Threshold u_n(theta) = A_n theta + B_n for the unit-variance field."""
        return self.A_n * np.asarray(theta, dtype=float) + self.B_n


def scaling_constants_for(N: int, g00: float) -> ScalingConstants:
    if N < 3:
        raise ValueError(f"need N >= 3 for log log N > 0, got N={N}")
    L = math.log(N)
    s = math.sqrt(2 * L)
    B = s - (math.log(L) + math.log(4 * math.pi)) / (2 * s)
    b = math.sqrt(g00) * B
    return ScalingConstants(N=N, g00=g00, b_n=b, a_n=g00 / b, B_n=B, A_n=1 / B)


def scaling_constants(m: int, n: int) -> ScalingConstants:
    TreeParams(m, n)
    return scaling_constants_for(ball_size(m, n), greens.g00(m))


def gumbel_cdf(theta):
    return np.exp(-np.exp(-np.asarray(theta, dtype=float)))


def normal_tail(u):
    """P(Z > u) without cancellation for large u."""
    return special.ndtr(-np.asarray(u, dtype=float))


def lambda_n(m: int, n: int, theta) -> float:
    """Expected number of exceedances N P(psi_o > u_n(theta))."""
    c = scaling_constants(m, n)
    return c.N * normal_tail(c.u(theta))


def lambda_n_mills(m: int, n: int, theta) -> float:
    """The Mills-ratio approximation N phi(u)/u of ``lambda_n``."""
    c = scaling_constants(m, n)
    u = c.u(theta)
    return c.N * np.exp(-0.5 * u * u) / (math.sqrt(2 * math.pi) * u)


def ks_distance(samples, cdf) -> float:
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("no samples")
    F = cdf(x)
    i = np.arange(1, x.size + 1)
    return float(np.max(np.maximum(np.abs(i / x.size - F), np.abs((i - 1) / x.size - F))))


# ---------------------------------------------------------------------------
# exceedance covariances


def indicator_cov(r: float, u: float) -> float:
    """Cov(1{X > u}, 1{Y > u}) for a standard bivariate normal with correlation r.

    d/dr P(X > u, Y > u) is the density phi_2(u, u; r); after r = sin(s) the
    integrand is exp(-u^2 / (1 + sin s)) / (2 pi), smooth on [0, arcsin r].
    """
    if not -1.0 <= r <= 1.0:
        raise ValueError(f"correlation must lie in [-1, 1], got {r}")
    if r == 0.0:
        return 0.0
    u2 = u * u

    def f(s):
        q = 1.0 + math.sin(s)
        return math.exp(-u2 / q) if q > 0 else 0.0

    val, _ = integrate.quad(f, 0.0, math.asin(r), epsabs=1e-14, epsrel=1e-12, limit=200)
    return val / (2 * math.pi)


def indicator_cov_many(r, u: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    uniq, inv = np.unique(r, return_inverse=True)
    vals = np.array([indicator_cov(float(v), u) for v in uniq])
    return vals[inv].reshape(r.shape)


def correlations_by_distance(m: int, kmax: int) -> np.ndarray:
    """r_k = G(k)/G(o,o), k = 0..kmax."""
    return greens.greens_table(m, kmax) / greens.g00(m)


def stein_chen_bound(tree: RegularTree | TreeParams, source: str, theta: float, cov=None) -> float:
    """Right-hand side of the Poisson approximation bound for W_n.

    ``source``: "infinite" (pairs aggregated by distance class), "finite_normalized"
    (correlations of G_n; from ``cov`` when given, else from the orbit reduction)
    or "independent" (all correlations zero).
    """
    params = tree.params if isinstance(tree, RegularTree) else tree
    m, n = params.m, params.n
    c = scaling_constants(m, n)
    u = float(c.u(theta))
    p = float(normal_tail(u))
    lam = c.N * p
    pre = -math.expm1(-lam) / lam
    first = c.N * p * p
    if source == "independent":
        second = 0.0
    elif source == "infinite":
        C = distance_class_counts(params).counts.astype(float)
        r = correlations_by_distance(m, 2 * n)
        second = sum(C[k] * abs(indicator_cov(float(r[k]), u)) for k in range(1, 2 * n + 1))
    elif source == "finite_normalized":
        if cov is not None:
            M = np.asarray(getattr(cov, "matrix", cov), dtype=float)
            s = 1 / np.sqrt(np.diag(M))
            R = M * s[:, None] * s[None, :]
            iu = np.triu_indices(R.shape[0], 1)
            second = 2.0 * np.abs(indicator_cov_many(np.clip(R[iu], -1, 1), u)).sum()
        else:
            from .orbits import orbit_table

            tab = orbit_table(m, n)
            off = tab.d > 0
            vals = indicator_cov_many(np.clip(tab.R[off], -1, 1), u)
            second = float((tab.pairs[off] * np.abs(vals)).sum())
    else:
        raise ValueError(f"unknown covariance source {source!r}")
    return pre * (first + second)


# ---------------------------------------------------------------------------
# Poisson comparison of exceedance counts


def poisson_tv(counts, lam: float) -> float:
    """Total variation between the empirical law of ``counts`` and Poisson(lam)."""
    counts = np.asarray(counts, dtype=np.int64)
    kmax = int(counts.max()) if counts.size else 0
    if lam > 0:
        kmax = max(kmax, int(stats.poisson.isf(1e-12, lam)) + 1)
    emp = np.bincount(counts, minlength=kmax + 1)[: kmax + 1] / max(counts.size, 1)
    pois = stats.poisson.pmf(np.arange(kmax + 1), lam) if lam > 0 else np.eye(1, kmax + 1)[0]
    tail = max(0.0, 1.0 - pois.sum())
    return float(0.5 * (np.abs(emp - pois).sum() + tail))


# ---------------------------------------------------------------------------
# experiments on sampled fields


def _unit_scale(law: str, c: ScalingConstants) -> float:
    """Divisor turning the sampled field into a unit-variance field."""
    if law == "infinite_volume":
        return math.sqrt(c.g00)
    if law == "finite_normalized":
        return 1.0
    raise ValueError(f"Gumbel constants do not apply to law {law!r}")


@dataclass
class FieldSummary:
    """Per-sample reductions of a field batch: max and exceedance counts."""

    law: str
    maxima: np.ndarray
    exceed: np.ndarray  # (samples, len(theta))
    theta: tuple

    @classmethod
    def from_rows(cls, law, rows_iter, c: ScalingConstants, theta=THETA_GRID):
        theta = tuple(float(t) for t in theta)
        scale = _unit_scale(law, c) if law != "finite_volume" else 1.0
        thr = c.u(np.array(theta)) * (scale if law != "finite_volume" else math.nan)
        mx, ex = [], []
        for rows in rows_iter:
            mx.append(rows.max(axis=1))
            if law != "finite_volume":
                ex.append((rows[:, :, None] > thr[None, None, :]).sum(axis=1))
        maxima = np.concatenate(mx)
        exceed = np.concatenate(ex) if ex else np.zeros((maxima.size, 0), dtype=np.int64)
        return cls(law, maxima, exceed, theta)


def rescaled_maxima(summary: FieldSummary, c: ScalingConstants) -> np.ndarray:
    scale = _unit_scale(summary.law, c)
    return (summary.maxima / scale - c.B_n) / c.A_n


@dataclass
class ExtremesReport:
    m: int
    n: int
    law: str
    theta: list
    samples: int
    seed: int
    ks: float
    lambda_n: list
    tv: list
    stein_chen_bound: list
    expected_max_ratio: dict
    empirical_cdf: list = field(default_factory=list)
    gumbel_cdf: list = field(default_factory=list)
    rescaled_max: np.ndarray | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("rescaled_max")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def rescaled_max_experiment(batch, constants: ScalingConstants, theta=THETA_GRID) -> dict:
    """KS distance to Gumbel and empirical P(rescaled max <= theta) at the probes."""
    summary = batch if isinstance(batch, FieldSummary) else FieldSummary.from_rows(
        batch.law, [batch.samples], constants, theta)
    z = rescaled_maxima(summary, constants)
    theta = list(summary.theta)
    return {
        "rescaled_max": z,
        "ks": ks_distance(z, gumbel_cdf),
        "theta": theta,
        "empirical_cdf": [float(np.mean(z <= t)) for t in theta],
        "gumbel_cdf": [float(gumbel_cdf(t)) for t in theta],
    }


def expected_max_ratio(batch, constants: ScalingConstants) -> dict:
    """E[max phi] / sqrt(2 log N) with a normal-approximation 99% interval."""
    maxima = batch.maxima if isinstance(batch, FieldSummary) else np.asarray(batch.samples).max(axis=1)
    if maxima.size == 0:
        raise ValueError("empty batch")
    norm = math.sqrt(2 * math.log(constants.N))
    est = float(maxima.mean()) / norm
    se = float(maxima.std(ddof=1)) / math.sqrt(maxima.size) / norm if maxima.size > 1 else math.inf
    return {"est": est, "lo": est - Z99 * se, "hi": est + Z99 * se}


def exceedance_counts(batch, constants: ScalingConstants, theta: float) -> np.ndarray:
    scale = _unit_scale(batch.law, constants)
    return (np.asarray(batch.samples) / scale > float(constants.u(theta))).sum(axis=1)


def exceedance_poisson_tv(batch, constants: ScalingConstants, theta: float) -> float:
    W = batch if isinstance(batch, np.ndarray) else exceedance_counts(batch, constants, theta)
    lam = constants.N * float(normal_tail(constants.u(theta)))
    return poisson_tv(W, lam)


def build_report(m, n, law, summary: FieldSummary, seed: int, stein_source: str | None) -> ExtremesReport:
    c = scaling_constants(m, n)
    exp = rescaled_max_experiment(summary, c)
    lam = [float(lambda_n(m, n, t)) for t in summary.theta]
    tv = [poisson_tv(summary.exceed[:, i], lam[i]) for i in range(len(summary.theta))]
    sc = [stein_chen_bound(TreeParams(m, n), stein_source, t) for t in summary.theta] if stein_source else []
    return ExtremesReport(
        m=m, n=n, law=law, theta=list(summary.theta), samples=int(summary.maxima.size), seed=seed,
        ks=exp["ks"], lambda_n=lam, tv=tv, stein_chen_bound=sc,
        expected_max_ratio=expected_max_ratio(summary, c),
        empirical_cdf=exp["empirical_cdf"], gumbel_cdf=exp["gumbel_cdf"],
        rescaled_max=exp["rescaled_max"],
    )
