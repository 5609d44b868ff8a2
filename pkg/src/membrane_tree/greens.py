"""Closed-form infinite-volume quantities on T_m.

Gamma(x, y | z) = sum_k P_x(S_k = y) z^k depends on x, y only through
d = d(x, y); G(x, y) = g'(1) + g(1) with g = Gamma(x, y | .).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .walks import SERIES_TOL, pk_series, series_horizon, spectral_radius

STEP_CAP = 200_000


def _check_m(m):
    if int(m) != m or m < 3:
        raise ValueError(f"m must be an integer >= 3, got {m}")


def gamma_z(m: int, d: int, z: float) -> float:
    """Green's function generating series at real 0 <= z <= 1.

    Uses (m - rho)/(2(m-1)z) = 2z/(m + rho), rho = sqrt(m^2 - 4(m-1)z^2),
    which is regular at z = 0.
    """
    _check_m(m)
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"z must lie in [0, 1], got {z}")
    rho = math.sqrt(m * m - 4 * (m - 1) * z * z)
    return 2 * (m - 1) / (m - 2 + rho) * (2 * z / (m + rho)) ** d


def g_at_one(m: int, d: int) -> float:
    """g(1) = 1 / ((m-2)(m-1)^(d-1))."""
    _check_m(m)
    return (m - 1) / ((m - 2) * (m - 1) ** d)


def g_log_derivative_at_one(m: int, d: int) -> float:
    """g'(1)/g(1) = (2(m-1) + d m (m-2)) / (m-2)^2."""
    _check_m(m)
    return (2 * (m - 1) + d * m * (m - 2)) / (m - 2) ** 2


def greens_infinite(m: int, d: int) -> float:
    """G(x, y) = ((d+1) m (m-2) + 2) / ((m-2)^3 (m-1)^(d-1)).

    Integer numerator and denominator, one rounding at the division.
    """
    _check_m(m)
    if d < 0:
        raise ValueError("d must be >= 0")
    num = (d + 1) * m * (m - 2) + 2
    den = (m - 2) ** 3
    if d == 0:
        return num * (m - 1) / den
    return num / (den * (m - 1) ** (d - 1))


def greens_statement(m: int, d: int) -> float:
    """Variant ((d+1) m (m-1)(m-2) - 2(m-1)) / ((m-2)^3 (m-1)^d).

    Kept only for the discrepancy table; it disagrees with the series.
    """
    _check_m(m)
    return ((d + 1) * m * (m - 1) * (m - 2) - 2 * (m - 1)) / ((m - 2) ** 3 * (m - 1) ** d)


def greens_table(m: int, dmax: int) -> np.ndarray:
    return np.array([greens_infinite(m, d) for d in range(dmax + 1)])


def g00(m: int) -> float:
    """G(o, o) = (m-1)((m-1)^2 + 1)/(m-2)^3."""
    return greens_infinite(m, 0)


def g_derivative_series(m: int, d: int, k: int, tol: float = 1e-12) -> float:
    """g^(k)(1) = sum_j j(j-1)...(j-k+1) p_j, with relative truncation error <= tol."""
    _check_m(m)
    if k < 1:
        raise ValueError("derivative order must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    rho = spectral_radius(m)
    K = max(series_horizon(m, float(k), SERIES_TOL), d + k)
    while True:
        if K > STEP_CAP:
            raise ValueError(f"tolerance {tol} not reachable within {STEP_CAP} steps")
        s = pk_series(m, d, K)
        j = np.arange(K + 1, dtype=float)
        w = np.ones_like(j)
        for i in range(k):
            w *= j - i
        val = float(np.dot(w, s.p))
        # tail: sum_{j>K} j^k rho^j, bounded by a geometric majorant
        r = ((K + 2) / (K + 1)) ** k * rho
        if val > 0 and r < 1:
            tail = (K + 1) ** k * rho ** (K + 1) / (1 - r)
            if tail <= tol * val:
                return val
        K *= 2


def g_derivative_bound(m: int, d: int, k: int) -> float:
    """3^((k-1)^2) (k-1)^(k-1) (4(m-1)/(m-2))^k (m-1)/(m-2) d^k (m-1)^-d, 0^0 = 1."""
    _check_m(m)
    if k < 1:
        raise ValueError("derivative order must be >= 1")
    lead = 3.0 ** ((k - 1) ** 2) * float((k - 1) ** (k - 1))
    return lead * (4 * (m - 1) / (m - 2)) ** k * (m - 1) / (m - 2) * float(d) ** k * (m - 1.0) ** (-d)


# ---------------------------------------------------------------------------
# powers in the falling-factorial basis


@dataclass(frozen=True)
class AlphaTable:
    ell: int
    coeffs: tuple

    def reconstruct(self, k: int) -> int:
        """sum_i coeffs[i] * k(k-1)...(k-i)."""
        total, ff = 0, 1
        for i, a in enumerate(self.coeffs):
            ff *= k - i
            total += a * ff
        return total


def alpha_coeffs(ell: int) -> AlphaTable:
    """k^ell = sum_{i<ell} alpha_i (k)_{i+1}; alpha_i = (i+1) alpha'_i + alpha'_{i-1}."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    row = [1]
    for _ in range(2, ell + 1):
        prev = row
        row = [1] + [(i + 1) * prev[i] + prev[i - 1] for i in range(1, len(prev))] + [1]
    return AlphaTable(ell, tuple(row))
