"""Finite-volume covariance against its explicit bounds, via the orbit reduction.

Prints the variance range, the boundary error E_n = Gbar_n - G_n and how close
it comes to the crude and finer bounds.
"""

import argparse

import numpy as np

from membrane_tree.greens import g00
from membrane_tree.operators import (
    RegimeError,
    bound_constants,
    en_crude_bound_shape,
    en_finer_bound,
    variance_floor_bound,
)
from membrane_tree.orbits import orbit_table


def row(m, n):
    tab = orbit_table(m, n)
    diag = tab.diagonal_by_depth()
    E = tab.E
    crude = float((E**2 / en_crude_bound_shape(m, tab.dx, tab.dy)).max())
    out = {"n": n, "N": int(round(np.sqrt(tab.pairs.sum()))), "min_var": float(diag.min()),
           "max_var": float(diag.max()), "max|E|": float(np.abs(E).max()), "crude C": crude}
    try:
        out["finer ratio"] = float((np.abs(E) / en_finer_bound(m, tab.d, tab.dx, tab.dy, 0)).max())
    except RegimeError:
        out["finer ratio"] = float("nan")
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--m", type=int, default=25)
    p.add_argument("--nmax", type=int, default=8)
    a = p.parse_args()
    bc = bound_constants(a.m)
    print(f"m={a.m}  G(o,o)={g00(a.m):.6f}  C1={bc.c1:.4f}  C2={bc.c2:.4f}  C1/m={bc.c1 / a.m:.4f}")
    if bc.large_m:
        print(f"variance floor bound {variance_floor_bound(a.m):.6f}")
    rows = [row(a.m, n) for n in range(a.nmax + 1)]
    keys = list(rows[0])
    print(" ".join(f"{k:>12}" for k in keys))
    for r in rows:
        print(" ".join(f"{r[k]:>12.6g}" for k in keys))


if __name__ == "__main__":
    main()
