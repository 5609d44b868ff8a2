"""Print the infinite-volume covariance by distance next to its random-walk series."""

import argparse

from membrane_tree.greens import greens_infinite, greens_statement
from membrane_tree.walks import green_series


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--m", type=int, nargs="+", default=[3, 4, 5])
    p.add_argument("--max-d", type=int, default=10)
    a = p.parse_args()
    for m in a.m:
        print(f"m={m}")
        print(f"{'d':>3} {'closed form':>14} {'series':>14} {'|diff|':>9} {'variant':>12}")
        for d in range(a.max_d + 1):
            g, s = greens_infinite(m, d), green_series(m, d)
            print(f"{d:>3} {g:>14.10f} {s:>14.10f} {abs(g - s):>9.1e} {greens_statement(m, d):>12.6f}")


if __name__ == "__main__":
    main()
