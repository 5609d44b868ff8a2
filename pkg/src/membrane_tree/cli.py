"""Command-line runner: greens tables, covariance artifacts, extremes reports
and the verification suite.

Exit codes: 0 success, 1 failed assertion, 2 invalid arguments, 3 resource cap.
"""

from __future__ import annotations

import os

# BLAS reads these at load time, so they must be set before numpy is imported
_threads = os.environ.get("MEMBRANE_TREE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
from dataclasses import dataclass, field  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import extremes, greens, operators, orbits, sampler, walks  # noqa: E402
from .tree import TreeParams, ball_size, build_tree, distance_class_counts  # noqa: E402

log = logging.getLogger("membrane_tree")

EXIT_OK, EXIT_ASSERT, EXIT_ARGS, EXIT_CAP = 0, 1, 2, 3
LAW_NAMES = {"infinite": "infinite_volume", "finite": "finite_volume", "finite-normalized": "finite_normalized"}
LARGE_M = 25


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    m: int | None = None
    n: int | None = None
    samples: int = 20000
    seed: int = 0
    theta: tuple = extremes.THETA_GRID
    out: Path = Path("out")
    format: str = "csv"
    large_m_assertions: bool = True
    law: str = "infinite"
    max_d: int = 10
    cap_n: int = 5000

    def __post_init__(self):
        if self.m is not None and (int(self.m) != self.m or self.m < 3):
            raise UsageError(f"m must be an integer >= 3, got {self.m}")
        if self.n is not None and self.n < 0:
            raise UsageError(f"n must be >= 0, got {self.n}")
        if self.samples < 0:
            raise UsageError("samples must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")
        if self.law not in LAW_NAMES:
            raise UsageError(f"unknown law {self.law!r}")
        if self.max_d < 0:
            raise UsageError("max-d must be >= 0")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _csv_table(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# greens


def greens_rows(m: int, max_d: int):
    rows = []
    for d in range(max_d + 1):
        proof = greens.greens_infinite(m, d)
        series = walks.green_series(m, d)
        rows.append((d, greens.greens_statement(m, d), proof, series, abs(proof - series)))
    return rows


def cmd_greens(cfg: RunConfig) -> int:
    m = 3 if cfg.m is None else cfg.m
    rows = greens_rows(m, cfg.max_d)
    header = ("d", "G_statement", "G_proof", "series", "abs_proof_minus_series")
    if cfg.format == "json":
        _dump(cfg.out / f"greens_m{m}.json", [dict(zip(header, r)) for r in rows])
    else:
        _csv_table(cfg.out / f"greens_m{m}.csv", header, rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# covariance


def _finer_violations(m, d, dx, dy, E, weight=None):
    bound = operators.en_finer_bound(m, d, dx, dy, 0)
    bad = np.abs(E) > bound * (1 + 1e-12)
    ratio = float(np.max(np.abs(E) / bound))
    count = int(bad.sum() if weight is None else weight[bad].sum())
    return count, ratio


def covariance_summary_dense(tree, G, Gb, E, large_m: bool) -> dict:
    m, n = tree.m, tree.n
    depth = np.asarray(tree.depth)
    dxy = tree.n + 1 - depth
    summary = {
        "m": m, "n": n, "N": tree.vertex_count, "method": "dense",
        "residual_G_n": G.residual, "residual_Gbar_n": Gb.residual,
        "min_pivot": G.min_pivot,
        "root_values": {"G_n": float(G.matrix[0, 0]), "Gbar_n": float(Gb.matrix[0, 0]),
                        "E_n": float(E.matrix[0, 0])},
        "variance_floor": operators.variance_floor(G),
        "max_diag_G_n": float(np.diag(G.matrix).max()),
        "max_abs_E_n": float(np.abs(E.matrix).max()),
    }
    shape = operators.en_crude_bound_shape(m, dxy[:, None], dxy[None, :])
    summary["crude_fitted_constant"] = float((E.matrix**2 / shape).max())
    summary.update(_regime_fields(m, n, large_m, lambda: _finer_violations(
        m, tree.distance_matrix(cap=max(tree.vertex_count, 1)), dxy[:, None], dxy[None, :], E.matrix)))
    return summary


def covariance_summary_orbits(m: int, n: int, large_m: bool) -> dict:
    tab = orbits.orbit_table(m, n)
    E = tab.E
    shape = operators.en_crude_bound_shape(m, tab.dx, tab.dy)
    summary = {
        "m": m, "n": n, "N": ball_size(m, n), "method": "orbit",
        "residual_G_n": _orbit_residual(m, n), "residual_Gbar_n": _orbit_residual(m, n, bar=True),
        "root_values": {"G_n": float(tab.G[(tab.ex == 0) & (tab.d == 0)][0]),
                        "Gbar_n": float(tab.Gbar[(tab.ex == 0) & (tab.d == 0)][0]),
                        "E_n": float(E[(tab.ex == 0) & (tab.d == 0)][0])},
        "variance_floor": float(tab.diagonal_by_depth().min()),
        "max_diag_G_n": float(tab.diagonal_by_depth().max()),
        "max_abs_E_n": float(np.abs(E).max()),
        "crude_fitted_constant": float((E**2 / shape).max()),
    }
    summary.update(_regime_fields(m, n, large_m, lambda: _finer_violations(
        m, np.maximum(tab.d, 0), tab.dx, tab.dy, E, weight=tab.pairs)))
    return summary


def _orbit_residual(m, n, bar=False) -> float:
    worst = 0.0
    for e in range(n + 1):
        classes, Q, A = orbits.quotient_operators(m, n, e)
        cols = orbits.orbit_columns(m, n, e)
        rhs = np.zeros(len(classes))
        rhs[cols.self_index()] = 1.0
        if bar:
            L = np.eye(len(classes)) - Q
            r = L @ (L @ cols.Gbar) - rhs
        else:
            r = A @ cols.G - rhs
        worst = max(worst, float(np.abs(r).max()))
    return worst


def _regime_fields(m, n, large_m: bool, run) -> dict:
    if not large_m:
        return {"finer_bound_violations": "skipped: disabled"}
    bc = operators.bound_constants(m)
    out = {"C1": bc.c1, "C2": bc.c2}
    if m < LARGE_M or not bc.large_m:
        out["finer_bound_violations"] = "skipped: regime"
        return out
    count, ratio = run()
    out["finer_bound_violations"] = count
    out["finer_bound_max_ratio"] = ratio
    floor_bound = operators.variance_floor_bound(m)
    out["variance_floor_bound"] = floor_bound
    return out


def cmd_covariance(cfg: RunConfig) -> int:
    m = 3 if cfg.m is None else cfg.m
    n = 0 if cfg.n is None else cfg.n
    N = ball_size(m, n)
    if cfg.format == "json":
        if n > 40:
            raise operators.SizeCapError(f"orbit reduction capped at n=40, got n={n}")
        summary = covariance_summary_orbits(m, n, cfg.large_m_assertions)
    else:
        if N > cfg.cap_n:
            raise operators.SizeCapError(f"N={N} exceeds --cap-N {cfg.cap_n}")
        tree = build_tree(TreeParams(m, n))
        G = operators.finite_covariance(tree, cap=cfg.cap_n)
        Gb = operators.gbar_matrix(tree, cap=cfg.cap_n)
        E = operators.error_matrix(Gb, G)
        write = operators.write_matrix_binary if cfg.format == "binary" else operators.write_matrix_csv
        ext = "bin" if cfg.format == "binary" else "csv"
        for name, M in (("G_n", G), ("Gbar_n", Gb), ("E_n", E)):
            write(cfg.out / f"{name}_m{m}_n{n}.{ext}", M.matrix)
        summary = covariance_summary_dense(tree, G, Gb, E, cfg.large_m_assertions)
    _dump(cfg.out / f"covariance_m{m}_n{n}.json", summary)
    if isinstance(summary.get("finer_bound_violations"), int) and summary["finer_bound_violations"]:
        return EXIT_ASSERT
    return EXIT_OK


# ---------------------------------------------------------------------------
# extremes


def run_extremes(m: int, n: int, law: str, samples: int, seed: int, theta=extremes.THETA_GRID):
    """Sample, reduce and summarize. Returns (report, summary)."""
    tree = build_tree(TreeParams(m, n))
    c = extremes.scaling_constants(m, n)
    if law == "infinite_volume":
        s = sampler.FieldSampler(sampler.restricted_infinite_covariance(tree))
        rows = s.blocks(samples, seed)
        source = "infinite"
    else:
        G = operators.finite_covariance(tree)
        s = sampler.FieldSampler(G)
        if law == "finite_normalized":
            scale = np.sqrt(np.diag(G.matrix))
            rows = (b / scale for b in s.blocks(samples, seed))
            source = "finite_normalized"
        else:
            rows = s.blocks(samples, seed)
            source = None
    summary = extremes.FieldSummary.from_rows(law, rows, c, theta)
    if law == "finite_volume":
        report = extremes.ExtremesReport(
            m=m, n=n, law=law, theta=list(summary.theta), samples=samples, seed=seed,
            ks=None, lambda_n=[float(extremes.lambda_n(m, n, t)) for t in summary.theta],
            tv=[], stein_chen_bound=[],
            expected_max_ratio=extremes.expected_max_ratio(summary, c),
        )
    else:
        report = extremes.build_report(m, n, law, summary, seed, source)
    return report, summary


def cmd_extremes(cfg: RunConfig) -> int:
    if cfg.samples < 100:
        raise UsageError("extremes needs --samples >= 100")
    m = 3 if cfg.m is None else cfg.m
    n = 4 if cfg.n is None else cfg.n
    law = LAW_NAMES[cfg.law]
    if ball_size(m, n) > cfg.cap_n:
        raise operators.SizeCapError(f"N={ball_size(m, n)} exceeds --cap-N {cfg.cap_n}")
    report, summary = run_extremes(m, n, law, cfg.samples, cfg.seed, cfg.theta)
    stem = f"extremes_{cfg.law}_m{m}_n{n}"
    (cfg.out / f"{stem}.json").write_text(report.to_json() + "\n")
    values = report.rescaled_max if report.rescaled_max is not None else summary.maxima
    label = "rescaled_max" if report.rescaled_max is not None else "max"
    if cfg.format == "binary":
        operators.write_matrix_binary(cfg.out / f"{stem}_{label}.bin", values[:, None])
    else:
        _csv_table(cfg.out / f"{stem}_{label}.csv", (label,), [(v,) for v in values])
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


@dataclass
class Check:
    name: str
    status: str  # pass, fail, skipped: <why>
    observed: object = None
    required: object = None

    def to_dict(self):
        return {"name": self.name, "status": self.status, "observed": self.observed, "required": self.required}


@dataclass
class Suite:
    checks: list = field(default_factory=list)

    def add(self, name, ok, observed=None, required=None):
        self.checks.append(Check(name, "pass" if ok else "fail", _jsonable(observed), required))

    def skip(self, name, why):
        self.checks.append(Check(name, f"skipped: {why}"))

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self.checks)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def verify_greens(suite: Suite, ms, max_d):
    for m in ms:
        err = max(abs(greens.greens_infinite(m, d) - walks.green_series(m, d)) for d in range(max_d + 1))
        suite.add(f"greens_closed_vs_series[m={m}]", err <= 1e-8, err, "<= 1e-8")
    suite.add("greens_root_m3", greens.greens_infinite(3, 0) == 10.0, greens.greens_infinite(3, 0), "== 10")


def verify_tree(suite: Suite, ms, nmax):
    for m in ms:
        ok = True
        for n in range(nmax + 1):
            C = distance_class_counts(TreeParams(m, n)).counts
            N = ball_size(m, n)
            ok &= int(C.sum()) == N * N and int(C[0]) == N and all(int(c) % 2 == 0 for c in C[1:])
        suite.add(f"distance_class_sums[m={m}]", ok, ok, "sum C_k = N^2, C_0 = N, C_k even")


def verify_operators(suite: Suite, ms, nmax, cap, large_m: bool):
    for m in ms:
        worst_res, worst_diag = 0.0, -math.inf
        for n in range(nmax + 1):
            if ball_size(m, n) <= cap:
                t = build_tree(TreeParams(m, n))
                G = operators.finite_covariance(t, cap=cap)
                Gb = operators.gbar_matrix(t, cap=cap)
                worst_res = max(worst_res, G.residual, Gb.residual)
            diag = orbits.orbit_table(m, n).diagonal_by_depth()
            worst_diag = max(worst_diag, float(diag.max()) - greens.g00(m))
        suite.add(f"identity_residuals[m={m}]", worst_res <= 1e-8, worst_res, "<= 1e-8")
        suite.add(f"diag_below_G00[m={m}]", worst_diag <= 1e-10, worst_diag, "max G_n(x,x) - G(o,o) <= 1e-10")
        c1 = operators.bound_constants(m).c1
        worst = max(float(np.max(walks.exit_time_by_depth(m, n).first_moment / (n + 1 - np.arange(n + 1))))
                    for n in range(nmax + 1))
        suite.add(f"exit_time_ratio[m={m}]", worst <= c1, worst, f"<= C_1 = {c1:.6g}")
        name = f"finer_bound[m={m}]"
        if not large_m:
            suite.skip(name, "disabled")
        elif m < LARGE_M or not operators.bound_constants(m).large_m:
            suite.skip(name, "regime")
        else:
            s = covariance_summary_orbits(m, min(nmax, 4), True)
            suite.add(name, s["finer_bound_violations"] == 0, s["finer_bound_violations"], "== 0")
            floor = s["variance_floor"]
            suite.add(f"variance_floor[m={m}]", floor >= s["variance_floor_bound"], floor,
                      f">= {s['variance_floor_bound']:.6g}")


def verify_sampler(suite: Suite, samples, seed):
    t = build_tree(TreeParams(3, 3))
    cov = sampler.restricted_infinite_covariance(t)
    s = sampler.FieldSampler(cov)
    x = np.concatenate(list(s.blocks(samples, seed)))
    chol = float(np.abs(s.L @ s.L.T - cov.matrix).max())
    suite.add("cholesky_consistency", chol <= 1e-8, chol, "<= 1e-8")
    z = np.abs(x.mean(0)) / np.sqrt(np.diag(cov.matrix) / samples)
    suite.add("sample_means_5sigma", float(z.max()) <= 5, float(z.max()), "<= 5 sigma")
    D = t.distance_matrix()
    worst = 0.0
    for d in range(1, 2 * t.n + 1):
        i, j = np.argwhere(D == d)[0]
        prod = x[:, i] * x[:, j]
        se = prod.std(ddof=1) / math.sqrt(samples)
        worst = max(worst, abs(prod.mean() - cov.matrix[i, j]) / se)
    suite.add("sample_covariance_5sigma", worst <= 5, worst, "<= 5 sigma")


def verify_extremes(suite: Suite):
    r = extremes.correlations_by_distance(3, 20)
    suite.add("r_k_decreasing", bool(np.all(np.diff(r) < 0)), None, "strictly decreasing k=0..20")
    c = extremes.scaling_constants(3, 6)
    suite.add("scaling_identity", abs(c.a_n * c.b_n - c.g00) < 1e-12 and abs(c.A_n * c.B_n - 1) < 1e-12)
    tab = orbits.orbit_table(LARGE_M, 4)
    eta = float(np.abs(tab.R[tab.d > 0]).max())
    suite.add(f"R_n_uniform_bound[m={LARGE_M}]", eta < 0.5, eta, "< 0.5")


def cmd_verify(cfg: RunConfig) -> int:
    ms = [cfg.m] if cfg.m is not None else [3, 4, 5]
    nmax = 8 if cfg.n is None else cfg.n
    suite = Suite()
    verify_greens(suite, ms, cfg.max_d)
    verify_tree(suite, ms, nmax)
    verify_operators(suite, ms, nmax, cfg.cap_n, cfg.large_m_assertions)
    if cfg.large_m_assertions and cfg.m is None:
        verify_operators(suite, [LARGE_M], min(nmax, 4), cfg.cap_n, True)
    verify_sampler(suite, max(cfg.samples, 1000), cfg.seed)
    verify_extremes(suite)
    manifest = {"ok": suite.ok, "checks": [c.to_dict() for c in suite.checks]}
    _dump(cfg.out / "verify.json", manifest)
    for c in suite.checks:
        print(f"{c.status:>18}  {c.name}")
    return EXIT_OK if suite.ok else EXIT_ASSERT


# ---------------------------------------------------------------------------
# argument handling


COMMANDS = {"greens": cmd_greens, "covariance": cmd_covariance, "extremes": cmd_extremes, "verify": cmd_verify}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _theta(s: str):
    try:
        return tuple(float(v) for v in s.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad theta list {s!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="membrane-tree", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta", type=_theta, default=extremes.THETA_GRID)
    p.add_argument("--law", choices=sorted(LAW_NAMES), default="infinite")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--format", choices=("csv", "json", "binary"), default="csv")
    p.add_argument("--large-m-assertions", choices=("on", "off"), default="on")
    p.add_argument("--max-d", type=int, default=10)
    p.add_argument("--cap-N", dest="cap_n", type=int, default=5000)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_config(argv) -> RunConfig:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING)
    return RunConfig(
        command=a.command, m=a.m, n=a.n, samples=a.samples, seed=a.seed, theta=a.theta,
        out=a.out, format=a.format, large_m_assertions=a.large_m_assertions == "on",
        law=a.law, max_d=a.max_d, cap_n=a.cap_n,
    )


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"membrane-tree: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"membrane-tree: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (operators.SizeCapError, OverflowError) as exc:
        print(f"membrane-tree: resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except sampler.JitterError as exc:
        print(f"membrane-tree: sampling failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except OSError as exc:
        print(f"membrane-tree: I/O error: {exc}", file=sys.stderr)
        return EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
