"""Gaussian field sampling for the infinite- and finite-volume laws."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import greens
from .operators import CovarianceMatrix, finite_covariance
from .rng import REPLICATE_SIZE, replicate_rng, replicate_slices
from .tree import RegularTree

log = logging.getLogger(__name__)

LAWS = ("infinite_volume", "finite_volume", "finite_normalized")
JITTER_START = 1e-14
JITTER_CAP = 1e-8


class JitterError(np.linalg.LinAlgError):
    pass


def restricted_infinite_covariance(tree: RegularTree) -> CovarianceMatrix:
    """Matrix of G(d(x, y)) over V_n x V_n."""
    D = tree.distance_matrix(cap=max(tree.vertex_count, 1))
    table = greens.greens_table(tree.m, 2 * tree.n)
    return CovarianceMatrix(tree, "G_restricted", table[D])


def cholesky_with_jitter(cov: np.ndarray):
    """Lower Cholesky factor, adding eps*I (1e-14 up to 1e-8, relative to the
    largest diagonal entry) only if the plain factorization fails."""
    cov = np.asarray(cov, dtype=float)
    try:
        return sla.cholesky(cov, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.diag(cov).max())
    eps = JITTER_START
    while eps <= JITTER_CAP * (1 + 1e-12):
        try:
            L = sla.cholesky(cov + eps * scale * np.eye(cov.shape[0]), lower=True)
            log.warning("covariance needed jitter %.1e (relative)", eps)
            return L, eps * scale
        except np.linalg.LinAlgError:
            eps *= 10
    raise JitterError("covariance not positive definite within the jitter cap")


@dataclass(frozen=True, eq=False)
class FieldSampleBatch:
    """Rows are field configurations, columns vertices in BFS order."""

    law: str
    samples: np.ndarray
    seed: int
    jitter: float = 0.0
    tree: RegularTree | None = None
    meta: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    def to_csv(self, path) -> None:
        header = ",".join(str(i) for i in range(self.samples.shape[1]))
        np.savetxt(path, self.samples, delimiter=",", fmt="%.17g", header=header, comments="")

    def to_binary(self, path) -> None:
        from .operators import write_matrix_binary

        write_matrix_binary(path, self.samples)


class FieldSampler:
    """Factor once, then draw replicate blocks of rows on demand."""

    def __init__(self, cov: CovarianceMatrix | np.ndarray):
        M = cov.matrix if isinstance(cov, CovarianceMatrix) else np.asarray(cov, dtype=float)
        self.cov = M
        self.L, self.jitter = cholesky_with_jitter(M)

    def block(self, seed: int, replicate: int, rows: int) -> np.ndarray:
        z = replicate_rng(seed, replicate).standard_normal((rows, self.L.shape[0]))
        return z @ self.L.T

    def blocks(self, count: int, seed: int, size: int = REPLICATE_SIZE):
        for r, lo, hi in replicate_slices(count, size):
            yield self.block(seed, r, hi - lo)


def _law_of(role: str) -> str:
    return {"G_restricted": "infinite_volume", "G_n": "finite_volume"}.get(role, "custom")


def sample_fields(cov: CovarianceMatrix | np.ndarray, count: int, seed: int) -> FieldSampleBatch:
    if count < 1:
        raise ValueError("count must be >= 1")
    s = FieldSampler(cov)
    rows = np.concatenate(list(s.blocks(count, seed)))
    law = _law_of(cov.role) if isinstance(cov, CovarianceMatrix) else "custom"
    tree = cov.tree if isinstance(cov, CovarianceMatrix) else None
    return FieldSampleBatch(law, rows, seed, s.jitter, tree)


def normalize_field(batch: FieldSampleBatch, G_n: CovarianceMatrix | np.ndarray) -> FieldSampleBatch:
    """psi_x = phi_x / sqrt(G_n(x, x))."""
    if batch.law != "finite_volume":
        raise ValueError(f"normalization expects a finite-volume batch, got {batch.law}")
    diag = np.diag(G_n.matrix if isinstance(G_n, CovarianceMatrix) else np.asarray(G_n))
    if diag.shape[0] != batch.samples.shape[1]:
        raise ValueError("covariance and batch sizes differ")
    if not np.all(diag > 0):
        raise RuntimeError("nonpositive variance on the diagonal")
    return FieldSampleBatch("finite_normalized", batch.samples / np.sqrt(diag), batch.seed,
                            batch.jitter, batch.tree, dict(batch.meta))


def law_covariance(tree: RegularTree, law: str) -> np.ndarray:
    """Covariance matrix of the requested law on V_n."""
    if law == "infinite_volume":
        return restricted_infinite_covariance(tree).matrix
    G = finite_covariance(tree).matrix
    if law == "finite_volume":
        return G
    if law == "finite_normalized":
        s = 1 / np.sqrt(np.diag(G))
        return G * s[:, None] * s[None, :]
    raise ValueError(f"unknown law {law!r}")
