"""Mean sweep, per-site SVD of the default run, and run projection.

Each site's block of the default sensitivity matrix is centered by an
additive two-way mean sweep (row mean + column mean - overall mean), the
unique additive decomposition whose residual is doubly centered. The
centered default block is decomposed once by SVD; every other training
run's centered block is then projected onto those fixed bases, giving one
singular-value vector per (site, run) that the emulator learns to predict.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllZero,
    ConvergenceFailure,
    DimensionMismatch,
    EmptyBlock,
)


@dataclass
class MeanSweep:
    """Additive mean decomposition of one site's default block."""

    row_means: np.ndarray
    col_means: np.ndarray
    overall: float

    def matrix(self) -> np.ndarray:
        return self.row_means[:, None] + self.col_means[None, :] - self.overall

    def center(self, block: np.ndarray) -> np.ndarray:
        block = np.asarray(block, dtype=float)
        if block.shape != (self.row_means.size, self.col_means.size):
            raise DimensionMismatch(
                f"block {block.shape} does not match mean sweep "
                f"({self.row_means.size}, {self.col_means.size})"
            )
        return block - self.matrix()


def compute_mean_sweep(block: np.ndarray) -> MeanSweep:
    """Row, column and overall means of a block; EmptyBlock if degenerate."""
    block = np.asarray(block, dtype=float)
    if block.ndim != 2 or block.shape[0] == 0 or block.shape[1] == 0:
        raise EmptyBlock(f"cannot sweep means of shape {block.shape}")
    return MeanSweep(
        row_means=block.mean(axis=1),
        col_means=block.mean(axis=0),
        overall=float(block.mean()),
    )


@dataclass
class SiteBasis:
    """Fixed SVD bases of one site's centered default block."""

    u: np.ndarray  # (n_obs, r), orthonormal columns
    s: np.ndarray  # (r,), descending
    v: np.ndarray  # (n_regions, r), orthonormal columns

    @property
    def r(self) -> int:
        return self.s.size


def svd_default(centered_block: np.ndarray) -> SiteBasis:
    centered_block = np.asarray(centered_block, dtype=float)
    if not np.all(np.isfinite(centered_block)):
        raise ConvergenceFailure("centered block contains non-finite entries")
    try:
        u, s, vt = np.linalg.svd(centered_block, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"SVD failed to converge: {exc}") from exc
    return SiteBasis(u=u, s=s, v=vt.T)


def project_run(centered_block: np.ndarray, basis: SiteBasis) -> np.ndarray:
    """diag(U0^T Hc V0): the per-singular-value loadings of one run."""
    centered_block = np.asarray(centered_block, dtype=float)
    if centered_block.shape != (basis.u.shape[0], basis.v.shape[0]):
        raise DimensionMismatch(
            f"block {centered_block.shape} does not match basis "
            f"({basis.u.shape[0]}, {basis.v.shape[0]})"
        )
    return np.einsum("ik,ij,jk->k", basis.u, centered_block, basis.v, optimize=True)


def variance_explained(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    total = float(np.sum(s * s))
    if total == 0.0:
        raise AllZero("all singular values are zero")
    return s * s / total


def truncate_basis(basis: SiteBasis, energy: float) -> SiteBasis:
    """Keep the smallest leading k with cumulative variance_explained >= energy."""
    if not 0.0 < energy <= 1.0:
        raise ValueError(f"energy threshold must be in (0, 1], got {energy}")
    cum = np.cumsum(variance_explained(basis.s))
    k = int(np.searchsorted(cum, energy) + 1)
    k = min(k, basis.r)
    return SiteBasis(u=basis.u[:, :k], s=basis.s[:k], v=basis.v[:, :k])


@dataclass
class ReducedBasis:
    """Per-site bases in canonical site order."""

    sites: dict[int, SiteBasis]
    site_order: list[int]
    pipeline_hash: str | None = None


@dataclass
class MeanSweepSet:
    sites: dict[int, MeanSweep]
    site_order: list[int]
    pipeline_hash: str | None = None


@dataclass
class SingularValueTable:
    """Per site: (n_runs + 1) x r matrix of projected loadings, run 0 first."""

    sites: dict[int, np.ndarray]
    site_order: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.site_order:
            self.site_order = sorted(self.sites)


def reduce_runs(runs, energy_cut: float | None = None):
    """Run the full dimension-reduction stage over an ordered training set.

    runs is a list of (run_index, SensitivityMatrix) with run 0 the
    default. Returns (ReducedBasis, MeanSweepSet, SingularValueTable).
    """
    if not runs or runs[0][0] != 0:
        raise EmptyBlock("training set must start with the default run 0")
    h0 = runs[0][1]
    site_order = list(h0.site_order)
    bases: dict[int, SiteBasis] = {}
    means: dict[int, MeanSweep] = {}
    tables: dict[int, np.ndarray] = {}
    for site in site_order:
        block0 = h0.block(site)
        sweep = compute_mean_sweep(block0)
        basis = svd_default(sweep.center(block0))
        if energy_cut is not None:
            basis = truncate_basis(basis, energy_cut)
        rows = np.empty((len(runs), basis.r))
        for p, (_, h_p) in enumerate(runs):
            rows[p] = project_run(sweep.center(h_p.block(site)), basis)
        bases[site] = basis
        means[site] = sweep
        tables[site] = rows
    return (
        ReducedBasis(sites=bases, site_order=site_order),
        MeanSweepSet(sites=means, site_order=site_order),
        SingularValueTable(sites=tables, site_order=site_order),
    )
