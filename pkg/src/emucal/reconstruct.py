"""Rebuild a full sensitivity matrix from the trained artifacts.

For any theta inside the plausible box, each site's block is

    U0 diag(predicted loadings) V0^T + mean-sweep block

with blocks stacked in canonical site order. Reconstructions may carry
small negative entries: the emulator works in centered space, and clamping
would break the linearity the inversion relies on.

pipeline_hash binds the three artifact families (bases, mean sweeps,
models) produced by one training run; reconstruct_H refuses to combine
artifacts whose stored hashes disagree.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .dimred import MeanSweepSet, ReducedBasis
from .emulator import EmulatorModel, predict_singular_values
from .errors import ArtifactMismatch, InvalidTheta
from .params import ParameterSpace, ThetaVector, U_CLIP
from .simulator import SensitivityMatrix


def _artifact_text(basis: ReducedBasis, models: EmulatorModel, means: MeanSweepSet) -> bytes:
    """Canonical text serialization used for hashing: code- and
    platform-independent because it goes through fixed decimal formatting."""
    parts: list[str] = []

    def fmt(arr):
        return ",".join("%.17g" % v for v in np.asarray(arr, dtype=float).ravel())

    for site in basis.site_order:
        b = basis.sites[site]
        parts += [f"site {site}", fmt(b.u), fmt(b.s), fmt(b.v)]
        m = means.sites[site]
        parts += [fmt(m.row_means), fmt(m.col_means), "%.17g" % m.overall]
        emu = models.sites[site]
        parts.append(";".join(emu.columns))
        for f in emu.fits:
            parts += [
                "".join("1" if b else "0" for b in f.selected),
                fmt(f.coef),
                "%.17g" % f.resid_var,
                "%.17g" % f.aic,
            ]
    return "\n".join(parts).encode()


def pipeline_hash(basis: ReducedBasis, models: EmulatorModel, means: MeanSweepSet) -> str:
    """Stable content digest over the three trained artifact families."""
    return hashlib.sha256(_artifact_text(basis, models, means)).hexdigest()


def stamp_artifacts(basis: ReducedBasis, models: EmulatorModel, means: MeanSweepSet) -> str:
    """Compute the pipeline hash and store it on each artifact."""
    digest = pipeline_hash(basis, models, means)
    basis.pipeline_hash = digest
    models.pipeline_hash = digest
    means.pipeline_hash = digest
    return digest


def _check_same_pipeline(basis, models, means):
    hashes = {
        h for h in (basis.pipeline_hash, models.pipeline_hash, means.pipeline_hash)
        if h is not None
    }
    if len(hashes) > 1:
        raise ArtifactMismatch(f"artifacts carry different pipeline hashes: {sorted(hashes)}")


def reconstruct_H(
    theta: ThetaVector,
    basis: ReducedBasis,
    models: EmulatorModel,
    means: MeanSweepSet,
    space: ParameterSpace,
    u_clip: float = U_CLIP,
) -> SensitivityMatrix:
    """Emulated sensitivity matrix at theta, blocks in canonical site order."""
    _check_same_pipeline(basis, models, means)
    if not space.validate_theta(theta):
        raise InvalidTheta("theta fails range or turbulence validation")
    blocks = []
    slices = {}
    start = 0
    for site in basis.site_order:
        b = basis.sites[site]
        d = predict_singular_values(theta, models, site, space, u_clip)
        block = (b.u * d) @ b.v.T + means.sites[site].matrix()
        blocks.append(block)
        slices[site] = slice(start, start + block.shape[0])
        start += block.shape[0]
    return SensitivityMatrix(
        values=np.vstack(blocks),
        site_order=list(basis.site_order),
        block_slices=slices,
    )


def default_H(basis: ReducedBasis, means: MeanSweepSet) -> SensitivityMatrix:
    """The stored default-run matrix H0, rebuilt exactly from the bases
    (U0 diag(s0) V0^T undoes the centering; no emulator involved)."""
    _check_same_pipeline(basis, basis, means)
    blocks = []
    slices = {}
    start = 0
    for site in basis.site_order:
        b = basis.sites[site]
        block = (b.u * b.s) @ b.v.T + means.sites[site].matrix()
        blocks.append(block)
        slices[site] = slice(start, start + block.shape[0])
        start += block.shape[0]
    return SensitivityMatrix(
        values=np.vstack(blocks),
        site_order=list(basis.site_order),
        block_slices=slices,
    )


@dataclass
class TrainedArtifacts:
    """Everything the inversion needs, bound by one pipeline hash."""

    space: ParameterSpace
    basis: ReducedBasis
    means: MeanSweepSet
    models: EmulatorModel
    pipeline_hash: str

    def reconstruct(self, theta: ThetaVector, u_clip: float = U_CLIP) -> SensitivityMatrix:
        return reconstruct_H(theta, self.basis, self.models, self.means, self.space, u_clip)
