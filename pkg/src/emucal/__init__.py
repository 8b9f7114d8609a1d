"""Emulator-calibrated flux inversion toolkit.

Pipeline stages: maximin Latin hypercube design over transformed simulator
parameters, synthetic plume simulator, per-site mean-sweep + SVD reduction,
sparse stepwise linear emulation of the singular values, low-rank
reconstruction of sensitivity matrices, and a hierarchical adaptive
Metropolis sampler that propagates simulator-parameter uncertainty into
regional flux estimates.
"""
from .config import Config, load_config, reference_config_toml
from .design import DesignMatrix, generate_lhc, maximin_score, read_design, write_design
from .dimred import reduce_runs, variance_explained
from .emulator import fit_emulator, predict_singular_values, selection_proportions
from .errors import EmucalError, UsageError, ValidationError
from .experiment import build_study, replicate_report, run_both_chains
from .inversion import (
    Chain,
    InversionConfig,
    Priors,
    ci_overlap,
    posterior_summary,
    regional_total,
    run_chain,
    scaled_prior_shift,
)
from .params import ParameterSpace, ParameterSpec, ThetaVector, TurbulenceCoupling
from .reconstruct import TrainedArtifacts, reconstruct_H
from .simulator import simulate_H, synthesize_observations

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "Config",
    "DesignMatrix",
    "EmucalError",
    "InversionConfig",
    "ParameterSpace",
    "ParameterSpec",
    "Priors",
    "ThetaVector",
    "TrainedArtifacts",
    "TurbulenceCoupling",
    "UsageError",
    "ValidationError",
    "build_study",
    "ci_overlap",
    "fit_emulator",
    "generate_lhc",
    "load_config",
    "maximin_score",
    "posterior_summary",
    "predict_singular_values",
    "read_design",
    "reconstruct_H",
    "reduce_runs",
    "reference_config_toml",
    "regional_total",
    "replicate_report",
    "run_both_chains",
    "run_chain",
    "scaled_prior_shift",
    "selection_proportions",
    "simulate_H",
    "synthesize_observations",
    "variance_explained",
    "write_design",
    "__version__",
]
