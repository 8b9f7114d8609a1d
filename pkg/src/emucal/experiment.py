"""End-to-end synthetic study driver.

Wires the stages together: design generation, simulator runs over the
design, dimension reduction, emulator fitting, truth synthesis and the
paired inversions (theta sampled vs theta frozen at the defaults). The
command line e2e mode and the long-running validation studies both build
on these helpers, so the orchestration logic lives in exactly one place.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .config import Config
from .design import DesignMatrix, generate_lhc
from .dimred import SingularValueTable, reduce_runs
from .emulator import fit_emulator
from .inversion import (
    Chain,
    InversionConfig,
    Priors,
    ci_overlap,
    posterior_summary,
    run_chain,
    scaled_prior_shift,
    total_samples,
)
from .params import ParameterSpace, ThetaVector
from .reconstruct import TrainedArtifacts, stamp_artifacts
from .simulator import (
    SensitivityMatrix,
    SiteConfig,
    build_site_configs,
    simulate_H,
    synthesize_observations,
)


@dataclass
class Study:
    """A trained pipeline bundle ready for repeated inversions."""

    config: Config
    space: ParameterSpace
    site_configs: list[SiteConfig]
    prior_flux: np.ndarray
    design: DesignMatrix
    artifacts: TrainedArtifacts
    tables: SingularValueTable
    weather_seed: int
    train_seconds: float


def build_study(config: Config, weather_seed: int = 0) -> Study:
    """Design, simulate and train once; deterministic per (config, seed)."""
    t0 = time.perf_counter()
    space = config.space()
    regions = config.build_regions()
    site_configs = build_site_configs(config.sites, regions)
    design = generate_lhc(
        config.design.n_runs,
        space,
        seed=config.design.seed,
        budget=config.design.exchange_budget,
        retries=config.design.feasibility_retries,
    )
    runs = []
    for p in range(design.n_runs + 1):
        h = simulate_H(
            design.theta(p),
            site_configs,
            weather_seed,
            settings=config.simulator,
            space=space,
            run_index=p,
        )
        runs.append((p, h))
    basis, means, tables = reduce_runs(runs, energy_cut=config.emulator.energy_cut)
    models = fit_emulator(design, tables, delta=config.emulator.aic_delta)
    digest = stamp_artifacts(basis, models, means)
    artifacts = TrainedArtifacts(
        space=space, basis=basis, means=means, models=models, pipeline_hash=digest
    )
    return Study(
        config=config,
        space=space,
        site_configs=site_configs,
        prior_flux=regions.prior_flux,
        design=design,
        artifacts=artifacts,
        tables=tables,
        weather_seed=weather_seed,
        train_seconds=time.perf_counter() - t0,
    )


def truth_theta(space: ParameterSpace, overrides: dict[str, float]) -> ThetaVector:
    """Default parameter vector with named entries replaced."""
    vec = space.defaults.copy()
    for name, value in overrides.items():
        vec[space.index(name)] = float(value)
    space.validate_vector(vec, strict=True)
    return space.theta_from_vector(vec)


def true_sensitivity(study: Study, theta_true: ThetaVector) -> SensitivityMatrix:
    """Simulator output at the true parameters, same weather as training."""
    return simulate_H(
        theta_true,
        study.site_configs,
        study.weather_seed,
        settings=study.config.simulator,
        space=study.space,
    )


def draw_truth_scalings(study: Study, seed: int) -> np.ndarray:
    """True region scalings: ones, or lognormal jitter if x_true_sd > 0."""
    sd = study.config.observations.x_true_sd
    n = study.prior_flux.size
    if sd <= 0.0:
        return np.ones(n)
    rng = np.random.default_rng(seed)
    return np.exp(rng.normal(0.0, sd, size=n))


def observe(
    study: Study, h_true: SensitivityMatrix, x_scaling: np.ndarray, noise_sd: float, seed: int
) -> np.ndarray:
    """Noisy observations from the true H and true absolute fluxes."""
    return synthesize_observations(h_true, study.prior_flux * x_scaling, noise_sd, seed)


def inversion_config(config: Config, sample_theta: bool, seed: int) -> InversionConfig:
    inv = config.inversion
    return InversionConfig(
        n_iter=inv.n_iter,
        burn_in=inv.burn_in,
        thin=inv.thin,
        batch_size=inv.batch_size,
        accept_lo=inv.accept_lo,
        accept_hi=inv.accept_hi,
        tune_factor=inv.tune_factor,
        priors=Priors(
            x_mean=inv.x_prior_mean, x_sd=inv.x_prior_sd, sigma_y_range=inv.sigma_y_range
        ),
        seed=seed,
        sample_theta=sample_theta,
        audit_every=inv.audit_every,
        init_sd_x=inv.init_sd_x,
        init_sd_theta=inv.init_sd_theta,
        init_sd_sigma=inv.init_sd_sigma,
    )


def run_both_chains(
    artifacts: TrainedArtifacts,
    y: np.ndarray,
    base: InversionConfig,
    prior_flux: np.ndarray | None = None,
    baseline_sigma_y: float | None = None,
) -> tuple[Chain, Chain]:
    """The paired inversion: theta sampled, then theta frozen at defaults.

    When baseline_sigma_y is given, the frozen chain also pins the
    observation error scale there, making it the classical inversion in
    which both the sensitivity matrix and the error budget are taken as
    known. The frozen chain gets a decorrelated seed so the two runs share
    no random stream.
    """
    unc = run_chain(y, artifacts, replace(base, sample_theta=True), prior_flux=prior_flux)
    fix_seed = int(np.random.default_rng((base.seed, 0xF1)).integers(2**31 - 1))
    fix_cfg = replace(base, sample_theta=False, seed=fix_seed)
    if baseline_sigma_y is not None:
        fix_cfg = replace(
            fix_cfg,
            priors=replace(fix_cfg.priors,
                           sigma_y_range=(baseline_sigma_y, baseline_sigma_y)),
        )
    fix = run_chain(y, artifacts, fix_cfg, prior_flux=prior_flux)
    return unc, fix


def parameter_shifts(chain: Chain, space: ParameterSpace) -> dict[str, float]:
    """Posterior-mean shift of each simulator parameter, scaled by its
    prior width."""
    shifts = {}
    for i, name in enumerate(space.names):
        sp = space.specs[i]
        shifts[name] = scaled_prior_shift((sp.lo, sp.hi), float(chain.theta[:, i].mean()))
    return shifts


def region_overlaps(chain_a: Chain, chain_b: Chain) -> np.ndarray:
    """Per-region overlap (percent IoU) of 90% credible intervals."""
    n = chain_a.x.shape[1]
    out = np.empty(n)
    for j in range(n):
        sa = posterior_summary(chain_a.x[:, j])
        sb = posterior_summary(chain_b.x[:, j])
        out[j] = ci_overlap((sa.lo, sa.hi), (sb.lo, sb.hi))
    return out


def replicate_report(
    study: Study,
    overrides: dict[str, float],
    noise_sd: float,
    obs_seed: int,
    chain_seed: int,
    base: InversionConfig | None = None,
) -> dict:
    """One full synthetic replicate: truth, observations, both chains,
    recovery metrics keyed for JSON serialization."""
    theta_true = truth_theta(study.space, overrides)
    h_true = true_sensitivity(study, theta_true)
    x_true = draw_truth_scalings(study, obs_seed)
    y = observe(study, h_true, x_true, noise_sd, obs_seed)
    if base is None:
        base = inversion_config(study.config, True, chain_seed)
    else:
        base = replace(base, seed=chain_seed)
    unc, fix = run_both_chains(study.artifacts, y, base, study.prior_flux,
                               baseline_sigma_y=study.config.inversion.baseline_sigma_y)

    space = study.space
    params = {}
    for i, name in enumerate(space.names):
        sp = space.specs[i]
        summ = posterior_summary(unc.theta[:, i])
        true_val = float(theta_true.flatten()[i])
        params[name] = {
            "true": true_val,
            "mean": summ.mean,
            "ci_lo": summ.lo,
            "ci_hi": summ.hi,
            "covered": bool(summ.lo <= true_val <= summ.hi),
            "ci_width": summ.hi - summ.lo,
            "prior_width": sp.hi - sp.lo,
            "shift": scaled_prior_shift((sp.lo, sp.hi), summ.mean),
        }

    true_total = float(study.prior_flux @ x_true)
    tot_unc = posterior_summary(total_samples(unc))
    tot_fix = posterior_summary(total_samples(fix))
    overlaps = region_overlaps(unc, fix)
    x_mean = unc.x.mean(axis=0)
    report = {
        "parameters": params,
        "total_flux": {
            "true": true_total,
            "uncertain": tot_unc._asdict(),
            "fixed": tot_fix._asdict(),
            "uncertain_width": tot_unc.hi - tot_unc.lo,
            "fixed_width": tot_fix.hi - tot_fix.lo,
        },
        "x_rmse": float(np.sqrt(np.mean((x_mean - x_true) ** 2))),
        "sigma_y": posterior_summary(unc.sigma_y)._asdict(),
        "noise_sd_true": noise_sd,
        "region_overlap_mean": float(overlaps.mean()),
        "region_overlap_min": float(overlaps.min()),
        "accept_rates": {
            "min": float(unc.accept_rates.min()),
            "max": float(unc.accept_rates.max()),
        },
        "n_samples": int(unc.n_samples),
    }
    return report
