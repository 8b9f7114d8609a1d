"""Command line pipeline driver.

Subcommands mirror the pipeline stages:

    emucal design    write the training design (CSV + manifest)
    emucal simulate  run the synthetic simulator over a design
    emucal train     reduce + fit the emulator, archive the artifacts
    emucal invert    run the paired inversions on an observation vector
    emucal e2e       full synthetic study with a known truth

Exit codes: 0 success, 1 usage error, 2 validation error (bad inputs or
artifacts), 3 runtime failure. Thread count comes from --threads or the
EMUCAL_THREADS environment variable (default 1) and bounds the worker pool
used for simulator runs; every other stage is sequential. All outputs are
plain CSV or JSON and are identical across reruns with the same seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .archive import load_trained, save_trained
from .config import Config, load_config
from .design import generate_lhc, maximin_score, read_design, write_design
from .dimred import reduce_runs, variance_explained
from .emulator import fit_emulator, selection_proportions
from .errors import ArtifactMismatch, EmucalError, ParseError, UsageError, ValidationError
from .experiment import (
    build_study,
    inversion_config,
    parameter_shifts,
    region_overlaps,
    replicate_report,
    run_both_chains,
)
from .inversion import Chain, posterior_summary, total_samples
from .params import INVARIANT_NAMES
from .reconstruct import TrainedArtifacts, stamp_artifacts
from .simulator import build_site_configs, read_run_archive, simulate_H, write_run_archive


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emucal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p):
        p.add_argument("--config", default=None, help="TOML config file (default: built-in reference setup)")
        p.add_argument("--seed", type=int, default=None, help="stage seed override")
        p.add_argument("--out", default="emucal_out", help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="simulator worker threads (default: EMUCAL_THREADS or 1)")

    p = sub.add_parser("design", help="generate the training design")
    common(p)

    p = sub.add_parser("simulate", help="run the simulator over a design")
    common(p)
    p.add_argument("--design", default=None, help="design CSV (default: OUT/design.csv)")

    p = sub.add_parser("train", help="reduce and fit the emulator from a run archive")
    common(p)
    p.add_argument("--design", default=None, help="design CSV (default: OUT/design.csv)")
    p.add_argument("--runs", default=None, help="run archive dir (default: OUT/runs)")

    p = sub.add_parser("invert", help="run both inversions on an observation vector")
    common(p)
    p.add_argument("--artifacts", default=None, help="trained archive dir (default: OUT/artifacts)")
    p.add_argument("--obs", required=True, help="observations CSV (site,obs,value)")

    p = sub.add_parser("e2e", help="full synthetic study with known truth")
    common(p)

    return parser


def resolve_threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        raw = os.environ.get("EMUCAL_THREADS", "1")
        try:
            n = int(raw)
        except ValueError:
            raise UsageError(f"EMUCAL_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise UsageError(f"thread count must be >= 1, got {n}")
    return n


def _load(args) -> Config:
    return load_config(args.config)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- observation and chain CSV helpers -------------------------------------

def write_observations(path: Path, y: np.ndarray, site_configs) -> None:
    with open(path, "w") as fh:
        fh.write("site,obs,value\n")
        k = 0
        for sc in site_configs:
            for o in range(sc.n_obs):
                fh.write(f"{sc.number},{o},{'%.17g' % y[k]}\n")
                k += 1


def read_observations(path: str | Path, artifacts: TrainedArtifacts) -> np.ndarray:
    """Read a site,obs,value CSV and stack it in the artifact site order."""
    per_site: dict[int, list[tuple[int, float]]] = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "site,obs,value":
            raise ParseError(f"{path}: expected header 'site,obs,value', got {header!r}")
        for line in fh:
            if not line.strip():
                continue
            site_s, obs_s, val_s = line.strip().split(",")
            per_site.setdefault(int(site_s), []).append((int(obs_s), float(val_s)))
    stacked = []
    for site in artifacts.basis.site_order:
        if site not in per_site:
            raise ParseError(f"{path}: no observations for site {site}")
        rows = sorted(per_site.pop(site))
        n_expected = artifacts.basis.sites[site].u.shape[0]
        if [o for o, _ in rows] != list(range(n_expected)):
            raise ParseError(
                f"{path}: site {site} must have obs indices 0..{n_expected - 1}"
            )
        stacked.extend(v for _, v in rows)
    if per_site:
        raise ParseError(f"{path}: unknown sites {sorted(per_site)}")
    return np.array(stacked)


def write_chain_csv(path: Path, chain: Chain) -> None:
    names = [f"x_{j:03d}" for j in range(chain.x.shape[1])]
    names += chain.theta_names + ["sigma_y", "log_post"]
    data = np.hstack([
        chain.x,
        chain.theta,
        chain.sigma_y[:, None],
        chain.log_post[:, None],
    ])
    header = "sample," + ",".join(names)
    rows = np.hstack([np.arange(chain.n_samples)[:, None], data])
    np.savetxt(path, rows, fmt="%.10g", delimiter=",", header=header, comments="")


# -- subcommands ------------------------------------------------------------

def cmd_design(args) -> int:
    config = _load(args)
    out = _outdir(args)
    space = config.space()
    seed = config.design.seed if args.seed is None else args.seed
    t0 = time.perf_counter()
    design = generate_lhc(
        config.design.n_runs, space, seed=seed,
        budget=config.design.exchange_budget,
        retries=config.design.feasibility_retries,
    )
    score = maximin_score(design)
    write_design(design, out / "design.csv")
    regions = config.build_regions()
    with open(out / "regions.csv", "w") as fh:
        fh.write("label,lat,lon,prior_flux\n")
        for i in range(regions.n):
            fh.write(
                f"{regions.labels[i]},{'%.17g' % regions.centroids[i, 0]},"
                f"{'%.17g' % regions.centroids[i, 1]},"
                f"{'%.17g' % regions.prior_flux[i]}\n"
            )
    manifest = {
        "n_runs": design.n_runs,
        "n_params": design.d,
        "seed": seed,
        "maximin_score": score,
        "elapsed_seconds": time.perf_counter() - t0,
        "parameters": list(space.names),
    }
    (out / "design_manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"design: {design.n_runs} runs x {design.d} parameters, "
          f"maximin score {score:.4f} -> {out / 'design.csv'}")
    return 0


def cmd_simulate(args) -> int:
    config = _load(args)
    out = _outdir(args)
    threads = resolve_threads(args)
    space = config.space()
    regions = config.build_regions()
    site_configs = build_site_configs(config.sites, regions)
    design_path = Path(args.design) if args.design else out / "design.csv"
    design = read_design(design_path, space)
    seed = 0 if args.seed is None else args.seed

    def one(p: int):
        theta = design.theta(p)
        h = simulate_H(theta, site_configs, seed, settings=config.simulator,
                       space=space, run_index=p)
        return p, theta, h

    indices = list(range(design.n_runs + 1))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(one, indices))
    else:
        runs = [one(p) for p in indices]
    manifest = write_run_archive(out / "runs", runs, site_configs, space, seed)
    print(f"simulate: {len(runs)} runs (default + {design.n_runs}) -> {manifest.parent}")
    return 0


def cmd_train(args) -> int:
    config = _load(args)
    out = _outdir(args)
    space = config.space()
    regions = config.build_regions()
    site_configs = build_site_configs(config.sites, regions)
    design_path = Path(args.design) if args.design else out / "design.csv"
    runs_dir = Path(args.runs) if args.runs else out / "runs"
    design = read_design(design_path, space)
    archive_runs = read_run_archive(runs_dir, site_configs, space)
    if len(archive_runs) != design.n_runs + 1:
        raise ArtifactMismatch(
            f"design has {design.n_runs + 1} rows but archive holds {len(archive_runs)} runs"
        )
    for p, theta, _ in archive_runs:
        if not np.allclose(theta.flatten(), design.values[p], rtol=0, atol=1e-12):
            raise ArtifactMismatch(f"run {p}: archived theta differs from design row")

    basis, means, tables = reduce_runs(
        [(p, h) for p, _, h in archive_runs], energy_cut=config.emulator.energy_cut
    )
    models = fit_emulator(design, tables, delta=config.emulator.aic_delta)
    digest = stamp_artifacts(basis, models, means)
    artifacts = TrainedArtifacts(
        space=space, basis=basis, means=means, models=models, pipeline_hash=digest
    )
    ark = save_trained(out / "artifacts", artifacts, tables)

    weights = {s: variance_explained(basis.sites[s].s) for s in basis.site_order}
    unweighted = selection_proportions(models)
    weighted = selection_proportions(models, weights)
    for fname, props in [
        ("proportions_unweighted.csv", unweighted),
        ("proportions_weighted.csv", weighted),
    ]:
        with open(out / fname, "w") as fh:
            fh.write("site,INT," + ",".join(INVARIANT_NAMES) + ",X,Y,Z\n")
            for site in basis.site_order:
                p = props[site]
                row = [p["INT"]] + [p[n] for n in INVARIANT_NAMES]
                row += [p[f"X_{site}"], p[f"Y_{site}"], p[f"Z_{site}"]]
                fh.write(f"{site}," + ",".join(f"{v:.6f}" for v in row) + "\n")
    print(f"train: {len(basis.site_order)} sites, pipeline {digest[:12]} -> {ark}")
    return 0


def cmd_invert(args) -> int:
    config = _load(args)
    out = _outdir(args)
    artifacts, _ = load_trained(Path(args.artifacts) if args.artifacts else out / "artifacts")
    y = read_observations(args.obs, artifacts)
    regions = config.build_regions()
    if regions.n != artifacts.basis.sites[artifacts.basis.site_order[0]].v.shape[0]:
        raise ArtifactMismatch(
            "configured region count does not match the trained artifacts"
        )
    seed = config.inversion.seed if args.seed is None else args.seed
    base = inversion_config(config, True, seed)
    unc, fix = run_both_chains(artifacts, y, base, regions.prior_flux,
                               baseline_sigma_y=config.inversion.baseline_sigma_y)

    write_chain_csv(out / "chain_uncertain.csv", unc)
    write_chain_csv(out / "chain_fixed.csv", fix)

    space = artifacts.space
    shifts = parameter_shifts(unc, space)
    with open(out / "parameter_shifts.csv", "w") as fh:
        fh.write("parameter,shift,posterior_mean,ci_lo,ci_hi,prior_lo,prior_hi\n")
        for i, name in enumerate(space.names):
            sp = space.specs[i]
            summ = posterior_summary(unc.theta[:, i])
            fh.write(f"{name},{shifts[name]:.6f},{summ.mean!r},{summ.lo!r},"
                     f"{summ.hi!r},{sp.lo!r},{sp.hi!r}\n")

    overlaps = region_overlaps(unc, fix)
    with open(out / "region_overlaps.csv", "w") as fh:
        fh.write("region,overlap_pct\n")
        for j in range(overlaps.size):
            fh.write(f"{j},{overlaps[j]:.4f}\n")

    tot_unc = posterior_summary(total_samples(unc))
    tot_fix = posterior_summary(total_samples(fix))
    summary = {
        "total_flux": {
            "with_uncertainty": tot_unc._asdict(),
            "without_uncertainty": tot_fix._asdict(),
        },
        "sigma_y": posterior_summary(unc.sigma_y)._asdict(),
        "parameter_shifts": shifts,
        "region_overlap_mean": float(overlaps.mean()),
        "n_samples": int(unc.n_samples),
        "accept_rate_range": [float(unc.accept_rates.min()), float(unc.accept_rates.max())],
        "seed": seed,
    }
    (out / "inversion_summary.json").write_text(json.dumps(summary, indent=2))
    print(f"invert: {unc.n_samples} samples/chain; total flux "
          f"{tot_unc.mean:.3f} [{tot_unc.lo:.3f}, {tot_unc.hi:.3f}] with uncertainty, "
          f"{tot_fix.mean:.3f} [{tot_fix.lo:.3f}, {tot_fix.hi:.3f}] w/o -> {out}")
    return 0


def cmd_e2e(args) -> int:
    config = _load(args)
    out = _outdir(args)
    seed = 0 if args.seed is None else args.seed

    stage = "build-study"
    try:
        study = build_study(config, weather_seed=seed)
        stage = "invert"
        report = replicate_report(
            study,
            overrides=config.observations.truth,
            noise_sd=config.observations.noise_sd,
            obs_seed=config.observations.seed,
            chain_seed=config.inversion.seed if args.seed is None else args.seed,
        )
    except Exception as exc:
        print(f"e2e stage '{stage}' failed: {exc}", file=sys.stderr)
        raise
    report["train_seconds"] = study.train_seconds
    (out / "e2e_report.json").write_text(json.dumps(report, indent=2))
    print(f"e2e: trained in {study.train_seconds:.1f}s, "
          f"{report['n_samples']} samples/chain")
    for name, p in report["parameters"].items():
        if name in config.observations.truth:
            print(f"  {name}: true {p['true']:.4g}, posterior {p['mean']:.4g} "
                  f"[{p['ci_lo']:.4g}, {p['ci_hi']:.4g}] "
                  f"{'covered' if p['covered'] else 'MISSED'}")
    tf = report["total_flux"]
    print(f"  total flux: true {tf['true']:.3f}, with-uncertainty CI width "
          f"{tf['uncertain_width']:.3f}, fixed-H width {tf['fixed_width']:.3f}")
    print(f"  report -> {out / 'e2e_report.json'}")
    return 0


_COMMANDS = {
    "design": cmd_design,
    "simulate": cmd_simulate,
    "train": cmd_train,
    "invert": cmd_invert,
    "e2e": cmd_e2e,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required (design, simulate, train, invert, e2e)")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (EmucalError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
