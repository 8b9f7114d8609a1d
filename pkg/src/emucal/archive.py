"""On-disk archive of a trained reduction + emulator bundle.

Layout of an archive directory:

    manifest.json             pipeline hash, site order, parameter table,
                              turbulence coupling
    basis_site{nn}_U0.csv     left singular vectors of the default run
    basis_site{nn}_V0.csv     right singular vectors
    basis_site{nn}_s0.csv     default-run singular values
    means_site{nn}.csv        mean sweep (kind,index,value rows)
    singvals_site{nn}.csv     projected singular values, one row per run
    model_site{nn}_bits.csv   0/1 selected-term table, one row per s index
    model_site{nn}_coef.csv   coefficients plus resid_var and aic columns

All floats are written with repr-exact formatting, so a load/save cycle
reproduces the files byte for byte and the stored pipeline hash stays
valid. load_trained recomputes the hash from the loaded arrays and refuses
archives whose manifest hash disagrees.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dimred import MeanSweep, MeanSweepSet, ReducedBasis, SingularValueTable, SiteBasis
from .emulator import EmulatorModel, SingularValueFit, SiteEmulator
from .errors import ArtifactMismatch, ParseError
from .params import ParameterSpace, ParameterSpec, TurbulenceCoupling
from .reconstruct import TrainedArtifacts, pipeline_hash

FLOAT_FMT = "%.17g"


def _write_matrix(path: Path, values: np.ndarray, header: str) -> None:
    np.savetxt(path, np.atleast_2d(values), fmt=FLOAT_FMT, delimiter=",",
               header=header, comments="")


def _read_matrix(path: Path, n_cols: int) -> np.ndarray:
    values = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if values.shape[1] != n_cols:
        raise ParseError(f"{path.name}: expected {n_cols} columns, found {values.shape[1]}")
    return values


def save_trained(
    out_dir: str | Path, artifacts: TrainedArtifacts, tables: SingularValueTable
) -> Path:
    """Write the full trained bundle to out_dir (created if missing)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    basis, means, models = artifacts.basis, artifacts.means, artifacts.models

    for site in basis.site_order:
        b = basis.sites[site]
        tag = f"site{site:02d}"
        _write_matrix(out / f"basis_{tag}_U0.csv", b.u,
                      ",".join(f"u{k:03d}" for k in range(b.u.shape[1])))
        _write_matrix(out / f"basis_{tag}_V0.csv", b.v,
                      ",".join(f"v{k:03d}" for k in range(b.v.shape[1])))
        _write_matrix(out / f"basis_{tag}_s0.csv", b.s[None, :],
                      ",".join(f"s{k:03d}" for k in range(b.s.size)))

        sweep = means.sites[site]
        with open(out / f"means_{tag}.csv", "w") as fh:
            fh.write("kind,index,value\n")
            for i, v in enumerate(sweep.row_means):
                fh.write(f"row,{i},{FLOAT_FMT % v}\n")
            for i, v in enumerate(sweep.col_means):
                fh.write(f"col,{i},{FLOAT_FMT % v}\n")
            fh.write(f"overall,0,{FLOAT_FMT % sweep.overall}\n")

        table = tables.sites[site]
        run_col = np.arange(table.shape[0])[:, None].astype(float)
        _write_matrix(out / f"singvals_{tag}.csv", np.hstack([run_col, table]),
                      "p," + ",".join(f"s{k:03d}" for k in range(table.shape[1])))

        emu = models.sites[site]
        bits = np.array([fit.selected.astype(float) for fit in emu.fits])
        coef = np.array([fit.coef for fit in emu.fits])
        extra = np.array([[fit.resid_var, fit.aic] for fit in emu.fits])
        cols = ",".join(emu.columns)
        _write_matrix(out / f"model_{tag}_bits.csv", bits, cols)
        _write_matrix(out / f"model_{tag}_coef.csv", np.hstack([coef, extra]),
                      cols + ",resid_var,aic")

    space = artifacts.space
    manifest = {
        "pipeline_hash": artifacts.pipeline_hash,
        "site_order": list(basis.site_order),
        "parameters": [
            {
                "name": sp.name,
                "kind": sp.kind,
                "transform": sp.transform,
                "default": sp.default,
                "lo": sp.lo,
                "hi": sp.hi,
                "site": sp.site,
            }
            for sp in space.specs
        ],
        "turbulence": {
            "tau_u": space.coupling.tau_u,
            "tau_w": space.coupling.tau_w,
            "sigma_u_default": space.coupling.sigma_u_default,
            "sigma_w_default": space.coupling.sigma_w_default,
            "sigma_u_range": list(space.coupling.sigma_u_range),
            "sigma_w_range": list(space.coupling.sigma_w_range),
            "k_u_range": list(space.coupling.k_u_range),
            "k_w_range": list(space.coupling.k_w_range),
        },
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return out


def load_trained(in_dir: str | Path) -> tuple[TrainedArtifacts, SingularValueTable]:
    """Load a bundle written by save_trained and verify its pipeline hash."""
    src = Path(in_dir)
    manifest_path = src / "manifest.json"
    if not manifest_path.exists():
        raise ParseError(f"no manifest.json under {src}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)

    try:
        specs = tuple(
            ParameterSpec(
                name=p["name"], kind=p["kind"], transform=p["transform"],
                default=float(p["default"]), lo=float(p["lo"]), hi=float(p["hi"]),
                site=p["site"],
            )
            for p in manifest["parameters"]
        )
        turb = manifest["turbulence"]
        coupling = TurbulenceCoupling(
            tau_u=float(turb["tau_u"]),
            tau_w=float(turb["tau_w"]),
            sigma_u_default=float(turb["sigma_u_default"]),
            sigma_w_default=float(turb["sigma_w_default"]),
            sigma_u_range=tuple(turb["sigma_u_range"]),
            sigma_w_range=tuple(turb["sigma_w_range"]),
            k_u_range=tuple(turb["k_u_range"]),
            k_w_range=tuple(turb["k_w_range"]),
        )
        site_order = [int(s) for s in manifest["site_order"]]
        stored_hash = manifest["pipeline_hash"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed manifest.json: {exc}") from exc
    space = ParameterSpace(specs, coupling)

    bases = {}
    sweeps = {}
    tables = {}
    emus = {}
    for site in site_order:
        tag = f"site{site:02d}"
        u = np.loadtxt(src / f"basis_{tag}_U0.csv", delimiter=",", skiprows=1, ndmin=2)
        v = np.loadtxt(src / f"basis_{tag}_V0.csv", delimiter=",", skiprows=1, ndmin=2)
        s = _read_matrix(src / f"basis_{tag}_s0.csv", u.shape[1])[0]
        bases[site] = SiteBasis(u=u, s=s, v=v)

        rows = []
        cols = []
        overall = 0.0
        with open(src / f"means_{tag}.csv") as fh:
            header = fh.readline().strip()
            if header != "kind,index,value":
                raise ParseError(f"means_{tag}.csv: unexpected header {header!r}")
            for line in fh:
                kind, _, value = line.strip().split(",")
                if kind == "row":
                    rows.append(float(value))
                elif kind == "col":
                    cols.append(float(value))
                elif kind == "overall":
                    overall = float(value)
                else:
                    raise ParseError(f"means_{tag}.csv: unknown kind {kind!r}")
        sweeps[site] = MeanSweep(
            row_means=np.array(rows), col_means=np.array(cols), overall=overall
        )

        table = _read_matrix(src / f"singvals_{tag}.csv", 1 + s.size)
        tables[site] = table[:, 1:]

        with open(src / f"model_{tag}_bits.csv") as fh:
            columns = fh.readline().strip().split(",")
        bits = _read_matrix(src / f"model_{tag}_bits.csv", len(columns))
        coef_all = _read_matrix(src / f"model_{tag}_coef.csv", len(columns) + 2)
        param_indices = [space.index(name) for name in columns[1:]]
        fits = [
            SingularValueFit(
                selected=bits[k].astype(bool),
                coef=coef_all[k, : len(columns)],
                resid_var=float(coef_all[k, len(columns)]),
                aic=float(coef_all[k, len(columns) + 1]),
            )
            for k in range(bits.shape[0])
        ]
        emus[site] = SiteEmulator(
            site=site, columns=list(columns), param_indices=param_indices, fits=fits
        )

    basis = ReducedBasis(sites=bases, site_order=site_order)
    means = MeanSweepSet(sites=sweeps, site_order=site_order)
    models = EmulatorModel(sites=emus, site_order=site_order)
    digest = pipeline_hash(basis, models, means)
    if digest != stored_hash:
        raise ArtifactMismatch(
            f"archive {src} hash {stored_hash[:12]}... does not match contents {digest[:12]}..."
        )
    basis.pipeline_hash = digest
    means.pipeline_hash = digest
    models.pipeline_hash = digest
    artifacts = TrainedArtifacts(
        space=space, basis=basis, means=means, models=models, pipeline_hash=digest
    )
    return artifacts, SingularValueTable(sites=tables, site_order=site_order)
