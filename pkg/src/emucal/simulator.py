"""Synthetic sensitivity-matrix generator.

Stands in for the dispersion simulator: maps a parameter vector to a
non-negative sensitivity matrix H (rows = observations grouped by site,
columns = regions) with smooth, documented parameter dependence, so the
whole calibration pipeline can be exercised and verified at desk scale.

Each observation row is an isotropic Gaussian kernel over planar distances
from an effective plume centre (the release location plus a fixed per-obs
meteorological drift) to the region centroids:

    H[o, r] = amp_o(theta) * exp(-dist(c_r, centre_o)^2 / (2 * width_o(theta)^2))

with, relative to reference values,

    width_o ~ base_width * (sigma_u / ftt_ref)^width_exp_ftt * BLD^width_exp_bld
    amp_o   ~ amp0 * exp(-(Z - z_nominal) / height_scale)
              * (ftt_ref / sigma_u)^amp_exp_ftt
              * (mbl_ref / MBL)^amp_exp_mbl * (UMM / umm_ref)^amp_exp_umm
              * prod_weak (p / 1)^weak_exp

so the kernel widens with FTT (the sigma_u turbulence axis; sigma_w tracks
it through the fixed K coupling) and with BLD, while the amplitude drops
with release height, free-troposphere turbulence and deep mixing. The eight boundary-layer scale/limit
parameters enter only through the tiny weak_exp exponent: they are meant to
be close to unidentifiable. Longitude distances carry a cos(latitude)
metric factor, frozen at the nominal site latitude.

Per-observation drift, width and amplitude factors are drawn once from a
(seed, site number) stream, so simulate_H is a pure function of
(theta, sites, seed) and observation o always sees the same weather.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Regions, SimulatorSettings, Site
from .errors import DimensionMismatch, InvalidTheta, InvariantViolation, NonPositiveSigma, ParseError
from .params import N_INVARIANT, ParameterSpace, ThetaVector

_WEAK_SLICE = slice(3, 11)  # BLHS..LVU within the invariant vector


@dataclass
class SiteConfig:
    """One site's geometry plus the shared region centroids."""

    number: int
    code: str
    lat: float
    lon: float
    height: float
    n_obs: int
    region_centroids: np.ndarray  # (n_regions, 2) lat, lon

    def __post_init__(self):
        if self.n_obs < 1:
            raise InvariantViolation(f"site {self.code}: n_obs must be >= 1")
        self.region_centroids = np.asarray(self.region_centroids, dtype=float)
        if self.region_centroids.ndim != 2 or self.region_centroids.shape[1] != 2:
            raise DimensionMismatch("region centroids must be (n_regions, 2)")
        uniq = np.unique(self.region_centroids, axis=0)
        if uniq.shape[0] != self.region_centroids.shape[0]:
            raise InvariantViolation("region centroids must be distinct")


def build_site_configs(sites: list[Site], regions: Regions) -> list[SiteConfig]:
    return [
        SiteConfig(
            number=s.number,
            code=s.code,
            lat=s.lat,
            lon=s.lon,
            height=s.height,
            n_obs=s.n_obs,
            region_centroids=regions.centroids,
        )
        for s in sites
    ]


@dataclass
class SensitivityMatrix:
    """Stacked per-site sensitivity blocks."""

    values: np.ndarray           # (n_obs_total, n_regions)
    site_order: list[int]        # site numbers, block order
    block_slices: dict[int, slice]
    run_index: int | None = None

    def block(self, site: int) -> np.ndarray:
        return self.values[self.block_slices[site]]

    @property
    def n_regions(self) -> int:
        return self.values.shape[1]


def _obs_weather(site: SiteConfig, seed: int, settings: SimulatorSettings):
    """Fixed per-observation drift and modulation factors for one site."""
    rng = np.random.default_rng((seed, site.number))
    drift_lat = rng.normal(0.0, settings.drift_sd_lat, size=site.n_obs)
    drift_lon = rng.normal(0.0, settings.drift_sd_lon, size=site.n_obs)
    width_f = np.exp(rng.normal(0.0, settings.obs_width_sd, size=site.n_obs))
    amp_f = np.exp(rng.normal(0.0, settings.obs_amp_sd, size=site.n_obs))
    return drift_lat, drift_lon, width_f, amp_f


def _site_block(
    theta: ThetaVector,
    site: SiteConfig,
    site_pos: int,
    seed: int,
    settings: SimulatorSettings,
) -> np.ndarray:
    mbl, sigma_u, umm = theta.xi[0], theta.xi[1], theta.xi[2]
    bld = theta.xi[11]
    weak = theta.xi[_WEAK_SLICE]
    rel_lat, rel_lon, rel_z = theta.kappa[site_pos]

    drift_lat, drift_lon, width_f, amp_f = _obs_weather(site, seed, settings)
    width = (
        settings.base_width
        * width_f
        * (sigma_u / settings.ftt_ref) ** settings.width_exp_ftt
        * bld**settings.width_exp_bld
    )
    height_scale = settings.amp_height_frac * (2.0 * site.height + 100.0)
    amp = (
        settings.amp0
        * amp_f
        * math.exp(-(rel_z - site.height) / height_scale)
        * (settings.ftt_ref / sigma_u) ** settings.amp_exp_ftt
        * (settings.mbl_ref / mbl) ** settings.amp_exp_mbl
        * (umm / settings.umm_ref) ** settings.amp_exp_umm
        * float(np.prod(weak**settings.weak_exp))
    )
    coslat = math.cos(math.radians(site.lat))
    centre_lat = rel_lat + drift_lat
    centre_lon = rel_lon + drift_lon
    dlat = site.region_centroids[:, 0][None, :] - centre_lat[:, None]
    dlon = (site.region_centroids[:, 1][None, :] - centre_lon[:, None]) * coslat
    d2 = dlat * dlat + dlon * dlon
    return amp[:, None] * np.exp(-d2 / (2.0 * width[:, None] ** 2))


def simulate_H(
    theta: ThetaVector,
    sites: list[SiteConfig],
    seed: int,
    settings: SimulatorSettings | None = None,
    space: ParameterSpace | None = None,
    run_index: int | None = None,
) -> SensitivityMatrix:
    """Simulate the stacked sensitivity matrix for one parameter vector.

    Pure in (theta, sites, seed). When a ParameterSpace is supplied the
    theta is validated against it first.
    """
    settings = settings or SimulatorSettings()
    if theta.kappa.shape[0] != len(sites):
        raise DimensionMismatch(
            f"theta has {theta.kappa.shape[0]} site rows, got {len(sites)} sites"
        )
    if space is not None and not space.validate_theta(theta):
        raise InvalidTheta("theta fails range or turbulence validation")
    blocks = []
    slices = {}
    start = 0
    for pos, site in enumerate(sites):
        blk = _site_block(theta, site, pos, seed, settings)
        blocks.append(blk)
        slices[site.number] = slice(start, start + site.n_obs)
        start += site.n_obs
    values = np.vstack(blocks)
    if not np.all(np.isfinite(values)) or np.any(values < 0.0):
        raise InvalidTheta("simulator produced non-finite or negative sensitivities")
    return SensitivityMatrix(
        values=values,
        site_order=[s.number for s in sites],
        block_slices=slices,
        run_index=run_index,
    )


def synthesize_observations(
    H: SensitivityMatrix | np.ndarray,
    x_true: np.ndarray,
    noise_sd: float,
    seed: int,
) -> np.ndarray:
    """y = H x_true + iid Normal(0, noise_sd^2) noise, deterministic per seed."""
    values = H.values if isinstance(H, SensitivityMatrix) else np.asarray(H, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x_true.shape != (values.shape[1],):
        raise DimensionMismatch(
            f"x_true has shape {x_true.shape}, H has {values.shape[1]} columns"
        )
    if noise_sd < 0.0:
        raise NonPositiveSigma(f"noise_sd must be >= 0, got {noise_sd}")
    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, noise_sd, size=values.shape[0]) if noise_sd > 0 else 0.0
    return values @ x_true + eps


# ---------------------------------------------------------------------------
# archive: one CSV per run plus a JSON manifest

def write_h_csv(H: SensitivityMatrix, sites: list[SiteConfig], path: str | Path) -> None:
    path = Path(path)
    n_regions = H.n_regions
    header = "site,obs," + ",".join(f"R{r:03d}" for r in range(n_regions))
    lines = [header]
    for site in sites:
        blk = H.block(site.number)
        for o in range(blk.shape[0]):
            vals = ",".join("%.17g" % v for v in blk[o])
            lines.append(f"{site.number},{o},{vals}")
    path.write_text("\n".join(lines) + "\n")


def read_h_csv(path: str | Path, sites: list[SiteConfig]) -> SensitivityMatrix:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    expected_rows = {s.number: s.n_obs for s in sites}
    rows_by_site: dict[int, list[np.ndarray]] = {s.number: [] for s in sites}
    n_regions = len(lines[0].split(",")) - 2
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != n_regions + 2:
            raise ParseError(f"{path}:{lineno}: wrong field count")
        try:
            site = int(parts[0])
            row = np.array([float(v) for v in parts[2:]])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if site not in rows_by_site:
            raise ParseError(f"{path}:{lineno}: unknown site {site}")
        rows_by_site[site].append(row)
    blocks = []
    slices = {}
    start = 0
    for s in sites:
        rows = rows_by_site[s.number]
        if len(rows) != expected_rows[s.number]:
            raise InvariantViolation(
                f"{path}: site {s.number} has {len(rows)} rows, expected {expected_rows[s.number]}"
            )
        blocks.append(np.vstack(rows))
        slices[s.number] = slice(start, start + len(rows))
        start += len(rows)
    return SensitivityMatrix(
        values=np.vstack(blocks),
        site_order=[s.number for s in sites],
        block_slices=slices,
    )


def write_run_archive(
    out_dir: str | Path,
    runs: list[tuple[int, ThetaVector, SensitivityMatrix]],
    sites: list[SiteConfig],
    space: ParameterSpace,
    seed: int,
) -> Path:
    """Write one CSV per run plus manifest.json mapping run -> theta -> file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"seed": seed, "sites": [s.number for s in sites], "runs": []}
    for run_index, theta, H in runs:
        fname = f"run_{run_index:03d}.csv"
        write_h_csv(H, sites, out_dir / fname)
        manifest["runs"].append(
            {
                "run_index": run_index,
                "theta": dict(zip(space.names, map(float, theta.flatten()))),
                "file": fname,
            }
        )
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return out_dir / "manifest.json"


def read_run_archive(
    archive_dir: str | Path, sites: list[SiteConfig], space: ParameterSpace
) -> list[tuple[int, ThetaVector, SensitivityMatrix]]:
    archive_dir = Path(archive_dir)
    manifest_path = archive_dir / "manifest.json"
    if not manifest_path.exists():
        raise ParseError(f"{archive_dir}: missing manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path}: {exc}") from exc
    runs = []
    for entry in manifest["runs"]:
        theta_vec = np.array([entry["theta"][name] for name in space.names])
        theta = space.theta_from_vector(theta_vec)
        H = read_h_csv(archive_dir / entry["file"], sites)
        H.run_index = entry["run_index"]
        runs.append((entry["run_index"], theta, H))
    runs.sort(key=lambda t: t[0])
    return runs
