"""Configuration: reference parameter table, sites, regions, stage settings.

A single TOML file drives every pipeline stage. Anything not present falls
back to the reference values built into this module, so an empty file is a
valid config. Per-site release parameters (X_s, Y_s, Z_s) are never listed
explicitly; they are materialized at load time from each site's nominal
location and inlet height:

* X_s (latitude):  default lat,   range lat +/- 0.05 degrees
* Y_s (longitude): default lon,   range lon +/- 0.05 degrees
* Z_s (height):    default z,     range z + [-2z, 2z + 100] metres

after which all ranges are held as absolute closed intervals.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ParseError
from .params import (
    INVARIANT_NAMES,
    ParameterSpec,
    ParameterSpace,
    TurbulenceCoupling,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class Site:
    """A measurement site: 1-based number, short code, nominal location."""

    number: int
    code: str
    lat: float
    lon: float
    height: float
    n_obs: int


#: reference network of four sites
REFERENCE_SITES = (
    Site(1, "MHD", 53.33, -9.90, 10.0, 120),
    Site(2, "RGL", 51.99, -2.54, 90.0, 114),
    Site(3, "TAC", 52.52, 1.14, 100.0, 119),
    Site(4, "TTA", 56.55, -2.99, 222.0, 67),
)

#: reference site-invariant parameter table: name -> (kind, transform, default, lo, hi)
REFERENCE_INVARIANTS = {
    "MBL": ("const", "logit", 40.0, 40.0, 100.0),
    "FTT": ("const", "log", 0.25, 0.06, 0.82),
    "UMM": ("const", "log", 0.8, 0.16, 0.85),
    "BLHS": ("scale", "logit", 1.0, 0.8, 1.8),
    "BLVS": ("scale", "logit", 1.0, 0.7, 1.3),
    "BLHU": ("scale", "logit", 1.0, 0.8, 1.8),
    "BLVU": ("scale", "logit", 1.0, 0.7, 1.3),
    "LHS": ("scale", "logit", 1.0, 0.8, 1.8),
    "LVS": ("scale", "logit", 1.0, 0.7, 1.3),
    "LHU": ("scale", "logit", 1.0, 0.8, 1.8),
    "LVU": ("scale", "logit", 1.0, 0.7, 1.3),
    "BLD": ("scale", "logit", 1.0, 0.5, 1.5),
}

REFERENCE_TURBULENCE = dict(
    tau_u=300.0,
    tau_w=100.0,
    sigma_u_default=0.25,
    sigma_w_default=0.10,
    sigma_u_range=(0.06, 0.82),
    sigma_w_range=(0.02, 0.35),
    k_u_range=(0.06**2 * 300.0, 0.82**2 * 300.0),
    k_w_range=(0.02**2 * 100.0, 0.35**2 * 100.0),
)


def invariant_specs(overrides: list[dict] | None = None) -> list[ParameterSpec]:
    """The twelve invariant ParameterSpecs, optionally overridden by config
    entries of the form {name, kind, transform, default, range}."""
    table = {name: vals for name, vals in REFERENCE_INVARIANTS.items()}
    for entry in overrides or []:
        try:
            name = entry["name"]
            kind = entry.get("kind", table.get(name, ("const",))[0] if name in table else "const")
            transform = entry.get(
                "transform", table[name][1] if name in table else "logit"
            )
            default = float(entry["default"]) if "default" in entry else table[name][2]
            lo, hi = (float(entry["range"][0]), float(entry["range"][1])) if "range" in entry else table[name][3:5]
        except (KeyError, IndexError, TypeError) as exc:
            raise ParseError(f"bad parameter entry {entry!r}: {exc}") from exc
        if name not in INVARIANT_NAMES:
            raise ParseError(f"unknown invariant parameter {name!r}")
        table[name] = (kind, transform, default, lo, hi)
    return [
        ParameterSpec(name, *table[name][:2], table[name][2], table[name][3], table[name][4])
        for name in INVARIANT_NAMES
    ]


def site_specs(site: Site) -> list[ParameterSpec]:
    """Materialize the three release-parameter specs for one site."""
    return [
        ParameterSpec(
            f"X_{site.number}", "diff", "logit",
            site.lat, site.lat - 0.05, site.lat + 0.05, site=site.number,
        ),
        ParameterSpec(
            f"Y_{site.number}", "diff", "logit",
            site.lon, site.lon - 0.05, site.lon + 0.05, site=site.number,
        ),
        ParameterSpec(
            f"Z_{site.number}", "diff", "logit",
            site.height, site.height - 2.0 * site.height,
            site.height + 2.0 * site.height + 100.0, site=site.number,
        ),
    ]


@dataclass
class RegionSettings:
    """Synthetic region layout: centroids scattered over a lat/lon box."""

    n_regions: int = 149
    lat_range: tuple[float, float] = (49.0, 59.5)
    lon_range: tuple[float, float] = (-11.5, 3.5)
    flux_range: tuple[float, float] = (0.5, 2.0)
    seed: int = 20210

@dataclass
class Regions:
    centroids: np.ndarray  # (n_regions, 2) lat, lon
    prior_flux: np.ndarray  # (n_regions,)
    labels: list[str]

    @property
    def n(self) -> int:
        return self.centroids.shape[0]


def build_regions(settings: RegionSettings) -> Regions:
    """Scatter distinct region centroids and positive prior fluxes,
    deterministically from the layout seed."""
    rng = np.random.default_rng(settings.seed)
    lat = rng.uniform(*settings.lat_range, size=settings.n_regions)
    lon = rng.uniform(*settings.lon_range, size=settings.n_regions)
    flux = rng.uniform(*settings.flux_range, size=settings.n_regions)
    centroids = np.column_stack([lat, lon])
    labels = [f"R{i:03d}" for i in range(settings.n_regions)]
    return Regions(centroids=centroids, prior_flux=flux, labels=labels)


@dataclass
class DesignSettings:
    n_runs: int = 50
    exchange_budget: int = 10000
    seed: int = 1
    feasibility_retries: int = 100


@dataclass
class SimulatorSettings:
    """Effect sizes of the synthetic sensitivity generator.

    Calibrated so FTT and release height dominate the output variance while
    the eight boundary-layer scale/limit parameters stay weak.
    """

    base_width: float = 1.5          # kernel width at defaults, degrees
    width_exp_ftt: float = 0.5       # width ~ (sigma_u / ftt_ref)^exp
    width_exp_bld: float = 0.3       # width ~ BLD^exp
    amp_height_frac: float = 0.5     # height scale as fraction of (2z + 100)
    amp_exp_ftt: float = 0.0         # amp ~ (ftt_ref / sigma_u)^exp
    amp_exp_mbl: float = 0.15        # amp ~ (mbl_ref / MBL)^exp
    amp_exp_umm: float = 0.2         # amp ~ (UMM / umm_ref)^exp
    ftt_ref: float = 0.25            # reference sigma_u
    mbl_ref: float = 70.0            # reference mixing height
    umm_ref: float = 0.8             # reference upper-level mixing
    weak_exp: float = 0.02           # amp ~ (p / default)^exp, 8 BL params
    drift_sd_lat: float = 0.6        # per-obs plume centre wander, degrees
    drift_sd_lon: float = 0.9
    obs_width_sd: float = 0.25       # lognormal sd of per-obs width factor
    obs_amp_sd: float = 0.3          # lognormal sd of per-obs amp factor
    amp0: float = 1.0


@dataclass
class EmulatorSettings:
    aic_delta: float = 0.0           # required AIC improvement per step
    energy_cut: float | None = None  # e.g. 0.999 to truncate the basis


@dataclass
class InversionSettings:
    n_iter: int = 100000
    burn_in: float = 0.5
    thin: int = 10
    batch_size: int = 500
    accept_lo: float = 0.2
    accept_hi: float = 0.4
    tune_factor: float = 1.5
    audit_every: int = 1000
    x_prior_mean: float = 1.0
    x_prior_sd: float = 0.5
    sigma_y_range: tuple[float, float] = (1e-3, 10.0)
    init_sd_x: float = 0.1
    init_sd_theta: float = 0.5
    init_sd_sigma: float = 0.1
    seed: int = 7
    # When set, the fixed-H baseline freezes the observation error scale at
    # this value (the classical inversion: model and error scale both assumed
    # known) instead of sampling it alongside x.
    baseline_sigma_y: float | None = None


@dataclass
class ObservationSettings:
    noise_sd: float = 0.5
    truth: dict = field(default_factory=dict)  # parameter name -> true value
    x_true_sd: float = 0.0                     # sd of true scalings about 1
    seed: int = 99


@dataclass
class Config:
    sites: list[Site] = field(default_factory=lambda: list(REFERENCE_SITES))
    coupling: TurbulenceCoupling = field(
        default_factory=lambda: TurbulenceCoupling(**REFERENCE_TURBULENCE)
    )
    invariants: list[ParameterSpec] = field(default_factory=invariant_specs)
    regions: RegionSettings = field(default_factory=RegionSettings)
    design: DesignSettings = field(default_factory=DesignSettings)
    simulator: SimulatorSettings = field(default_factory=SimulatorSettings)
    emulator: EmulatorSettings = field(default_factory=EmulatorSettings)
    inversion: InversionSettings = field(default_factory=InversionSettings)
    observations: ObservationSettings = field(default_factory=ObservationSettings)

    def space(self) -> ParameterSpace:
        specs = list(self.invariants)
        for site in self.sites:
            specs.extend(site_specs(site))
        return ParameterSpace(specs, self.coupling)

    def build_regions(self) -> Regions:
        return build_regions(self.regions)


def _take(dc, section: dict, path: str):
    """Overlay a flat TOML table onto a dataclass instance."""
    known = set(asdict(dc).keys())
    for key, value in section.items():
        if key not in known:
            raise ParseError(f"unknown key {key!r} in [{path}]")
        current = getattr(dc, key)
        if isinstance(current, tuple) and isinstance(value, list):
            value = tuple(value)
        setattr(dc, key, value)
    return dc


def load_config(path: str | Path | None) -> Config:
    """Parse a TOML config file; None or a missing section keeps defaults."""
    cfg = Config()
    if path is None:
        return cfg
    raw = Path(path).read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc

    if "sites" in data:
        sites = []
        for i, entry in enumerate(data["sites"]):
            try:
                sites.append(
                    Site(
                        number=int(entry.get("number", i + 1)),
                        code=str(entry["code"]),
                        lat=float(entry["lat"]),
                        lon=float(entry["lon"]),
                        height=float(entry["height"]),
                        n_obs=int(entry["n_obs"]),
                    )
                )
            except KeyError as exc:
                raise ParseError(f"site entry {i} missing {exc}") from exc
        cfg.sites = sites
    if "turbulence" in data:
        merged = dict(REFERENCE_TURBULENCE)
        for key, value in data["turbulence"].items():
            if key not in merged:
                raise ParseError(f"unknown key {key!r} in [turbulence]")
            merged[key] = tuple(value) if isinstance(value, list) else value
        cfg.coupling = TurbulenceCoupling(**merged)
    cfg.invariants = invariant_specs(data.get("parameters"))
    for name, attr in [
        ("regions", cfg.regions),
        ("design", cfg.design),
        ("simulator", cfg.simulator),
        ("emulator", cfg.emulator),
        ("inversion", cfg.inversion),
        ("observations", cfg.observations),
    ]:
        if name in data:
            _take(attr, data[name], name)
    return cfg


def reference_config_toml() -> str:
    """Render the full reference configuration as TOML text, every
    parameter listed explicitly."""
    lines = ["# emucal reference configuration", ""]
    for name, (kind, transform, default, lo, hi) in REFERENCE_INVARIANTS.items():
        lines += [
            "[[parameters]]",
            f'name = "{name}"',
            f'kind = "{kind}"',
            f'transform = "{transform}"',
            f"default = {default}",
            f"range = [{lo}, {hi}]",
            "",
        ]
    t = REFERENCE_TURBULENCE
    lines += [
        "[turbulence]",
        f"tau_u = {t['tau_u']}",
        f"tau_w = {t['tau_w']}",
        f"sigma_u_default = {t['sigma_u_default']}",
        f"sigma_w_default = {t['sigma_w_default']}",
        f"sigma_u_range = [{t['sigma_u_range'][0]}, {t['sigma_u_range'][1]}]",
        f"sigma_w_range = [{t['sigma_w_range'][0]}, {t['sigma_w_range'][1]}]",
        f"k_u_range = [{t['k_u_range'][0]}, {t['k_u_range'][1]}]",
        f"k_w_range = [{t['k_w_range'][0]}, {t['k_w_range'][1]}]",
        "",
    ]
    for site in REFERENCE_SITES:
        lines += [
            "[[sites]]",
            f"number = {site.number}",
            f'code = "{site.code}"',
            f"lat = {site.lat}",
            f"lon = {site.lon}",
            f"height = {site.height}",
            f"n_obs = {site.n_obs}",
            "",
        ]
    for section, dc in [
        ("regions", RegionSettings()),
        ("design", DesignSettings()),
        ("simulator", SimulatorSettings()),
        ("emulator", EmulatorSettings()),
        ("inversion", InversionSettings()),
        ("observations", ObservationSettings()),
    ]:
        lines.append(f"[{section}]")
        for key, value in asdict(dc).items():
            if value is None or value == {}:
                continue
            if isinstance(value, tuple):
                lines.append(f"{key} = [{value[0]}, {value[1]}]")
            elif isinstance(value, bool):
                lines.append(f"{key} = {str(value).lower()}")
            elif isinstance(value, str):
                lines.append(f'{key} = "{value}"')
            else:
                lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
