"""Parameter space for the simulator: kinds, transforms, turbulence coupling.

Every tunable simulator input is described by a ParameterSpec. Twelve are
site-invariant; each measurement site adds three more (release latitude X,
longitude Y and height Z), so the full space has d = 12 + 3 * n_sites
dimensions. Specs carry a plausible closed range [lo, hi] and one of two
monotone transforms used whenever a parameter enters a regression:

* ``log``   -- t = ln(v), defined for v > 0.
* ``logit`` -- t = ln(u / (1 - u)) with u = (v - lo) / (hi - lo), defined
  for v strictly inside the range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainError,
    InfeasibleTurbulence,
    InvalidTheta,
)

KINDS = ("const", "scale", "diff")
TRANSFORMS = ("log", "logit")

#: names of the twelve site-invariant parameters, in canonical column order
INVARIANT_NAMES = (
    "MBL", "FTT", "UMM",
    "BLHS", "BLVS", "BLHU", "BLVU",
    "LHS", "LVS", "LHU", "LVU",
    "BLD",
)

#: per-site parameter suffixes in canonical column order:
#: X = release latitude, Y = release longitude, Z = release height
SITE_SUFFIXES = ("X", "Y", "Z")

N_INVARIANT = len(INVARIANT_NAMES)
N_SITE_PARAMS = len(SITE_SUFFIXES)

#: clip applied to the range-normalized coordinate before a logit when
#: building regression features, so a value sitting exactly on a range
#: endpoint (the default MBL does) still gets a finite, non-extreme
#: coordinate comparable to the most extreme stratified design point
U_CLIP = 0.005


@dataclass(frozen=True)
class ParameterSpec:
    """One scalar simulator parameter.

    site is None for the twelve invariant parameters and the 1-based site
    number otherwise. lo/hi bound the plausible range; the default must lie
    inside the closed interval.
    """

    name: str
    kind: str
    transform: str
    default: float
    lo: float
    hi: float
    site: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidTheta(f"{self.name}: unknown kind {self.kind!r}")
        if self.transform not in TRANSFORMS:
            raise InvalidTheta(f"{self.name}: unknown transform {self.transform!r}")
        if not self.lo < self.hi:
            raise InvalidTheta(f"{self.name}: empty range [{self.lo}, {self.hi}]")
        if not self.lo <= self.default <= self.hi:
            raise InvalidTheta(
                f"{self.name}: default {self.default} outside [{self.lo}, {self.hi}]"
            )
        if self.transform == "log" and self.lo <= 0.0:
            raise InvalidTheta(f"{self.name}: log transform needs a positive range")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)


def transform_forward(value: float, spec: ParameterSpec) -> float:
    """Map a natural value to its transformed coordinate.

    Raises DomainError for non-positive values under log, and for values at
    or outside the range endpoints under logit.
    """
    if spec.transform == "log":
        if value <= 0.0:
            raise DomainError(f"{spec.name}: log of non-positive value {value}")
        return math.log(value)
    u = (value - spec.lo) / (spec.hi - spec.lo)
    if u <= 0.0 or u >= 1.0:
        raise DomainError(
            f"{spec.name}: logit undefined at {value} for range [{spec.lo}, {spec.hi}]"
        )
    return math.log(u / (1.0 - u))


def transform_inverse(t: float, spec: ParameterSpec) -> float:
    """Inverse of transform_forward; maps any real into the open range
    (logit) or the positive reals (log)."""
    if spec.transform == "log":
        return math.exp(t)
    u = 1.0 / (1.0 + math.exp(-t))
    return spec.lo + u * (spec.hi - spec.lo)


def emulator_coordinate(value: float, spec: ParameterSpec, u_clip: float = U_CLIP) -> float:
    """Transformed coordinate as used for regression features.

    Same as transform_forward except the normalized coordinate of a logit
    parameter is clipped to [u_clip, 1 - u_clip] first, so range-endpoint
    values (legal natural inputs) produce finite features instead of raising.
    """
    if spec.transform == "log":
        if value <= 0.0:
            raise DomainError(f"{spec.name}: log of non-positive value {value}")
        return math.log(value)
    u = (value - spec.lo) / (spec.hi - spec.lo)
    u = min(max(u, u_clip), 1.0 - u_clip)
    return math.log(u / (1.0 - u))


def clip_transformed(t: float, spec: ParameterSpec, u_clip: float = U_CLIP) -> float:
    """Clamp a transformed coordinate to the band emulator_coordinate can
    produce, so features computed straight from transformed values agree
    with features computed from natural values."""
    if spec.transform == "log":
        return t
    bound = math.log((1.0 - u_clip) / u_clip)
    return min(max(t, -bound), bound)


def log_jacobian(t: float, spec: ParameterSpec) -> float:
    """ln |d value / d t| at transformed coordinate t.

    Needed when a density over natural values is sampled by walking in the
    transformed coordinate.
    """
    if spec.transform == "log":
        return t
    # d/dt [lo + sigmoid(t) * width] = width * sigmoid(t) * (1 - sigmoid(t))
    # ln sigmoid(t) = -softplus(-t), ln(1 - sigmoid(t)) = -softplus(t)
    return math.log(spec.hi - spec.lo) - _softplus(-t) - _softplus(t)


def _softplus(z: float) -> float:
    if z > 35.0:
        return z
    return math.log1p(math.exp(z))


@dataclass(frozen=True)
class TurbulenceCoupling:
    """Links the two turbulence sigmas sampled through the single FTT axis.

    The free axis is the horizontal sigma_u; the vertical sigma_w follows by
    holding the ratio of eddy diffusivities K = sigma^2 * tau at its default.
    The Lagrangian timescales tau_u/tau_w are fixed configuration constants.
    """

    tau_u: float
    tau_w: float
    sigma_u_default: float
    sigma_w_default: float
    sigma_u_range: tuple[float, float]
    sigma_w_range: tuple[float, float]
    k_u_range: tuple[float, float] = field(default=None)  # type: ignore[assignment]
    k_w_range: tuple[float, float] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.tau_u <= 0.0 or self.tau_w <= 0.0:
            raise InvalidTheta("turbulence timescales must be positive")
        if self.k_u_range is None:
            lo, hi = self.sigma_u_range
            object.__setattr__(self, "k_u_range", (lo * lo * self.tau_u, hi * hi * self.tau_u))
        if self.k_w_range is None:
            lo, hi = self.sigma_w_range
            object.__setattr__(self, "k_w_range", (lo * lo * self.tau_w, hi * hi * self.tau_w))


class CoupledTurbulence(NamedTuple):
    sigma_u: float
    sigma_w: float
    feasible: bool


def derive_coupled_turbulence(
    sigma_u: float, coupling: TurbulenceCoupling, strict: bool = False
) -> CoupledTurbulence:
    """Derive sigma_w from a candidate sigma_u via the fixed K ratio.

    K_u = sigma_u^2 tau_u is scaled against its default, the same scale is
    applied to the default K_w, and sigma_w = sqrt(K_w / tau_w). The result
    is feasible only if sigma_u, sigma_w, K_u and K_w all lie inside their
    plausible ranges. With strict=True an infeasible candidate raises
    InfeasibleTurbulence instead of being flagged.
    """
    if sigma_u <= 0.0:
        raise DomainError(f"sigma_u must be positive, got {sigma_u}")
    k_u = sigma_u * sigma_u * coupling.tau_u
    k_u_default = coupling.sigma_u_default**2 * coupling.tau_u
    scale = k_u / k_u_default
    k_w = scale * coupling.sigma_w_default**2 * coupling.tau_w
    sigma_w = math.sqrt(k_w / coupling.tau_w)

    def inside(v, rng):
        return rng[0] <= v <= rng[1]

    feasible = (
        inside(sigma_u, coupling.sigma_u_range)
        and inside(sigma_w, coupling.sigma_w_range)
        and inside(k_u, coupling.k_u_range)
        and inside(k_w, coupling.k_w_range)
    )
    if strict and not feasible:
        raise InfeasibleTurbulence(
            f"sigma_u={sigma_u:.6g} gives sigma_w={sigma_w:.6g}, "
            f"K_u={k_u:.6g}, K_w={k_w:.6g}; outside plausible ranges"
        )
    return CoupledTurbulence(sigma_u, sigma_w, feasible)


@dataclass
class ThetaVector:
    """A point in parameter space.

    xi holds the twelve site-invariant values in canonical order; kappa is
    an (n_sites, 3) array of per-site values with columns (X latitude,
    Y longitude, Z height), matching the flattened column order.
    """

    xi: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.kappa = np.asarray(self.kappa, dtype=float)
        if self.xi.shape != (N_INVARIANT,):
            raise DimensionMismatch(f"xi must have shape ({N_INVARIANT},), got {self.xi.shape}")
        if self.kappa.ndim != 2 or self.kappa.shape[1] != N_SITE_PARAMS:
            raise DimensionMismatch(
                f"kappa must have shape (n_sites, {N_SITE_PARAMS}), got {self.kappa.shape}"
            )

    @property
    def n_sites(self) -> int:
        return self.kappa.shape[0]

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.xi, self.kappa.ravel()])


class ParameterSpace:
    """Ordered collection of ParameterSpecs plus the turbulence coupling.

    Canonical order: the twelve invariant parameters, then X_s, Y_s, Z_s for
    each site in site order. Provides vector views used by the design,
    emulator and inversion layers.
    """

    def __init__(self, specs: list[ParameterSpec], coupling: TurbulenceCoupling):
        n_site_specs = len(specs) - N_INVARIANT
        if n_site_specs < 0 or n_site_specs % N_SITE_PARAMS != 0:
            raise DimensionMismatch(
                f"need {N_INVARIANT} invariant specs plus {N_SITE_PARAMS} per site, got {len(specs)}"
            )
        for i, name in enumerate(INVARIANT_NAMES):
            if specs[i].name != name or specs[i].site is not None:
                raise InvalidTheta(f"spec {i} must be invariant parameter {name}")
        n_sites = n_site_specs // N_SITE_PARAMS
        for s in range(n_sites):
            for j, suffix in enumerate(SITE_SUFFIXES):
                spec = specs[N_INVARIANT + s * N_SITE_PARAMS + j]
                expected = f"{suffix}_{s + 1}"
                if spec.name != expected or spec.site != s + 1:
                    raise InvalidTheta(f"spec {spec.name!r} out of order, expected {expected}")
        self.specs = list(specs)
        self.coupling = coupling
        self.n_sites = n_sites
        self.names = [sp.name for sp in self.specs]
        self.lo = np.array([sp.lo for sp in self.specs])
        self.hi = np.array([sp.hi for sp in self.specs])
        self.defaults = np.array([sp.default for sp in self.specs])
        self._index = {sp.name: i for i, sp in enumerate(self.specs)}

    @property
    def d(self) -> int:
        return len(self.specs)

    def index(self, name: str) -> int:
        return self._index[name]

    def spec(self, name: str) -> ParameterSpec:
        return self.specs[self._index[name]]

    def site_indices(self, site: int) -> list[int]:
        """Flat indices of the three parameters specific to 1-based site."""
        base = N_INVARIANT + (site - 1) * N_SITE_PARAMS
        return list(range(base, base + N_SITE_PARAMS))

    def theta_from_vector(self, vec: np.ndarray) -> ThetaVector:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.d,):
            raise DimensionMismatch(f"expected vector of length {self.d}, got {vec.shape}")
        xi = vec[:N_INVARIANT].copy()
        kappa = vec[N_INVARIANT:].reshape(self.n_sites, N_SITE_PARAMS).copy()
        return ThetaVector(xi=xi, kappa=kappa)

    def default_theta(self) -> ThetaVector:
        return self.theta_from_vector(self.defaults)

    def validate_vector(self, vec: np.ndarray, strict: bool = False) -> bool:
        """True when every component lies in its closed range (and the FTT
        value is turbulence-feasible). strict=True raises InvalidTheta with
        the offending component named."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.d,):
            raise DimensionMismatch(f"expected vector of length {self.d}, got {vec.shape}")
        for i, sp in enumerate(self.specs):
            v = vec[i]
            if not np.isfinite(v) or v < sp.lo or v > sp.hi:
                if strict:
                    raise InvalidTheta(f"{sp.name}={v} outside [{sp.lo}, {sp.hi}]")
                return False
        ftt = vec[self._index["FTT"]]
        if not derive_coupled_turbulence(ftt, self.coupling).feasible:
            if strict:
                raise InvalidTheta(f"FTT={ftt} infeasible under turbulence coupling")
            return False
        return True

    def validate_theta(self, theta: ThetaVector, strict: bool = False) -> bool:
        return self.validate_vector(theta.flatten(), strict=strict)

    def transform_vector(self, vec: np.ndarray, u_clip: float = U_CLIP) -> np.ndarray:
        """Vector of emulator coordinates g(theta), canonical order."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.d,):
            raise DimensionMismatch(f"expected vector of length {self.d}, got {vec.shape}")
        return np.array(
            [emulator_coordinate(v, sp, u_clip) for v, sp in zip(vec, self.specs)]
        )

    def inverse_transform_vector(self, tvec: np.ndarray) -> np.ndarray:
        tvec = np.asarray(tvec, dtype=float)
        if tvec.shape != (self.d,):
            raise DimensionMismatch(f"expected vector of length {self.d}, got {tvec.shape}")
        return np.array([transform_inverse(t, sp) for t, sp in zip(tvec, self.specs)])
