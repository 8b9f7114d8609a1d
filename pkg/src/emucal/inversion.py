"""Hierarchical MCMC inversion with single-component Metropolis updates.

The chain samples region flux scalings x, simulator parameters theta, and
the observation noise sd sigma_y from

    y = H(theta) diag(f) x + eps,   eps ~ N(0, sigma_y^2 I)

where f is the prior flux map and H(theta) is the emulator reconstruction.
Priors: x_j ~ N(mean 1.0, sd configurable), theta uniform over the
plausible ranges, sigma_y uniform over a positive interval (a zero-width
interval fixes sigma_y and removes it from the sampler).

theta components walk in their transformed coordinates; the acceptance
ratio therefore carries the log-Jacobian of the natural-from-transformed
change of variables, which keeps the natural-space prior exactly uniform.
For logit parameters every proposal maps back inside the range; log
parameters (and the turbulence-feasibility flag on FTT) can land outside
the prior support and are then rejected outright.

For speed the likelihood is updated incrementally: the effective matrix
H(theta) diag(f) is held materialized and refreshed per site block when a
theta component is accepted (loadings are linear in the transformed
coordinates, so the loading update is a single axpy), while x updates touch
one column. Every audit_every sweeps the cached log-posterior is recomputed
from scratch through the public reconstruction path and must agree to
1e-8 relative; the caches are then resynchronized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    ArtifactMismatch,
    AuditError,
    DegenerateInterval,
    DimensionMismatch,
    EmptySubset,
    NonPositiveSigma,
    TooFewSamples,
)
from .params import clip_transformed, derive_coupled_turbulence, log_jacobian, transform_inverse
from .reconstruct import TrainedArtifacts, default_H, pipeline_hash

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class Priors:
    """Priors of the hierarchical model; theta priors are implied by the
    parameter space ranges."""

    x_mean: float | np.ndarray = 1.0
    x_sd: float = 0.5
    sigma_y_range: tuple[float, float] = (1e-3, 10.0)

    def __post_init__(self):
        lo, hi = self.sigma_y_range
        if lo <= 0.0 or hi < lo:
            raise NonPositiveSigma(f"sigma_y interval must be positive, got [{lo}, {hi}]")
        if self.x_sd <= 0.0:
            raise NonPositiveSigma(f"x prior sd must be positive, got {self.x_sd}")


@dataclass
class InversionConfig:
    n_iter: int = 100000
    burn_in: float = 0.5
    thin: int = 10
    batch_size: int = 500
    accept_lo: float = 0.2
    accept_hi: float = 0.4
    tune_factor: float = 1.5
    priors: Priors = field(default_factory=Priors)
    seed: int = 0
    sample_theta: bool = True
    audit_every: int = 1000
    audit_tol: float = 1e-8
    init_sd_x: float = 0.1
    init_sd_theta: float = 0.5
    init_sd_sigma: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.burn_in < 1.0:
            raise ValueError(f"burn_in fraction must be in (0,1), got {self.burn_in}")
        if not self.accept_lo < self.accept_hi:
            raise ValueError("acceptance band must satisfy lo < hi")
        if not self.tune_factor > 1.0:
            raise ValueError("tuning multiplier must exceed 1")
        if self.n_iter < 1 or self.thin < 1 or self.batch_size < 1:
            raise ValueError("n_iter, thin and batch_size must be positive")

    @property
    def burn_iters(self) -> int:
        return int(self.n_iter * self.burn_in)


def log_likelihood(y: np.ndarray, H: np.ndarray, x: np.ndarray, sigma_y: float) -> float:
    """Gaussian iid log likelihood of y given mean Hx and sd sigma_y."""
    if sigma_y <= 0.0:
        raise NonPositiveSigma(f"sigma_y must be positive, got {sigma_y}")
    y = np.asarray(y, dtype=float)
    H = np.asarray(H, dtype=float)
    x = np.asarray(x, dtype=float)
    if H.shape != (y.size, x.size):
        raise DimensionMismatch(f"H is {H.shape}, expected ({y.size}, {x.size})")
    resid = y - H @ x
    n = y.size
    return -0.5 * n * (_LOG_2PI + 2.0 * math.log(sigma_y)) - float(resid @ resid) / (
        2.0 * sigma_y * sigma_y
    )


def metropolis_accept(log_ratio: float, rng: np.random.Generator) -> bool:
    """The bare Metropolis rule: accept with probability min(1, e^log_ratio)."""
    if log_ratio >= 0.0:
        return True
    u = rng.random()
    if u == 0.0:
        return True
    return math.log(u) < log_ratio


def adaptive_batch_tune(
    counters: np.ndarray, proposal_sds: np.ndarray, config: InversionConfig
) -> np.ndarray:
    """Scale proposal sds whose batch acceptance rate left the target band."""
    rates = counters / config.batch_size
    sds = proposal_sds.copy()
    sds[rates > config.accept_hi] *= config.tune_factor
    sds[rates < config.accept_lo] /= config.tune_factor
    return sds


class ChainState:
    """All mutable state of one chain plus the cached likelihood pieces."""

    def __init__(
        self,
        y: np.ndarray,
        artifacts: TrainedArtifacts,
        config: InversionConfig,
        prior_flux: np.ndarray | None = None,
    ):
        space = artifacts.space
        basis = artifacts.basis
        self.artifacts = artifacts
        self.space = space
        self.config = config
        self.priors = config.priors
        self.site_order = list(basis.site_order)

        n_regions = basis.sites[self.site_order[0]].v.shape[0]
        self.n_regions = n_regions
        f = np.ones(n_regions) if prior_flux is None else np.asarray(prior_flux, dtype=float)
        if f.shape != (n_regions,) or np.any(f <= 0.0):
            raise DimensionMismatch("prior flux map must be positive with one entry per region")
        self.prior_flux = f

        # static per-site pieces, in site order
        self.U: list[np.ndarray] = []
        self.Vf: list[np.ndarray] = []
        self.Hmf: list[np.ndarray] = []
        self.B: list[np.ndarray] = []
        self.slices: list[slice] = []
        start = 0
        for site in self.site_order:
            b = basis.sites[site]
            emu = artifacts.models.sites[site]
            self.U.append(b.u)
            self.Vf.append(b.v * f[:, None])
            self.Hmf.append(artifacts.means.sites[site].matrix() * f[None, :])
            self.B.append(emu.coef_matrix())
            m = b.u.shape[0]
            self.slices.append(slice(start, start + m))
            start += m
        self.n_obs_total = start
        y = np.asarray(y, dtype=float)
        if y.shape != (start,):
            raise DimensionMismatch(f"y has shape {y.shape}, sites imply ({start},)")
        self.y = y

        # column layout of each site's feature vector: INT, 12 invariant,
        # then the site's own X, Y, Z
        d = space.d
        self.d = d
        self.theta_cols: list[list[tuple[int, int]]] = [[] for _ in range(d)]
        for pos, site in enumerate(self.site_order):
            emu = artifacts.models.sites[site]
            for col, idx in enumerate(emu.param_indices, start=1):
                self.theta_cols[idx].append((pos, col))

        # starting point: theta at range midpoints (transformed), x at the
        # prior mean, sigma at the middle of its interval
        self.t = np.array(
            [
                math.log(sp.midpoint) if sp.transform == "log" else 0.0
                for sp in space.specs
            ]
        )
        self.nat = np.array([transform_inverse(t, sp) for t, sp in zip(self.t, space.specs)])
        self.tcl = np.array(
            [clip_transformed(t, sp) for t, sp in zip(self.t, space.specs)]
        )
        mean = self.priors.x_mean
        self.x_mean = np.full(n_regions, float(mean)) if np.isscalar(mean) else np.asarray(mean, dtype=float)
        if self.x_mean.shape != (n_regions,):
            raise DimensionMismatch("x prior mean must be scalar or one per region")
        self.x = self.x_mean.copy()
        lo, hi = self.priors.sigma_y_range
        self.sample_sigma = hi > lo
        self.sigma = 0.5 * (lo + hi)

        if not config.sample_theta:
            # freeze theta at the defaults and use the exact stored H0
            self.nat = space.defaults.copy()
            h0 = default_H(basis, artifacts.means)
            self.Heff = h0.values * f[None, :]
            self.dvals = [basis.sites[site].s.copy() for site in self.site_order]
        else:
            self.dvals = [self._predict_site(pos) for pos in range(len(self.site_order))]
            self.Heff = np.empty((self.n_obs_total, n_regions))
            for pos in range(len(self.site_order)):
                self._rebuild_site_rows(pos)

        self.P = [vf.T @ self.x for vf in self.Vf]
        self.resid = self.y - self.Heff @ self.x
        self.rss = float(self.resid @ self.resid)
        self.lp_x = self._x_logprior_total()
        self.lp_t = self._theta_logprior_total() if config.sample_theta else 0.0
        self.lp_sig = -math.log(hi - lo) if self.sample_sigma else 0.0

    # -- feature and prior helpers ---------------------------------------

    def _site_features(self, pos: int) -> np.ndarray:
        emu = self.artifacts.models.sites[self.site_order[pos]]
        g = np.ones(1 + len(emu.param_indices))
        g[1:] = self.tcl[emu.param_indices]
        return g

    def _predict_site(self, pos: int) -> np.ndarray:
        return self.B[pos] @ self._site_features(pos)

    def _rebuild_site_rows(self, pos: int) -> None:
        sl = self.slices[pos]
        self.Heff[sl] = (self.U[pos] * self.dvals[pos]) @ self.Vf[pos].T + self.Hmf[pos]

    def _x_logprior_total(self) -> float:
        z = (self.x - self.x_mean) / self.priors.x_sd
        n = self.n_regions
        return -0.5 * float(z @ z) - n * (0.5 * _LOG_2PI + math.log(self.priors.x_sd))

    def _theta_logprior_comp(self, t: float, nat: float, idx: int) -> float:
        sp = self.space.specs[idx]
        if nat < sp.lo or nat > sp.hi:
            return -math.inf
        if sp.name == "FTT" and not derive_coupled_turbulence(nat, self.space.coupling).feasible:
            return -math.inf
        return log_jacobian(t, sp) - math.log(sp.hi - sp.lo)

    def _theta_logprior_total(self) -> float:
        return sum(
            self._theta_logprior_comp(self.t[i], self.nat[i], i) for i in range(self.d)
        )

    # -- cached and fresh posteriors --------------------------------------

    def log_likelihood_cached(self) -> float:
        n = self.n_obs_total
        return -0.5 * n * (_LOG_2PI + 2.0 * math.log(self.sigma)) - self.rss / (
            2.0 * self.sigma * self.sigma
        )

    def log_posterior(self) -> float:
        return self.log_likelihood_cached() + self.lp_x + self.lp_t + self.lp_sig

    @property
    def H(self) -> np.ndarray:
        """Current reconstructed (unscaled) sensitivity matrix."""
        return self.Heff / self.prior_flux[None, :]

    def fresh_log_posterior(self) -> tuple[float, np.ndarray]:
        """Recompute the log posterior through the public reconstruction
        path, ignoring every incremental cache. Returns (lp, Heff_fresh)."""
        if self.config.sample_theta:
            theta = self.space.theta_from_vector(self.nat)
            h = self.artifacts.reconstruct(theta)
        else:
            h = default_H(self.artifacts.basis, self.artifacts.means)
        heff = h.values * self.prior_flux[None, :]
        ll = log_likelihood(self.y, heff, self.x, self.sigma)
        lp_t = self._theta_logprior_total() if self.config.sample_theta else 0.0
        return ll + self._x_logprior_total() + lp_t + self.lp_sig, heff

    def audit(self) -> None:
        """Verify the cached log posterior against a from-scratch
        recomputation, then resynchronize the caches."""
        fresh, heff = self.fresh_log_posterior()
        cached = self.log_posterior()
        if not math.isfinite(fresh) or abs(cached - fresh) > self.config.audit_tol * (
            1.0 + abs(fresh)
        ):
            raise AuditError(
                f"cached log-posterior {cached!r} deviates from fresh {fresh!r}"
            )
        self.Heff = heff
        if self.config.sample_theta:
            self.dvals = [self._predict_site(pos) for pos in range(len(self.site_order))]
        self.P = [vf.T @ self.x for vf in self.Vf]
        self.resid = self.y - self.Heff @ self.x
        self.rss = float(self.resid @ self.resid)
        self.lp_x = self._x_logprior_total()
        if self.config.sample_theta:
            self.lp_t = self._theta_logprior_total()


def mh_update_component(
    state: ChainState, kind: str, index: int, sd: float, rng: np.random.Generator
) -> bool:
    """One Metropolis update of a single component; returns the accept flag.

    kind is "x", "theta" or "sigma"; index addresses the component within
    its block; sd is the proposal standard deviation.
    """
    if kind == "x":
        return _update_x(state, index, sd, rng)
    if kind == "theta":
        return _update_theta(state, index, sd, rng)
    if kind == "sigma":
        return _update_sigma(state, sd, rng)
    raise ValueError(f"unknown component kind {kind!r}")


def _update_x(state: ChainState, j: int, sd: float, rng) -> bool:
    dx = rng.normal(0.0, sd)
    xj = state.x[j]
    xj_new = xj + dx
    mu = state.x_mean[j]
    inv_var = 1.0 / (state.priors.x_sd * state.priors.x_sd)
    dlp = -0.5 * ((xj_new - mu) ** 2 - (xj - mu) ** 2) * inv_var
    resid_new = state.resid - state.Heff[:, j] * dx
    rss_new = float(resid_new @ resid_new)
    dll = -(rss_new - state.rss) / (2.0 * state.sigma * state.sigma)
    if not metropolis_accept(dlp + dll, rng):
        return False
    state.x[j] = xj_new
    state.resid = resid_new
    state.rss = rss_new
    state.lp_x += dlp
    for pos in range(len(state.site_order)):
        state.P[pos] += state.Vf[pos][j] * dx
    return True


def _update_theta(state: ChainState, idx: int, sd: float, rng) -> bool:
    sp = state.space.specs[idx]
    t_new = state.t[idx] + rng.normal(0.0, sd)
    nat_new = transform_inverse(t_new, sp)
    lp_old = state._theta_logprior_comp(state.t[idx], state.nat[idx], idx)
    lp_new = state._theta_logprior_comp(t_new, nat_new, idx)
    if lp_new == -math.inf:
        return False
    tcl_new = clip_transformed(t_new, sp)
    dg = tcl_new - state.tcl[idx]
    affected = state.theta_cols[idx]
    dd_list = []
    resid_list = []
    drss = 0.0
    for pos, col in affected:
        dd = state.B[pos][:, col] * dg
        dhx = state.U[pos] @ (dd * state.P[pos])
        sl = state.slices[pos]
        resid_old = state.resid[sl]
        resid_new = resid_old - dhx
        drss += float(resid_new @ resid_new) - float(resid_old @ resid_old)
        dd_list.append(dd)
        resid_list.append(resid_new)
    dll = -drss / (2.0 * state.sigma * state.sigma)
    if not metropolis_accept((lp_new - lp_old) + dll, rng):
        return False
    state.t[idx] = t_new
    state.nat[idx] = nat_new
    state.tcl[idx] = tcl_new
    state.lp_t += lp_new - lp_old
    state.rss += drss
    for (pos, _), dd, resid_new in zip(affected, dd_list, resid_list):
        state.dvals[pos] += dd
        state.resid[state.slices[pos]] = resid_new
        state._rebuild_site_rows(pos)
    return True


def _update_sigma(state: ChainState, sd: float, rng) -> bool:
    lo, hi = state.priors.sigma_y_range
    s_new = state.sigma + rng.normal(0.0, sd)
    if s_new < lo or s_new > hi:
        return False
    n = state.n_obs_total
    dll = -n * (math.log(s_new) - math.log(state.sigma)) - 0.5 * state.rss * (
        1.0 / (s_new * s_new) - 1.0 / (state.sigma * state.sigma)
    )
    if not metropolis_accept(dll, rng):
        return False
    state.sigma = s_new
    return True


@dataclass
class Chain:
    """Thinned post-burn-in samples plus tuning diagnostics."""

    x: np.ndarray            # (n_samples, n_regions)
    theta: np.ndarray        # (n_samples, d) natural units
    sigma_y: np.ndarray      # (n_samples,)
    log_post: np.ndarray     # (n_samples,)
    theta_names: list[str]
    labels: list[str]        # component labels in update order
    accept_rates: np.ndarray  # post-burn-in, per component
    proposal_sds: np.ndarray  # final (frozen) proposal sds
    config: InversionConfig
    prior_flux: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]


def run_chain(
    y: np.ndarray,
    artifacts: TrainedArtifacts,
    config: InversionConfig,
    prior_flux: np.ndarray | None = None,
) -> Chain:
    """Run one chain: n_iter sweeps over every x component, every theta
    component (unless frozen) and sigma_y, recording post-burn-in states
    every thin-th sweep. Deterministic per (config, seed, artifacts)."""
    if artifacts.pipeline_hash != pipeline_hash(
        artifacts.basis, artifacts.models, artifacts.means
    ):
        raise ArtifactMismatch("artifact bundle does not match its pipeline hash")
    state = ChainState(y, artifacts, config, prior_flux)
    rng = np.random.default_rng(config.seed)

    comps: list[tuple[str, int]] = [("x", j) for j in range(state.n_regions)]
    if config.sample_theta:
        comps += [("theta", i) for i in range(state.d)]
    if state.sample_sigma:
        comps.append(("sigma", 0))
    labels = [f"x_{j:03d}" for j in range(state.n_regions)]
    if config.sample_theta:
        labels += list(artifacts.space.names)
    if state.sample_sigma:
        labels.append("sigma_y")

    sds = np.empty(len(comps))
    for i, (kind, _) in enumerate(comps):
        sds[i] = {
            "x": config.init_sd_x,
            "theta": config.init_sd_theta,
            "sigma": config.init_sd_sigma,
        }[kind]

    burn = config.burn_iters
    n_keep = (config.n_iter - burn) // config.thin
    keep_x = np.empty((n_keep, state.n_regions))
    keep_t = np.empty((n_keep, state.d))
    keep_s = np.empty(n_keep)
    keep_lp = np.empty(n_keep)

    counters = np.zeros(len(comps))
    post_accepts = np.zeros(len(comps))
    kept = 0
    for sweep in range(1, config.n_iter + 1):
        for ci, (kind, index) in enumerate(comps):
            accepted = mh_update_component(state, kind, index, sds[ci], rng)
            if accepted:
                counters[ci] += 1.0
                if sweep > burn:
                    post_accepts[ci] += 1.0
        if sweep <= burn and sweep % config.batch_size == 0:
            sds = adaptive_batch_tune(counters, sds, config)
            counters[:] = 0.0
        elif sweep == burn:
            counters[:] = 0.0
        if config.audit_every and sweep % config.audit_every == 0:
            state.audit()
        if sweep > burn and (sweep - burn) % config.thin == 0:
            keep_x[kept] = state.x
            keep_t[kept] = state.nat
            keep_s[kept] = state.sigma
            keep_lp[kept] = state.log_posterior()
            kept += 1

    post_n = config.n_iter - burn
    return Chain(
        x=keep_x[:kept],
        theta=keep_t[:kept],
        sigma_y=keep_s[:kept],
        log_post=keep_lp[:kept],
        theta_names=list(artifacts.space.names),
        labels=labels,
        accept_rates=post_accepts / max(post_n, 1),
        proposal_sds=sds,
        config=config,
        prior_flux=state.prior_flux,
    )


# -- summaries ------------------------------------------------------------

class Summary(NamedTuple):
    mean: float
    lo: float
    hi: float


def posterior_summary(samples: np.ndarray, min_samples: int = 100) -> Summary:
    """Mean and empirical 90% credible interval ([5%, 95%] quantiles with
    linear interpolation between order statistics)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1:
        raise DimensionMismatch("posterior_summary expects a 1-D sample vector")
    if samples.size < min_samples:
        raise TooFewSamples(f"need at least {min_samples} samples, got {samples.size}")
    lo, hi = np.quantile(samples, [0.05, 0.95], method="linear")
    return Summary(float(samples.mean()), float(lo), float(hi))


def scaled_prior_shift(prior_interval: tuple[float, float], posterior_mean: float) -> float:
    """(posterior mean - prior midpoint) / prior width."""
    a, b = prior_interval
    if b <= a:
        raise DegenerateInterval(f"prior interval [{a}, {b}] has no width")
    return (posterior_mean - 0.5 * (a + b)) / (b - a)


def ci_overlap(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Percentage intersection-over-union of two intervals."""
    (a0, a1), (b0, b1) = a, b
    if a1 < a0 or b1 < b0:
        raise DegenerateInterval("interval endpoints out of order")
    inter = max(0.0, min(a1, b1) - max(a0, b0))
    union = (a1 - a0) + (b1 - b0) - inter
    if union == 0.0:
        return 100.0 if (a0, a1) == (b0, b1) else 0.0
    return 100.0 * inter / union


def regional_total(
    chain: Chain, subset: np.ndarray, prior_flux: np.ndarray | None = None
) -> Summary:
    """Posterior summary of the summed flux (scaling x prior flux) over a
    region subset."""
    subset = np.asarray(subset)
    if subset.dtype == bool:
        subset = np.flatnonzero(subset)
    if subset.size == 0:
        raise EmptySubset("region subset is empty")
    f = chain.prior_flux if prior_flux is None else np.asarray(prior_flux, dtype=float)
    totals = chain.x[:, subset] @ f[subset]
    return posterior_summary(totals)


def total_samples(chain: Chain, subset: np.ndarray | None = None) -> np.ndarray:
    """Per-sample total flux over a subset (default: all regions)."""
    if subset is None:
        return chain.x @ chain.prior_flux
    subset = np.asarray(subset)
    if subset.dtype == bool:
        subset = np.flatnonzero(subset)
    return chain.x[:, subset] @ chain.prior_flux[subset]
