"""Per-site, per-singular-value linear emulator with stepwise AIC selection.

For each site and each singular-value index, the projected loading d_sp is
regressed on the transformed parameters the site is allowed to see (the
twelve invariant ones plus its own release parameters). Columns are added
one at a time, greedily, keeping each addition only if it strictly lowers
AIC = n ln(RSS/n) + 2k, where k counts mean parameters including the
intercept. Site masking means parameter X_2 can never appear in a site-1
model, matching the structural zero built into the problem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .design import DesignMatrix
from .errors import DegenerateFit, DimensionMismatch, InvalidTheta, RankDeficient
from .params import (
    N_INVARIANT,
    ParameterSpace,
    ThetaVector,
    U_CLIP,
    emulator_coordinate,
)

_EPS = float(np.finfo(float).eps)


@dataclass
class RegressionDesign:
    """Training feature matrix of one site: intercept + allowed g(theta)."""

    x: np.ndarray            # (n_runs + 1, 1 + d_allowed)
    columns: list[str]       # "INT", invariant names, then X_s, Y_s, Z_s
    site: int
    param_indices: list[int]  # flat parameter index per non-intercept column

    def __post_init__(self):
        if not np.all(self.x[:, 0] == 1.0):
            raise DimensionMismatch("intercept column must be all ones")
        if not np.all(np.isfinite(self.x)):
            raise DimensionMismatch("regression design has non-finite entries")


def build_regression_design(
    design: DesignMatrix, site: int, u_clip: float = U_CLIP
) -> RegressionDesign:
    """Transform the training design into one site's feature matrix."""
    space = design.space
    param_indices = list(range(N_INVARIANT)) + space.site_indices(site)
    columns = ["INT"] + [space.names[i] for i in param_indices]
    n_rows = design.values.shape[0]
    x = np.ones((n_rows, 1 + len(param_indices)))
    for j, idx in enumerate(param_indices, start=1):
        spec = space.specs[idx]
        for r in range(n_rows):
            x[r, j] = emulator_coordinate(design.values[r, idx], spec, u_clip)
    return RegressionDesign(x=x, columns=columns, site=site, param_indices=param_indices)


def fit_ols(x_sub: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Least squares on a full-column-rank design; returns (coef, rss)."""
    x_sub = np.asarray(x_sub, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = x_sub.shape
    if n <= k:
        raise RankDeficient(f"need more rows than columns, got {n}x{k}")
    coef, _, rank, _ = np.linalg.lstsq(x_sub, y, rcond=None)
    if rank < k:
        raise RankDeficient(f"design has rank {rank} < {k} columns")
    resid = y - x_sub @ coef
    return coef, float(resid @ resid)


def aic(rss: float, n: int, k: int, y_var: float | None = None) -> float:
    """Gaussian concentrated-likelihood AIC, n ln(RSS/n) + 2k.

    When y_var is given and rss sits at machine-noise level relative to it,
    DegenerateFit is raised; callers treat that as -inf for comparisons.
    """
    if n <= 0 or k < 1 or rss < 0.0:
        raise ValueError(f"bad AIC inputs rss={rss}, n={n}, k={k}")
    if y_var is not None and rss < _EPS * n * y_var:
        raise DegenerateFit(f"rss={rss:.3g} at machine-noise level")
    if rss == 0.0:
        return -math.inf
    return n * math.log(rss / n) + 2 * k


@dataclass
class SingularValueFit:
    """Stepwise result for one (site, singular value) response."""

    selected: np.ndarray   # bool per column, intercept always True
    coef: np.ndarray       # zeros where not selected
    resid_var: float
    aic: float


def forward_stepwise(
    design: RegressionDesign, y: np.ndarray, delta: float = 0.0
) -> SingularValueFit:
    """Greedy forward selection from the intercept-only model.

    At each step the candidate column with the lowest AIC is added if that
    AIC beats the current one by more than delta (default: any strict
    decrease); ties go to the lowest column index. Candidates that make the
    design rank-deficient are skipped. Degenerate (machine-noise RSS) fits
    compare as -inf and therefore win and then terminate the path.
    """
    x = design.x
    y = np.asarray(y, dtype=float)
    n, n_cols = x.shape
    if y.shape != (n,):
        raise DimensionMismatch(f"y has shape {y.shape}, design has {n} rows")
    y_var = float(y.var())
    selected = [0]
    coef, rss = fit_ols(x[:, selected], y)
    try:
        cur_aic = aic(rss, n, 1, y_var)
    except DegenerateFit:
        cur_aic = -math.inf
    while True:
        best_aic = math.inf
        best_col = None
        best_fit = None
        for c in range(1, n_cols):
            if c in selected:
                continue
            try:
                cand_coef, cand_rss = fit_ols(x[:, selected + [c]], y)
                cand_aic = aic(cand_rss, n, len(selected) + 1, y_var)
            except RankDeficient:
                continue
            except DegenerateFit:
                cand_aic = -math.inf
            if cand_aic < best_aic:
                best_aic = cand_aic
                best_col = c
                best_fit = (cand_coef, cand_rss)
        if best_col is None or not best_aic < cur_aic - delta:
            break
        selected.append(best_col)
        coef, rss = best_fit
        cur_aic = best_aic
        if cur_aic == -math.inf:
            break
    mask = np.zeros(n_cols, dtype=bool)
    mask[selected] = True
    full_coef = np.zeros(n_cols)
    full_coef[selected] = coef
    dof = n - len(selected)
    return SingularValueFit(
        selected=mask,
        coef=full_coef,
        resid_var=rss / dof if dof > 0 else 0.0,
        aic=cur_aic,
    )


@dataclass
class SiteEmulator:
    """All singular-value fits of one site, plus the feature layout."""

    site: int
    columns: list[str]
    param_indices: list[int]
    fits: list[SingularValueFit]

    def coef_matrix(self) -> np.ndarray:
        return np.vstack([f.coef for f in self.fits])

    @property
    def r(self) -> int:
        return len(self.fits)


@dataclass
class EmulatorModel:
    sites: dict[int, SiteEmulator]
    site_order: list[int]
    pipeline_hash: str | None = None


def fit_emulator(
    design: DesignMatrix,
    tables,
    delta: float = 0.0,
    u_clip: float = U_CLIP,
) -> EmulatorModel:
    """Fit every (site, singular value) model from the projected loadings."""
    sites = {}
    for site in tables.site_order:
        reg = build_regression_design(design, site, u_clip)
        table = tables.sites[site]
        fits = [forward_stepwise(reg, table[:, i], delta) for i in range(table.shape[1])]
        sites[site] = SiteEmulator(
            site=site, columns=reg.columns, param_indices=reg.param_indices, fits=fits
        )
    return EmulatorModel(sites=sites, site_order=list(tables.site_order))


def selection_proportions(
    models: EmulatorModel, weights: dict[int, np.ndarray] | None = None
) -> dict[int, dict[str, float]]:
    """Per site, the share of singular values whose model uses each column.

    weights maps site -> per-singular-value weights (e.g. variance
    explained); None gives the unweighted count/total version. The intercept
    column is always 1.0.
    """
    out: dict[int, dict[str, float]] = {}
    for site, emu in models.sites.items():
        w = np.ones(emu.r) if weights is None else np.asarray(weights[site], dtype=float)
        if w.shape != (emu.r,):
            raise DimensionMismatch(f"site {site}: weights shape {w.shape} != ({emu.r},)")
        w = w / w.sum()
        mask = np.vstack([f.selected for f in emu.fits]).astype(float)
        props = w @ mask
        out[site] = dict(zip(emu.columns, props))
    return out


def predict_singular_values(
    theta: ThetaVector,
    models: EmulatorModel,
    site: int,
    space: ParameterSpace,
    u_clip: float = U_CLIP,
) -> np.ndarray:
    """Emulated singular-value vector for one site at an arbitrary theta."""
    if not space.validate_theta(theta):
        raise InvalidTheta("theta fails range or turbulence validation")
    emu = models.sites[site]
    flat = theta.flatten()
    g = np.ones(1 + len(emu.param_indices))
    for j, idx in enumerate(emu.param_indices, start=1):
        g[j] = emulator_coordinate(flat[idx], space.specs[idx], u_clip)
    return emu.coef_matrix() @ g
