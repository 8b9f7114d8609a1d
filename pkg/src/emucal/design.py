"""Maximin Latin hypercube training design.

The design is built in range-normalized [0,1)^d space: each column gets one
point per stratum, sampled uniformly within its bin, and the minimum
pairwise distance is then pushed up by random-restart point exchange
(swapping two entries of one column, keeping the swap only when the minimum
distance strictly increases). Natural values come from undoing the range
normalization, so coverage is uniform in natural units. The default run is
prepended as row 0 and takes no part in stratification or scoring.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DesignInfeasible, InvariantViolation, ParseError
from .params import ParameterSpace, derive_coupled_turbulence

FLOAT_FMT = "%.17g"


@dataclass
class DesignMatrix:
    """Natural-unit design; row 0 is the default run."""

    values: np.ndarray          # (n_runs + 1, d)
    space: ParameterSpace
    run_index: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.run_index is None:
            self.run_index = np.arange(self.values.shape[0])

    @property
    def n_runs(self) -> int:
        return self.values.shape[0] - 1

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def normalized(self) -> np.ndarray:
        """Rows 1..n mapped to range-normalized coordinates."""
        width = self.space.hi - self.space.lo
        return (self.values[1:] - self.space.lo) / width

    def theta(self, run: int):
        return self.space.theta_from_vector(self.values[run])


def _pairwise_sq(u: np.ndarray) -> np.ndarray:
    diff = u[:, None, :] - u[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    return d2


def maximin_score(design: DesignMatrix) -> float:
    """Minimum pairwise Euclidean distance between the stratified rows in
    range-normalized coordinates (row 0 excluded)."""
    u = design.normalized()
    if u.shape[0] < 2:
        raise InvariantViolation("need at least two stratified rows to score")
    return float(np.sqrt(_pairwise_sq(u).min()))


def _sample_column(
    n: int, rng: np.random.Generator, space: ParameterSpace, col: int, retries: int
) -> np.ndarray:
    """One stratified column in [0,1): a permutation of bins with uniform
    jitter. The FTT column resamples within its bin until the coupled
    turbulence is feasible."""
    perm = rng.permutation(n)
    u = (perm + rng.random(n)) / n
    spec = space.specs[col]
    if spec.name != "FTT":
        return u
    lo, hi = spec.lo, spec.hi
    for k in range(n):
        for attempt in range(retries + 1):
            sigma_u = lo + u[k] * (hi - lo)
            if derive_coupled_turbulence(sigma_u, space.coupling).feasible:
                break
            if attempt == retries:
                raise DesignInfeasible(
                    f"FTT bin {perm[k]} produced no feasible sigma_u in {retries} tries"
                )
            u[k] = (perm[k] + rng.random()) / n
    return u


def _exchange_optimize(
    u: np.ndarray, budget: int, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Point-exchange hill climb on the min pairwise squared distance."""
    n, d = u.shape
    d2 = _pairwise_sq(u)
    best = d2.min()
    for _ in range(budget):
        c = int(rng.integers(d))
        i = int(rng.integers(n))
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        u[i, c], u[j, c] = u[j, c], u[i, c]
        di = ((u - u[i]) ** 2).sum(axis=1)
        dj = ((u - u[j]) ** 2).sum(axis=1)
        di[i] = np.inf
        dj[j] = np.inf
        masked = d2.copy()
        masked[i, :] = np.inf
        masked[:, i] = np.inf
        masked[j, :] = np.inf
        masked[:, j] = np.inf
        cand = min(masked.min(), di.min(), dj.min())
        if cand > best:
            best = cand
            d2[i, :] = di
            d2[:, i] = di
            d2[j, :] = dj
            d2[:, j] = dj
            d2[i, j] = d2[j, i] = di[j]
        else:
            u[i, c], u[j, c] = u[j, c], u[i, c]
    return u, float(np.sqrt(best))


def generate_lhc(
    n: int,
    space: ParameterSpace,
    seed: int,
    budget: int = 10000,
    restarts: int = 4,
    retries: int = 100,
) -> DesignMatrix:
    """Generate the (n+1)-row training design.

    budget exchange proposals are split across the restarts; the restart
    with the best final score wins. Deterministic for a given seed.
    """
    if n < 2:
        raise InvariantViolation(f"need n >= 2 runs, got {n}")
    rng = np.random.default_rng(seed)
    per_restart = max(1, budget // max(1, restarts))
    best_u = None
    best_score = -np.inf
    for _ in range(max(1, restarts)):
        u = np.column_stack(
            [_sample_column(n, rng, space, c, retries) for c in range(space.d)]
        )
        u, score = _exchange_optimize(u, per_restart, rng)
        if score > best_score:
            best_score = score
            best_u = u
    values = space.lo + best_u * (space.hi - space.lo)
    rows = np.vstack([space.defaults, values])
    design = DesignMatrix(values=rows, space=space)
    for r in range(1, n + 1):
        space.validate_vector(rows[r], strict=True)
    return design


def write_design(design: DesignMatrix, path: str | Path) -> None:
    """Write the design as CSV: p, then one column per parameter, run 0
    first, full float precision."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p"] + design.space.names)
        for r in range(design.values.shape[0]):
            writer.writerow(
                [str(int(design.run_index[r]))]
                + [FLOAT_FMT % v for v in design.values[r]]
            )


def _check_stratified(u_col: np.ndarray, n: int) -> bool:
    scaled = u_col * n
    bins = np.floor(scaled).astype(int)
    # snap values that round-tripped onto a bin edge
    near = np.abs(scaled - np.round(scaled)) < 1e-9
    bins[near] = np.round(scaled[near]).astype(int)
    bins = np.clip(bins, 0, n - 1)
    return np.array_equal(np.sort(bins), np.arange(n))


def read_design(path: str | Path, space: ParameterSpace) -> DesignMatrix:
    """Read and fully validate a design CSV written by write_design."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if header != ["p"] + space.names:
            raise ParseError(f"{path}: header does not match parameter space")
        run_index = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != space.d + 1:
                raise ParseError(f"{path}:{lineno}: expected {space.d + 1} fields")
            try:
                run_index.append(int(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: no data rows")
    values = np.array(rows)
    if run_index[0] != 0 or not np.array_equal(values[0], space.defaults):
        raise InvariantViolation(f"{path}: row 0 is not the default run")
    for r in range(1, values.shape[0]):
        if not space.validate_vector(values[r]):
            raise InvariantViolation(f"{path}: run {run_index[r]} fails validation")
    n = values.shape[0] - 1
    width = space.hi - space.lo
    u = (values[1:] - space.lo) / width
    for c in range(space.d):
        if not _check_stratified(u[:, c], n):
            raise InvariantViolation(
                f"{path}: column {space.names[c]} is not Latin-stratified"
            )
    return DesignMatrix(values=values, space=space, run_index=np.array(run_index))
