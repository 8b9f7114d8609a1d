"""Latin hypercube generation: stratification, maximin, feasibility, IO."""
import numpy as np
import pytest

from emucal import design as dz
from emucal.config import load_config
from emucal.errors import InvariantViolation
from emucal.params import derive_coupled_turbulence

CFG = load_config(None)
SPACE = CFG.space()


def strata_ok(values, space):
    """Each column's design rows occupy every natural-unit bin exactly once."""
    n = values.shape[0]
    for j, spec in enumerate(space.specs):
        u = (values[:, j] - spec.lo) / (spec.hi - spec.lo)
        bins = np.floor(u * n).astype(int)
        bins[bins == n] = n - 1  # the upper endpoint belongs to the last bin
        if sorted(bins) != list(range(n)):
            return False
    return True


def test_row_zero_is_the_default_run():
    d = dz.generate_lhc(8, SPACE, seed=2, budget=50)
    np.testing.assert_array_equal(d.values[0], SPACE.defaults)
    assert d.run_index[0] == 0
    assert d.n_runs == 8
    assert d.values.shape == (9, SPACE.d)


def test_exact_stratification_per_column():
    d = dz.generate_lhc(16, SPACE, seed=7, budget=100)
    assert strata_ok(d.values[1:], SPACE)


def test_deterministic_for_fixed_seed():
    a = dz.generate_lhc(10, SPACE, seed=5, budget=200)
    b = dz.generate_lhc(10, SPACE, seed=5, budget=200)
    np.testing.assert_array_equal(a.values, b.values)
    c = dz.generate_lhc(10, SPACE, seed=6, budget=200)
    assert not np.array_equal(a.values, c.values)


def test_exchange_budget_does_not_hurt_maximin():
    base = dz.generate_lhc(12, SPACE, seed=9, budget=0, restarts=1)
    tuned = dz.generate_lhc(12, SPACE, seed=9, budget=2000, restarts=1)
    assert dz.maximin_score(tuned) >= dz.maximin_score(base)
    assert strata_ok(tuned.values[1:], SPACE)


def test_all_rows_turbulence_feasible():
    d = dz.generate_lhc(20, SPACE, seed=4, budget=100)
    j = SPACE.index("FTT")
    for r in range(d.values.shape[0]):
        assert derive_coupled_turbulence(d.values[r, j], CFG.coupling).feasible
        assert SPACE.validate_vector(d.values[r])


def test_write_read_round_trip(tmp_path):
    d = dz.generate_lhc(6, SPACE, seed=3, budget=50)
    path = tmp_path / "design.csv"
    dz.write_design(d, path)
    back = dz.read_design(path, SPACE)
    np.testing.assert_array_equal(back.values, d.values)
    np.testing.assert_array_equal(back.run_index, d.run_index)


def test_read_rejects_tampered_default_row(tmp_path):
    d = dz.generate_lhc(6, SPACE, seed=3, budget=50)
    path = tmp_path / "design.csv"
    dz.write_design(d, path)
    lines = path.read_text().splitlines()
    # corrupt the default-run row
    cells = lines[1].split(",")
    cells[1] = repr(float(cells[1]) + 1.0)
    lines[1] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(InvariantViolation):
        dz.read_design(path, SPACE)


def test_read_rejects_out_of_range_row(tmp_path):
    d = dz.generate_lhc(6, SPACE, seed=3, budget=50)
    path = tmp_path / "design.csv"
    dz.write_design(d, path)
    lines = path.read_text().splitlines()
    cells = lines[2].split(",")
    j = SPACE.index("UMM")
    cells[1 + j] = repr(SPACE.spec("UMM").hi * 3.0)
    lines[2] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(InvariantViolation):
        dz.read_design(path, SPACE)
