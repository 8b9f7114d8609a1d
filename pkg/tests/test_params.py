"""Parameter transforms, Jacobians, clipping and the turbulence coupling."""
import math

import numpy as np
import pytest

from emucal import params
from emucal.config import load_config
from emucal.errors import (
    DimensionMismatch,
    DomainError,
    InfeasibleTurbulence,
    InvalidTheta,
)

CFG = load_config(None)
SPACE = CFG.space()


def test_space_layout():
    assert SPACE.d == params.N_INVARIANT + params.N_SITE_PARAMS * len(CFG.sites)
    assert params.INVARIANT_NAMES[:3] == ("MBL", "FTT", "UMM")
    # the eight weak boundary-layer / local ratios sit between UMM and BLD
    assert params.INVARIANT_NAMES[3:11] == (
        "BLHS", "BLVS", "BLHU", "BLVU", "LHS", "LVS", "LHU", "LVU"
    )
    assert params.INVARIANT_NAMES[-1] == "BLD"
    for site in CFG.sites:
        idx = SPACE.site_indices(site.number)
        suffixes = [SPACE.specs[i].name.split("_")[0] for i in idx]
        assert suffixes == list(params.SITE_SUFFIXES)


def test_transform_round_trip_all_specs():
    rng = np.random.default_rng(0)
    for spec in SPACE.specs:
        for u in rng.uniform(0.01, 0.99, size=25):
            v = spec.lo + u * (spec.hi - spec.lo)
            t = params.transform_forward(v, spec)
            back = params.transform_inverse(t, spec)
            assert back == pytest.approx(v, rel=1e-10, abs=1e-10)


def test_known_transform_values():
    mbl = SPACE.spec("MBL")  # logit over [40, 100]
    assert params.transform_forward(70.0, mbl) == pytest.approx(0.0, abs=1e-12)
    assert params.transform_inverse(0.0, mbl) == pytest.approx(70.0)
    ftt = SPACE.spec("FTT")  # plain log
    assert params.transform_forward(0.25, ftt) == pytest.approx(math.log(0.25))
    assert params.transform_inverse(math.log(0.5), ftt) == pytest.approx(0.5)


def test_log_jacobian_matches_finite_difference():
    # log_jacobian(t) should be ln |d v / d t| of the inverse transform
    h = 1e-6
    for name in ("MBL", "FTT", "UMM", "BLHS"):
        spec = SPACE.spec(name)
        for v in np.linspace(spec.lo, spec.hi, 7)[1:-1]:
            t = params.transform_forward(v, spec)
            fd = (params.transform_inverse(t + h, spec)
                  - params.transform_inverse(t - h, spec)) / (2 * h)
            assert params.log_jacobian(t, spec) == pytest.approx(
                math.log(abs(fd)), rel=1e-5
            )


def test_emulator_coordinate_clips_logit_edges():
    mbl = SPACE.spec("MBL")
    # the default MBL value sits exactly on the lower bound; the raw logit
    # is -inf there, the emulator coordinate is the 0.5% interior point
    edge = params.emulator_coordinate(mbl.lo, mbl)
    assert math.isfinite(edge)
    expect = math.log(params.U_CLIP / (1.0 - params.U_CLIP))
    assert edge == pytest.approx(expect, rel=1e-10)
    assert params.emulator_coordinate(mbl.hi, mbl) == pytest.approx(-expect, rel=1e-10)
    # interior points are untouched
    mid = 0.5 * (mbl.lo + mbl.hi)
    assert params.emulator_coordinate(mid, mbl) == pytest.approx(
        params.transform_forward(mid, mbl), abs=1e-12
    )


def test_clip_transformed_is_idempotent():
    ftt = SPACE.spec("FTT")
    t = params.transform_forward(0.3, ftt)
    c = params.clip_transformed(t, ftt)
    assert params.clip_transformed(c, ftt) == c


def test_turbulence_coupling_is_a_fixed_ratio():
    c = CFG.coupling
    # K_u scaling transfers to K_w, so sigma_w/sigma_u stays at its default
    ratio = c.sigma_w_default / c.sigma_u_default
    for su in (0.1, 0.25, 0.5, 0.8):
        out = params.derive_coupled_turbulence(su, c)
        assert out.sigma_u == su
        assert out.sigma_w == pytest.approx(ratio * su, rel=1e-12)
    assert params.derive_coupled_turbulence(c.sigma_u_default, c).feasible


def test_turbulence_feasibility_flag_and_strict():
    c = CFG.coupling
    bad = c.sigma_u_range[1] * 4.0
    out = params.derive_coupled_turbulence(bad, c)
    assert not out.feasible
    with pytest.raises(InfeasibleTurbulence):
        params.derive_coupled_turbulence(bad, c, strict=True)
    with pytest.raises(DomainError):
        params.derive_coupled_turbulence(-1.0, c)


def test_theta_vector_round_trip():
    th = SPACE.default_theta()
    assert th.n_sites == len(CFG.sites)
    flat = th.flatten()
    assert flat.shape == (SPACE.d,)
    again = SPACE.theta_from_vector(flat)
    np.testing.assert_array_equal(again.flatten(), flat)


def test_transform_vector_round_trip():
    rng = np.random.default_rng(3)
    vec = np.array([
        spec.lo + u * (spec.hi - spec.lo)
        for spec, u in zip(SPACE.specs, rng.uniform(0.05, 0.95, SPACE.d))
    ])
    tvec = SPACE.transform_vector(vec)
    back = SPACE.inverse_transform_vector(tvec)
    np.testing.assert_allclose(back, vec, rtol=1e-9, atol=1e-9)


def test_validate_vector_flags_out_of_range():
    vec = SPACE.defaults.copy()
    assert SPACE.validate_vector(vec)
    j = SPACE.index("UMM")
    vec[j] = SPACE.specs[j].hi * 1.5
    assert not SPACE.validate_vector(vec)
    with pytest.raises(InvalidTheta):
        SPACE.validate_vector(vec, strict=True)


def test_validate_vector_enforces_turbulence_feasibility():
    # FTT shares the sigma_u range, but an in-range value whose derived
    # sigma_w leaves its own range must be rejected
    vec = SPACE.defaults.copy()
    ftt = SPACE.spec("FTT")
    grid = np.linspace(ftt.lo, ftt.hi, 41)
    flags = []
    for v in grid:
        vec[SPACE.index("FTT")] = v
        flags.append(SPACE.validate_vector(vec))
    derived = [
        params.derive_coupled_turbulence(v, CFG.coupling).feasible for v in grid
    ]
    assert flags == derived


def test_dimension_mismatch_errors():
    with pytest.raises(DimensionMismatch):
        SPACE.theta_from_vector(np.zeros(SPACE.d + 1))
    with pytest.raises(DimensionMismatch):
        SPACE.transform_vector(np.zeros(3))
