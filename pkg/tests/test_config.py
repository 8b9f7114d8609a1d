"""Config parsing, the reference setup, invariant overrides and regions."""
import numpy as np
import pytest

from emucal import config
from emucal.errors import ParseError


def test_reference_config_round_trips_through_toml(tmp_path):
    text = config.reference_config_toml()
    path = tmp_path / "ref.toml"
    path.write_text(text)
    loaded = config.load_config(path)
    builtin = config.load_config(None)
    assert [s.code for s in loaded.sites] == [s.code for s in builtin.sites]
    assert loaded.design == builtin.design
    assert loaded.simulator == builtin.simulator
    assert loaded.inversion == builtin.inversion
    assert loaded.regions == builtin.regions
    np.testing.assert_array_equal(loaded.space().defaults, builtin.space().defaults)


def test_reference_setup_shape():
    cfg = config.load_config(None)
    assert len(cfg.sites) == 4
    assert cfg.regions.n_regions == 149
    assert cfg.design.n_runs == 50
    assert cfg.space().d == 24
    assert cfg.inversion.n_iter == 100000
    assert cfg.inversion.burn_in == 0.5
    assert cfg.inversion.thin == 10


def test_bad_toml_raises_parse_error(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("sites = [[[ not toml")
    with pytest.raises(ParseError):
        config.load_config(path)


def test_missing_file_raises_oserror():
    with pytest.raises(OSError):
        config.load_config("/no/such/file.toml")


def test_invariant_override_changes_only_named_parameter():
    plain = config.invariant_specs()
    moved = config.invariant_specs([{"name": "MBL", "default": 70.0}])
    assert [s.name for s in moved] == [s.name for s in plain]
    for a, b in zip(plain, moved):
        if a.name == "MBL":
            assert b.default == 70.0
            assert (b.lo, b.hi) == (a.lo, a.hi)
        else:
            assert a == b


def test_invariant_override_range():
    specs = config.invariant_specs([{"name": "UMM", "range": [0.2, 0.6], "default": 0.4}])
    umm = next(s for s in specs if s.name == "UMM")
    assert (umm.lo, umm.hi, umm.default) == (0.2, 0.6, 0.4)


def test_unknown_invariant_rejected():
    with pytest.raises(ParseError):
        config.invariant_specs([{"name": "XYZ", "default": 1.0}])


def test_regions_deterministic_and_in_range():
    settings = config.RegionSettings(n_regions=10, seed=4)
    a = config.build_regions(settings)
    b = config.build_regions(settings)
    np.testing.assert_array_equal(a.centroids, b.centroids)
    np.testing.assert_array_equal(a.prior_flux, b.prior_flux)
    assert a.centroids.shape == (10, 2)
    assert a.prior_flux.shape == (10,)
    assert len(a.labels) == 10
    lat_lo, lat_hi = settings.lat_range
    lon_lo, lon_hi = settings.lon_range
    assert np.all((a.centroids[:, 0] >= lat_lo) & (a.centroids[:, 0] <= lat_hi))
    assert np.all((a.centroids[:, 1] >= lon_lo) & (a.centroids[:, 1] <= lon_hi))
    f_lo, f_hi = settings.flux_range
    assert np.all((a.prior_flux >= f_lo) & (a.prior_flux <= f_hi))
    c = config.build_regions(config.RegionSettings(n_regions=10, seed=5))
    assert not np.array_equal(a.centroids, c.centroids)


def test_site_specs_center_on_site():
    site = config.Site(3, "CCC", 51.5, -2.0, 80.0, 12)
    specs = config.site_specs(site)
    names = [s.name for s in specs]
    assert names == ["X_3", "Y_3", "Z_3"]
    x, y, z = specs
    assert x.lo < site.lat < x.hi
    assert y.lo < site.lon < y.hi
    assert z.lo < site.height < z.hi
    assert all(s.site == 3 for s in specs)
