"""Trained-artifact archive: round trip and tamper detection."""
import json

import numpy as np
import pytest

from emucal import archive
from emucal.errors import ArtifactMismatch, ParseError


def test_save_load_round_trip(tiny_study, tmp_path):
    art = tiny_study.artifacts
    out = archive.save_trained(tmp_path / "bundle", art, tiny_study.tables)
    assert out.exists()
    loaded, tables = archive.load_trained(tmp_path / "bundle")
    assert loaded.pipeline_hash == art.pipeline_hash
    assert loaded.basis.site_order == art.basis.site_order
    for site in art.basis.site_order:
        a, b = art.basis.sites[site], loaded.basis.sites[site]
        np.testing.assert_array_equal(a.u, b.u)
        np.testing.assert_array_equal(a.s, b.s)
        np.testing.assert_array_equal(a.v, b.v)
        ma, mb = art.means.sites[site], loaded.means.sites[site]
        np.testing.assert_array_equal(ma.row_means, mb.row_means)
        np.testing.assert_array_equal(ma.col_means, mb.col_means)
        assert ma.overall == mb.overall
        ea, eb = art.models.sites[site], loaded.models.sites[site]
        assert ea.columns == eb.columns
        for fa, fb in zip(ea.fits, eb.fits):
            np.testing.assert_array_equal(fa.selected, fb.selected)
            np.testing.assert_array_equal(fa.coef, fb.coef)
            assert fa.resid_var == fb.resid_var
            assert fa.aic == fb.aic
        np.testing.assert_array_equal(tables.sites[site],
                                      tiny_study.tables.sites[site])
    # the loaded space reproduces the original specs
    assert [s.name for s in loaded.space.specs] == \
        [s.name for s in tiny_study.space.specs]
    np.testing.assert_array_equal(loaded.space.defaults,
                                  tiny_study.space.defaults)


def test_load_detects_tampered_contents(tiny_study, tmp_path):
    archive.save_trained(tmp_path / "bundle", tiny_study.artifacts,
                         tiny_study.tables)
    target = None
    for p in sorted((tmp_path / "bundle").iterdir()):
        if p.suffix == ".csv" and "basis" in p.name:
            target = p
            break
    assert target is not None, "expected a basis CSV in the bundle"
    lines = target.read_text().splitlines()
    cells = lines[1].split(",")
    cells[-1] = repr(float(cells[-1]) + 0.5)
    lines[1] = ",".join(cells)
    target.write_text("\n".join(lines) + "\n")
    with pytest.raises(ArtifactMismatch):
        archive.load_trained(tmp_path / "bundle")


def test_load_detects_tampered_manifest_hash(tiny_study, tmp_path):
    archive.save_trained(tmp_path / "bundle", tiny_study.artifacts,
                         tiny_study.tables)
    mpath = tmp_path / "bundle" / "manifest.json"
    manifest = json.loads(mpath.read_text())
    manifest["pipeline_hash"] = "f" * 64
    mpath.write_text(json.dumps(manifest))
    with pytest.raises(ArtifactMismatch):
        archive.load_trained(tmp_path / "bundle")


def test_load_missing_manifest(tmp_path):
    with pytest.raises(ParseError):
        archive.load_trained(tmp_path)
