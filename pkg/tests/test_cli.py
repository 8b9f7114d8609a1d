"""End-to-end CLI checks on a miniature configuration."""
import json

import numpy as np
import pytest

from emucal import cli
from emucal.archive import load_trained
from emucal.config import load_config
from emucal.reconstruct import default_H
from emucal.simulator import build_site_configs, synthesize_observations

TINY_TOML = """\
[[sites]]
number = 1
code = "AAA"
lat = 52.0
lon = -1.0
height = 50.0
n_obs = 8

[[sites]]
number = 2
code = "BBB"
lat = 54.0
lon = 1.0
height = 120.0
n_obs = 6

[regions]
n_regions = 6
seed = 5

[design]
n_runs = 16
exchange_budget = 200
seed = 3

[inversion]
n_iter = 1200
thin = 4
batch_size = 100
audit_every = 200
sigma_y_range = [0.05, 3.0]

[observations]
noise_sd = 0.3
seed = 11
truth = {FTT = 0.4}
"""


@pytest.fixture()
def tiny_toml(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML)
    return path


def run(argv):
    return cli.main([str(a) for a in argv])


def test_full_pipeline(tiny_toml, tmp_path):
    out = tmp_path / "out"
    assert run(["design", "--config", tiny_toml, "--out", out]) == 0
    assert (out / "design.csv").exists()
    assert (out / "regions.csv").exists()
    manifest = json.loads((out / "design_manifest.json").read_text())
    assert manifest["n_runs"] == 16

    assert run(["simulate", "--config", tiny_toml, "--out", out]) == 0
    runs_manifest = json.loads((out / "runs" / "manifest.json").read_text())
    assert len(runs_manifest["runs"]) == 17  # default + design

    assert run(["train", "--config", tiny_toml, "--out", out]) == 0
    assert (out / "artifacts" / "manifest.json").exists()
    for fname in ("proportions_unweighted.csv", "proportions_weighted.csv"):
        lines = (out / fname).read_text().splitlines()
        assert lines[0].startswith("site,INT,MBL,")
        assert len(lines) == 3  # header + one row per site

    # observations consistent with the trained default H
    config = load_config(str(tiny_toml))
    site_configs = build_site_configs(config.sites, config.build_regions())
    artifacts, _ = load_trained(out / "artifacts")
    h0 = default_H(artifacts.basis, artifacts.means)
    y = synthesize_observations(h0, np.ones(h0.values.shape[1]), 0.2, seed=4)
    obs_path = tmp_path / "obs.csv"
    cli.write_observations(obs_path, y, site_configs)
    assert run(["invert", "--config", tiny_toml, "--out", out,
                "--obs", obs_path]) == 0
    summary = json.loads((out / "inversion_summary.json").read_text())
    assert summary["n_samples"] == (1200 - 600) // 4
    assert "with_uncertainty" in summary["total_flux"]
    for fname in ("chain_uncertain.csv", "chain_fixed.csv",
                  "parameter_shifts.csv", "region_overlaps.csv"):
        assert (out / fname).exists()
    overlaps = (out / "region_overlaps.csv").read_text().splitlines()
    assert len(overlaps) == 1 + 6


def test_design_is_idempotent(tiny_toml, tmp_path):
    out = tmp_path / "out"
    assert run(["design", "--config", tiny_toml, "--out", out]) == 0
    first = (out / "design.csv").read_bytes()
    assert run(["design", "--config", tiny_toml, "--out", out]) == 0
    assert (out / "design.csv").read_bytes() == first


def test_e2e_subcommand(tiny_toml, tmp_path):
    out = tmp_path / "out"
    assert run(["e2e", "--config", tiny_toml, "--out", out]) == 0
    report = json.loads((out / "e2e_report.json").read_text())
    assert report["total_flux"]["uncertain_width"] > 0.0
    assert "FTT" in report["parameters"]
    assert report["parameters"]["FTT"]["true"] == 0.4


def test_usage_errors_exit_1(tmp_path, capsys):
    assert cli.main([]) == 1
    assert cli.main(["frobnicate"]) == 1
    # invert requires --obs
    assert cli.main(["invert", "--out", str(tmp_path)]) == 1
    capsys.readouterr()


def test_validation_error_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("sites = [[[ nope")
    assert cli.main(["design", "--config", str(bad),
                     "--out", str(tmp_path / "o")]) == 2
    capsys.readouterr()


def test_runtime_error_exits_3(tiny_toml, tmp_path, capsys):
    # training without a design or runs directory is a runtime failure
    assert cli.main(["train", "--config", str(tiny_toml),
                     "--out", str(tmp_path / "empty")]) == 3
    capsys.readouterr()


def test_threads_env_fallback(tiny_toml, tmp_path, monkeypatch, capsys):
    out = tmp_path / "o"
    assert cli.main(["design", "--config", str(tiny_toml), "--out", str(out)]) == 0
    monkeypatch.setenv("EMUCAL_THREADS", "2")
    assert cli.main(["simulate", "--config", str(tiny_toml), "--out", str(out)]) == 0
    monkeypatch.setenv("EMUCAL_THREADS", "zero")
    assert cli.main(["simulate", "--config", str(tiny_toml), "--out", str(out)]) == 1
    assert cli.main(["simulate", "--config", str(tiny_toml), "--out", str(out),
                     "--threads", "0"]) == 1
    # explicit flag beats a bogus environment value
    assert cli.main(["simulate", "--config", str(tiny_toml), "--out", str(out),
                     "--threads", "1"]) == 0
    capsys.readouterr()
