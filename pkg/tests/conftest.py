"""Shared fixtures: one small trained study reused across test modules.

Everything is seeded so reruns are bit-identical; the study is session
scoped because design + simulate + train takes a few seconds.
"""
import pytest

from emucal import experiment
from emucal.config import (
    Config,
    DesignSettings,
    InversionSettings,
    RegionSettings,
    Site,
)


def make_tiny_config(**overrides) -> Config:
    base = dict(
        sites=[
            Site(1, "AAA", 52.0, -1.0, 50.0, 10),
            Site(2, "BBB", 54.0, 1.0, 120.0, 8),
        ],
        regions=RegionSettings(n_regions=8, seed=5),
        design=DesignSettings(n_runs=24, exchange_budget=300, seed=3),
        inversion=InversionSettings(
            n_iter=3000, thin=5, batch_size=100, audit_every=200
        ),
    )
    base.update(overrides)
    return Config(**base)


@pytest.fixture(scope="session")
def tiny_config():
    return make_tiny_config()


@pytest.fixture(scope="session")
def tiny_study(tiny_config):
    return experiment.build_study(tiny_config, weather_seed=7)
