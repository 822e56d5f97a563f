"""Shared fixtures: the four reference builds (two examples x two cocycles).

Session scoped because building certifies ~1e4 samples each; tests treat the
returned spacetimes as read-only.
"""

import pytest

from btzgeo.builder import BuildSettings, build
from btzgeo.representations import builtin_examples


@pytest.fixture(scope="session")
def examples():
    return builtin_examples()


def _build(ex, deform_scale):
    rep = ex.representation if deform_scale == 0 else ex.deformed(deform_scale)
    return build(rep, ex.triangulation, BuildSettings())


@pytest.fixture(scope="session")
def gamma2_zero(examples):
    return _build(examples["gamma2"], 0)


@pytest.fixture(scope="session")
def gamma2_deformed(examples):
    return _build(examples["gamma2"], 1.0)


@pytest.fixture(scope="session")
def torus_zero(examples):
    return _build(examples["punctured_torus"], 0)


@pytest.fixture(scope="session")
def torus_deformed(examples):
    return _build(examples["punctured_torus"], 1.0)
