"""Shared fixtures and the acceptance verdict summary."""
import os

import numpy as np
import pytest
from hypothesis import settings

from uavslice.config import PRESETS, reduced_rural

settings.register_profile("default", deadline=None, max_examples=50)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))

# acceptance tests append (criterion, passed, detail) here; printed at the end of the session
VERDICTS = []


@pytest.fixture
def rural():
    return PRESETS["rural"]


@pytest.fixture
def urban():
    return PRESETS["urban"]


@pytest.fixture
def small():
    """Reduced rural world with short episodes, cheap enough for per-test rollouts."""
    return reduced_rural(max_steps=20)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(VERDICTS, key=lambda v: v[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
