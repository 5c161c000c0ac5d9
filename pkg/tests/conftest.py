from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from willmore_lab import shapes
from willmore_lab.errors import ObtuseAreaWarning

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SQRT2 = math.sqrt(2.0)


@pytest.fixture(autouse=True)
def _quiet_obtuse():
    # the mixed-area clamp fires on every vertex of sheared grid tori; it is
    # informative for users but noise in the test log
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ObtuseAreaWarning)
        yield


@pytest.fixture(scope="session")
def sphere3():
    return shapes.icosphere(3)


@pytest.fixture(scope="session")
def sphere4():
    return shapes.icosphere(4)


@pytest.fixture(scope="session")
def torus32():
    return shapes.torus(SQRT2, 1.0, 32, 32)


@pytest.fixture(scope="session")
def torus_uj64():
    return shapes.torus(SQRT2, 1.0, 64, 64, pattern="unionjack")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# -- acceptance report ---------------------------------------------------------------------

ACCEPTANCE: dict = {}


def record_criterion(key: str, ok: bool, detail: str) -> None:
    """Register one acceptance line; printed at the end of the session."""
    ACCEPTANCE[key] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    def order(k):
        num = "".join(ch for ch in k if ch.isdigit())
        return (int(num), k)
    for key in sorted(ACCEPTANCE, key=order):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>3}: {'PASS' if ok else 'FAIL'}  {detail}")
