"""Shared fixtures and Hypothesis settings."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from yespheres.spectral import standard_basis

settings.register_profile(
    "default", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def basis1():
    return standard_basis(1)


@pytest.fixture(scope="session")
def basis1_small():
    return standard_basis(1, 8)


@pytest.fixture(scope="session")
def basis2():
    return standard_basis(2, 8)


@pytest.fixture(scope="session")
def bases(basis1, basis2):
    return {1: basis1, 2: basis2}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_vectors(rng, count, dim):
    y = rng.normal(size=(count, dim))
    return y / np.linalg.norm(y, axis=1)[:, None]


# -- acceptance reporting --------------------------------------------------------

_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion and return the flag."""
    def record(label: str, ok: bool, detail: str = "") -> bool:
        line = f"{label}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
