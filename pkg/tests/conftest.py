"""Shared fixtures.

Thread pinning must happen before numpy touches BLAS, so conftest sets the
same env vars the package does. Everything downstream is single-threaded,
which keeps run-to-run results bit-identical.
"""

import os

for var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
):
    os.environ.setdefault(var, "1")

import numpy as np
import pytest

from mechlearn import AuctionSpec, ValuationModel


ACCEPTANCE_LINES = []


def record_criterion(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    return line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def spec_2x2():
    return AuctionSpec(2, 2, "additive")


@pytest.fixture
def spec_2x2_ud():
    return AuctionSpec(2, 2, "unit_demand")


@pytest.fixture
def uniform_model():
    return ValuationModel(0.0, 1.0)
