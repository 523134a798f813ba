import time

import numpy as np
import pytest

from phdyn.systems import load_system, shift_system, torus_system


@pytest.fixture(scope="session")
def torus():
    return load_system("torus")


@pytest.fixture(scope="session")
def shift():
    return load_system("shift")


@pytest.fixture(scope="session")
def flat_torus():
    return torus_system(a=0.0, beta=0.0)


@pytest.fixture(scope="session")
def flat_shift():
    return shift_system(a=(0.0, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def gikn6(shift):
    """The default six-step GIKN sequence; built once and shared."""
    from phdyn.experiments import ExperimentConfig, gikn_target

    t0 = time.perf_counter()
    seq = gikn_target(shift, ExperimentConfig(experiment="nonhyp"))
    seq.build_seconds = time.perf_counter() - t0
    return seq


ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, ok, detail):
        line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
