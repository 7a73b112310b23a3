import numpy as np
import pytest

from implosion import params, profile, spectral


@pytest.fixture(scope="session")
def p3():
    return params.derive(d=3, gamma=2.0)


@pytest.fixture(scope="session")
def curve(p3):
    return profile.find_profile(p3)


@pytest.fixture(scope="session")
def physical(curve):
    return profile.reconstruct_physical(curve)


@pytest.fixture(scope="session")
def dampened(physical):
    return profile.dampen(physical, n_P=2.0, tau=0.0)


@pytest.fixture(scope="session")
def study(curve):
    return spectral.spectrum_study(curve, curve.params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
