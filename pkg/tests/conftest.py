import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from itwlab.fbm import fbm_from_lattice, sample_lattice

settings.register_profile("itwlab", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("itwlab")


@pytest.fixture
def lattice():
    return sample_lattice(1, 2.0**-6, 1.0, 1.0, seed=7, path_index=0)


@pytest.fixture(params=[0.3, 0.7], ids=["H03", "H07"])
def hurst(request):
    return request.param


@pytest.fixture
def fbm_path(lattice, hurst):
    return fbm_from_lattice(lattice, hurst)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import REPORT

    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
