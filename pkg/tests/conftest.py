import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nehari_bv import DiscreteDomain, ScalarField

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_field(rng, nx=8, ny=None, h=None, scale=1.0):
    ny = nx if ny is None else ny
    dom = DiscreteDomain(nx, ny, 1.0 / max(nx, ny) if h is None else h)
    return ScalarField(dom, scale * rng.standard_normal(dom.shape))


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
