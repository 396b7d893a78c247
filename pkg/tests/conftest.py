import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from asdecomp.media import DISC, interpolate_to_mesh, single_inclusion
from asdecomp.mesh import build_uniform_mesh

settings.register_profile(
    "default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

UNIT = (0.0, 0.0, 1.0, 1.0)

# criterion number -> (passed, detail), printed after the run
_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str) -> None:
        _CRITERIA[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def disc_setup():
    """Disc medium on a 40x40 unit-square mesh."""
    mesh = build_uniform_mesh(UNIT, 40, 40)
    u = single_inclusion(DISC)
    return mesh, u, interpolate_to_mesh(u, mesh)
