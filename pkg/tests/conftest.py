import numpy as np
import pytest

from aquastereo import kernels
from aquastereo.rigs import VACUUM, rectified_rig, standard_rig


@pytest.fixture(scope="session")
def water_rig():
    return standard_rig()


@pytest.fixture(scope="session")
def vacuum_rig():
    return standard_rig(media=VACUUM)


@pytest.fixture(scope="session")
def rect_rig():
    return rectified_rig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    with kernels.use_backend(request.param):
        yield request.param


def random_unit(rng, n, around=None, max_angle=np.radians(60)):
    """Unit vectors within ``max_angle`` of ``around`` (default +z)."""
    around = np.array([0.0, 0.0, 1.0]) if around is None else np.asarray(around, float)
    v = rng.normal(size=(n, 3))
    v -= (v @ around)[:, None] * around
    v /= np.linalg.norm(v, axis=1)[:, None]
    ang = rng.uniform(0, max_angle, n)
    return np.cos(ang)[:, None] * around + np.sin(ang)[:, None] * v


# -- acceptance summary --------------------------------------------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    for key, value in report.user_properties:
        if key == "acceptance":
            num, title, detail = value
            entry = _ACCEPTANCE.setdefault(num, [title, True, []])
            entry[1] &= report.passed
            entry[2].append(detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, ok, details = _ACCEPTANCE[num]
        terminalreporter.write_line(
            f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}: {'; '.join(details)}"
        )
