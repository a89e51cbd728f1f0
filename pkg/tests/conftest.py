import numpy as np
import pytest

from geoimp.liegroup import Pose, exp_so3


def series_expm(X, terms=20, squarings=2):
    """Truncated matrix power series, kept independent of the closed forms.

    The series is summed for X / 2^squarings and squared back; at |X| = 3 an
    unscaled 20-term sum is only good to ~1e-9.
    """
    Y = X / 2.0**squarings
    out = np.eye(X.shape[0])
    term = np.eye(X.shape[0])
    for k in range(1, terms):
        term = term @ Y / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def random_rotation(rng, max_angle=np.pi - 0.05):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return exp_so3(axis * rng.uniform(0.0, max_angle))


def random_pose(rng, max_angle=np.pi - 0.05, scale=1.0):
    return Pose(random_rotation(rng, max_angle), rng.uniform(-scale, scale, size=3))


@pytest.fixture
def rng():
    return np.random.default_rng(20231016)


ACCEPTANCE: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
