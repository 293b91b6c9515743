import numpy as np
import pytest
from hypothesis import settings

from eqzlab import weights
from eqzlab.sphere import Points, make_grid

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid():
    return make_grid()


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(80, 120)


@pytest.fixture(scope="session")
def corpus():
    """The default weight corpus."""
    return {
        "constant": weights.constant(0.0),
        "scaled_fs": weights.scaled_fs(0.5),
        "gauss_bump": weights.gauss_bump(2.0, 0.7),
        "holder_bump": weights.holder_bump(1.0, 0.5, "north"),
    }


def random_points(n, seed=0):
    rng = np.random.default_rng(seed)
    return Points.from_xyz(rng.normal(size=(n, 3)))


def exp_map(x, v):
    """Geodesic exponential map on S^2 (x unit, v tangent)."""
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(nv > 0, v / np.where(nv > 0, nv, 1.0), 0.0)
    return np.cos(nv) * x + np.sin(nv) * d


def tangent_frame(x):
    a = np.where(np.abs(x[:, 2:3]) < 0.9, np.array([[0.0, 0.0, 1.0]]), np.array([[1.0, 0.0, 0.0]]))
    e1 = np.cross(x, a)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(x, e1)
    return e1, e2


# acceptance criteria report one line each; the lines are repeated in the terminal summary
ACCEPTANCE: dict = {}


def record_criterion(key: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[key] = f"{key} {'PASS' if passed else 'FAIL'}: {detail}"
    print(ACCEPTANCE[key])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
            terminalreporter.write_line(ACCEPTANCE[key])
