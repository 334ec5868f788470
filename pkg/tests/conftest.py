import numpy as np
import pytest

from fracvia.fbm import FbmSpec, sample_fbm_circulant
from fracvia.grid import GridFunction


def smooth_driver(n=513, t0=0.0, t1=1.0):
    return GridFunction.from_callable(lambda s: np.sin(3 * s) + s, t0, t1, n)


def random_smooth(rng, n, t0=0.0, t1=1.0):
    """Random trigonometric function with a few low modes."""
    amp = rng.normal(size=3)
    freq = rng.uniform(0.5, 4.0, size=3)
    phase = rng.uniform(0, 2 * np.pi, size=3)
    times = np.linspace(t0, t1, n)
    vals = sum(a * np.sin(w * times + p) for a, w, p in zip(amp, freq, phase))
    return GridFunction(times, vals + rng.normal() * times)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fbm_driver():
    return sample_fbm_circulant(FbmSpec(0.75, grid_points=513, seed=7))


@pytest.fixture(scope="session")
def smooth():
    return smooth_driver()
