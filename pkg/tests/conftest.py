import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from covcpd import BasisSpec, CurvePanel

settings.register_profile(
    "covcpd", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("covcpd")


def random_panel(rng, n=40, p=3, start=1, scale=None) -> CurvePanel:
    scale = rng.uniform(0.5, 2.0, p) if scale is None else scale
    return CurvePanel(rng.standard_normal((n, p)) * scale, BasisSpec(p, start))


def trapezoid_weights(n: int) -> np.ndarray:
    """Trapezoid weights for ``n`` equispaced points on [0, 1] including both ends."""
    w = np.full(n, 1.0 / (n - 1))
    w[[0, -1]] /= 2
    return w


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
