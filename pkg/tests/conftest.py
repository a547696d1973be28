import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "lab",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "lab"))


@pytest.fixture(scope="session")
def square_map():
    from greenlab.sphere import make_rational_map

    return make_rational_map((0, 0, 1), (1,))


@pytest.fixture(scope="session")
def circle_cloud(square_map):
    """30k-point equilibrium cloud for z -> z^2; shared across test files."""
    from greenlab.measure import sample_equilibrium

    return sample_equilibrium(square_map, 30_000, burn_in=50, seed=101)
