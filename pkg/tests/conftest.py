import numpy as np
import pytest

from stommelbox import core, defaults


@pytest.fixture
def ctx():
    return defaults.context()


@pytest.fixture
def quiet_ctx():
    """Context with constant forcing (no seasonal cycle, no climate change)."""
    return core.ModelContext(
        params=defaults.params(),
        geometry=defaults.geometry(),
        constants=defaults.constants(),
        forcing=defaults.forcing().annual_mean(),
        scenario=core.ClimateScenario(enabled=False),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240117)
