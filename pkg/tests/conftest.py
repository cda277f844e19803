import os
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    # shared fixtures are immutable values
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from crowdflux import EfficiencyFunction, FluxModel, WeightFunction, build_grid  # noqa: E402


@pytest.fixture
def lwr():
    return FluxModel(v_max=1.0)


@pytest.fixture
def grid():
    return build_grid(-6.0, 1.0, 5e-3)


@pytest.fixture
def validation_p():
    return EfficiencyFunction.piecewise_constant((0.21, 0.168, 0.021), (0.566, 0.731))


@pytest.fixture
def fis_p():
    return EfficiencyFunction.piecewise_linear(0.24, 0.05, 0.5, 0.9)


@pytest.fixture
def ramp():
    return WeightFunction(1.0, anchor=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(autouse=True)
def _quiet_snaps():
    from crowdflux import SnapWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SnapWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
