import pytest

from spec_funnel.backends.synthetic import SyntheticBackend, SyntheticConfig
from spec_funnel.gate import GateConfig


@pytest.fixture
def synthetic_config():
    return SyntheticConfig(seed=101)


@pytest.fixture
def backend(synthetic_config):
    return SyntheticBackend(synthetic_config)


@pytest.fixture
def gate_config():
    return GateConfig(tau=0.9)
