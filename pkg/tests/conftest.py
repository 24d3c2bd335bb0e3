from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from batstation.dataset import SyntheticConfig, generate_samples, placed_pulses
from batstation.grid import DEFAULT_NUMEROLOGY
from batstation.radar import generate_library
from batstation.reshape import ReshapeConfig
from batstation.sensing import init_templates

settings.register_profile("ci", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def numerology():
    return DEFAULT_NUMEROLOGY


@pytest.fixture(scope="session")
def reshape_cfg():
    return ReshapeConfig()


@pytest.fixture(scope="session")
def library():
    """Small pulse library: six waveforms of every type."""
    return generate_library(6, 0)


@pytest.fixture(scope="session")
def train_samples(library):
    return generate_samples(SyntheticConfig(), {r: 6 for r in range(1, 6)}, 0, library)


@pytest.fixture(scope="session")
def templates(library, train_samples, reshape_cfg):
    return init_templates(placed_pulses(train_samples, library), reshape_cfg)
