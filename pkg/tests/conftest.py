import logging

import numpy as np
import pytest

from mambayolo import get_thread_cap, set_thread_cap
from mambayolo.models.model_config import ModelConfig
from mambayolo.services.initializer import init_weights


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope='session')
def tiny_config():
    return ModelConfig.shipped('tiny')


@pytest.fixture(scope='session')
def tiny_weights(tiny_config):
    return init_weights(tiny_config, seed=0)


@pytest.fixture
def image64(rng):
    return rng.uniform(0, 1, (3, 64, 64)).astype(np.float32)


@pytest.fixture(autouse=True)
def restore_globals():
    """Thread cap and root logging handlers are process-wide; put them back after each test."""
    cap = get_thread_cap()
    root = logging.getLogger()
    handlers = list(root.handlers)
    level = root.level
    yield
    set_thread_cap(cap)
    for handler in list(root.handlers):
        if handler not in handlers:
            root.removeHandler(handler)
    for handler in handlers:
        if handler not in root.handlers:
            root.addHandler(handler)
    root.setLevel(level)
