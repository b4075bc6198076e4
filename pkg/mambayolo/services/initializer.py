"""
Deterministic weight initialization.

Every tensor draws from its own Philox stream keyed by (seed, layer path),
so a layer's values do not depend on which other layers exist or on the
order they are allocated in.
"""
import hashlib
import logging

import numpy as np

from mambayolo.models.weights import ParamSpec, Weights
from mambayolo.services.backbone import model_plan
from mambayolo.services.ssm_scan import inverse_softplus

logger = logging.getLogger(__name__)

# Range of the initial timestep, sampled log-uniformly
DT_MIN = 1e-3
DT_MAX = 1e-1

_KEY_MASK = (1 << 64) - 1


def path_key(path: str) -> int:
    """64-bit blake2b digest of a layer path."""
    return int.from_bytes(hashlib.blake2b(path.encode('utf-8'), digest_size=8).digest(), 'little')


def keyed_generator(seed: int, path: str) -> np.random.Generator:
    """Counter-based generator for one layer: Philox with a 128-bit (seed, path) key."""
    key = ((seed & _KEY_MASK) << 64) | path_key(path)
    return np.random.Generator(np.random.Philox(key=key))


def initial_value(spec: ParamSpec, seed: int) -> np.ndarray:
    shape = tuple(spec.shape)
    if spec.init == 'zeros':
        return np.zeros(shape, dtype=np.float32)
    if spec.init == 'ones':
        return np.ones(shape, dtype=np.float32)
    if spec.init == 'a_log':
        # A[n] = -(n + 1) along the state axis
        return np.broadcast_to(np.log(np.arange(1, shape[-1] + 1, dtype=np.float64)), shape).astype(np.float32)
    rng = keyed_generator(seed, spec.path)
    if spec.init == 'uniform':
        bound = 1.0 / np.sqrt(spec.fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)
    if spec.init == 'dt_bias':
        dt = np.exp(rng.uniform(np.log(DT_MIN), np.log(DT_MAX), size=shape))
        return inverse_softplus(dt).astype(np.float32)
    raise ValueError(f"{spec.path}: unknown initializer {spec.init!r}")


def allocate(plan: list, seed: int) -> Weights:
    """Materialize a parameter plan."""
    params = {}
    buffers = {}
    for spec in plan:
        target = buffers if spec.buffer else params
        if spec.path in params or spec.path in buffers:
            raise ValueError(f"duplicate weight path {spec.path!r}")
        value = np.ascontiguousarray(initial_value(spec, seed))
        value.flags.writeable = False
        target[spec.path] = value
    return Weights(params, buffers)


def init_weights(config, seed: int = None) -> Weights:
    """Allocate and initialize every weight of the model described by config."""
    seed = config.seed if seed is None else seed
    plan = model_plan(config)
    weights = allocate(plan, seed)
    logger.info("Initialized %d tensors (%d parameters) for %s with seed %d",
                len(plan), weights.parameter_count(), config.variant, seed)
    return weights
