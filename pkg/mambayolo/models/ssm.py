"""State-space parameter containers."""
from dataclasses import dataclass

import numpy as np

from mambayolo.exceptions import DiscretizationError, ShapeError


def _vector(values, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise ShapeError(f"{name} must be a non-empty vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SsmParams:
    """Continuous diagonal SSM: h' = A h + B x, y = C h, sampled with step delta."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    delta: float

    def __post_init__(self):
        a = _vector(self.A, 'A')
        b = _vector(self.B, 'B')
        c = _vector(self.C, 'C')
        if not (a.shape == b.shape == c.shape):
            raise ShapeError(f"A, B, C must share the state axis, got {a.shape}, {b.shape}, {c.shape}")
        if not self.delta > 0:
            raise DiscretizationError(f"delta must be > 0, got {self.delta}")
        object.__setattr__(self, 'A', a)
        object.__setattr__(self, 'B', b)
        object.__setattr__(self, 'C', c)
        object.__setattr__(self, 'delta', float(self.delta))

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def is_stable(self) -> bool:
        return bool(np.all(self.A <= 0))


@dataclass(frozen=True)
class DiscreteSsm:
    """ZOH-discretized diagonal transition and input vectors."""

    a_bar: np.ndarray
    b_bar: np.ndarray

    def __post_init__(self):
        a = _vector(self.a_bar, 'a_bar')
        b = _vector(self.b_bar, 'b_bar')
        if a.shape != b.shape:
            raise ShapeError(f"a_bar and b_bar must share the state axis, got {a.shape} and {b.shape}")
        object.__setattr__(self, 'a_bar', a)
        object.__setattr__(self, 'b_bar', b)

    @property
    def state_dim(self) -> int:
        return self.a_bar.shape[0]


@dataclass(frozen=True)
class ScanKernel:
    """Impulse response k_bar[j] = c . (a_bar^j * b_bar) of a time-invariant scan."""

    k_bar: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'k_bar', _vector(self.k_bar, 'k_bar'))

    @property
    def length(self) -> int:
        return self.k_bar.shape[0]


@dataclass(frozen=True)
class SequenceBatch:
    """
    D independent channels of length L with per-step selective parameters.

    values and delta are D x L; b and c are N x L and shared by all channels.
    delta holds post-softplus timesteps.
    """

    values: np.ndarray
    delta: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2 or min(values.shape) < 1:
            raise ShapeError(f"values must be D x L with D, L >= 1, got {values.shape}")
        channels, length = values.shape
        delta = np.asarray(self.delta)
        if delta.shape != (channels, length):
            raise ShapeError(f"delta must be {channels} x {length} (channels x steps), got {delta.shape}")
        b = np.asarray(self.b)
        c = np.asarray(self.c)
        if b.ndim != 2 or b.shape[1] != length or b.shape[0] < 1:
            raise ShapeError(f"b must be N x {length} (state x steps), got {b.shape}")
        if c.shape != b.shape:
            raise ShapeError(f"c must match b's N x L shape {b.shape}, got {c.shape}")
        for name, arr in (('values', values), ('delta', delta), ('b', b), ('c', c)):
            object.__setattr__(self, name, arr)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    @property
    def state_dim(self) -> int:
        return self.b.shape[0]

    def astype(self, dtype) -> 'SequenceBatch':
        return SequenceBatch(
            values=self.values.astype(dtype),
            delta=self.delta.astype(dtype),
            b=self.b.astype(dtype),
            c=self.c.astype(dtype),
        )

    @classmethod
    def from_projections(cls, values, delta_raw, delta_bias, b, c) -> 'SequenceBatch':
        """Build a batch from raw Δ projections: delta = softplus(raw + bias)."""
        from mambayolo.services.ssm_scan import softplus

        raw = np.asarray(delta_raw, dtype=np.float64)
        bias = np.asarray(delta_bias, dtype=np.float64)
        if bias.ndim == 1:
            bias = bias[:, None]
        return cls(values=values, delta=softplus(raw + bias), b=b, c=c)


@dataclass(frozen=True)
class ScanGradients:
    """Gradients of a selective scan, each shaped like its primal."""

    x: np.ndarray
    delta: np.ndarray
    b: np.ndarray
    c: np.ndarray
    A: np.ndarray
    d_skip: np.ndarray = None

    def as_dict(self) -> dict:
        grads = {'x': self.x, 'delta': self.delta, 'b': self.b, 'c': self.c, 'A': self.A}
        if self.d_skip is not None:
            grads['d_skip'] = self.d_skip
        return grads
