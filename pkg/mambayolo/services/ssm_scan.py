"""
One-dimensional state-space scans.

All scans keep a diagonal transition per channel. Time-invariant scans can
run either as a recurrence (O(L·N)) or as a causal convolution with the
precomputed impulse response; selective scans, whose Δ, B and C change every
step, always run as a recurrence. Arithmetic is float64 throughout and
results come back in the input precision.
"""
import logging

import numpy as np

from mambayolo.config import Config
from mambayolo.exceptions import DiscretizationError, ShapeError
from mambayolo.models.ssm import DiscreteSsm, ScanGradients, ScanKernel, SequenceBatch, SsmParams

logger = logging.getLogger(__name__)

# |z| below which phi'(z) switches to its Taylor series
_DPHI_SERIES_THRESHOLD = 1e-3


def softplus(x):
    """log(1 + exp(x)) without overflow."""
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


def inverse_softplus(y):
    """x such that softplus(x) == y, for y > 0."""
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def _phi(z: np.ndarray) -> np.ndarray:
    """(exp(z) - 1) / z, continued by its series near zero."""
    z = np.asarray(z, dtype=np.float64)
    small = np.abs(z) < Config.ZOH_SERIES_THRESHOLD
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(safe) / safe)


def _dphi(z: np.ndarray) -> np.ndarray:
    """Derivative of _phi."""
    z = np.asarray(z, dtype=np.float64)
    small = np.abs(z) < _DPHI_SERIES_THRESHOLD
    safe = np.where(small, 1.0, z)
    exact = (np.exp(safe) * (safe - 1.0) + 1.0) / (safe * safe)
    series = 0.5 + z / 3.0 + z * z / 8.0 + z ** 3 / 30.0
    return np.where(small, series, exact)


def _out_dtype(*arrays) -> np.dtype:
    return np.result_type(np.float32, *[np.asarray(a).dtype for a in arrays])


def zoh_discretize(params: SsmParams) -> DiscreteSsm:
    """Zero-order-hold discretization of a diagonal SSM."""
    if not params.delta > 0:
        raise DiscretizationError(f"zoh_discretize: delta must be > 0, got {params.delta}")
    if not params.is_stable:
        logger.warning("zoh_discretize: A has positive entries; the scan is not stability-checked")
    z = params.delta * params.A
    return DiscreteSsm(a_bar=np.exp(z), b_bar=_phi(z) * params.delta * params.B)


def _sequence(x, name: str = 'x') -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise ShapeError(f"{name} must be a non-empty 1-D sequence, got shape {arr.shape}")
    return arr


def scan_states(disc: DiscreteSsm, x, h0=None) -> np.ndarray:
    """State trajectory h_1..h_L (L x N) of h_t = a_bar * h_{t-1} + b_bar * x_t."""
    x = _sequence(x)
    n = disc.state_dim
    h = np.zeros(n) if h0 is None else np.asarray(h0, dtype=np.float64)
    if h.shape != (n,):
        raise ShapeError(f"h0 must have length {n} (state axis), got shape {h.shape}")
    a = disc.a_bar
    b = disc.b_bar
    values = x.astype(np.float64)
    states = np.empty((values.shape[0], n))
    for t, x_t in enumerate(values):
        h = a * h + b * x_t
        states[t] = h
    return states


def scan_recurrent(disc: DiscreteSsm, c, x, h0=None) -> np.ndarray:
    """Run the discrete SSM as a recurrence: y_t = c . h_t."""
    x = _sequence(x)
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (disc.state_dim,):
        raise ShapeError(f"c must have length {disc.state_dim} (state axis), got shape {c.shape}")
    states = scan_states(disc, x, h0)
    return (states @ c).astype(_out_dtype(x))


def build_kernel(disc: DiscreteSsm, c, length: int) -> ScanKernel:
    """Impulse response k_bar[j] = c . (a_bar^j * b_bar), j < length."""
    if length < 1:
        raise ShapeError(f"build_kernel: length must be >= 1, got {length}")
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (disc.state_dim,):
        raise ShapeError(f"c must have length {disc.state_dim} (state axis), got shape {c.shape}")
    powers = np.power(disc.a_bar[None, :], np.arange(length, dtype=np.float64)[:, None])
    return ScanKernel(k_bar=(powers * (disc.b_bar * c)[None, :]).sum(axis=1))


def scan_convolutional(kernel: ScanKernel, x) -> np.ndarray:
    """Causal convolution y_t = sum_{j<=t} k_bar[j] x_{t-j} (zero initial state)."""
    x = _sequence(x)
    if kernel.length != x.shape[0]:
        raise ShapeError(f"scan_convolutional: kernel length {kernel.length} != sequence length {x.shape[0]}")
    y = np.convolve(x.astype(np.float64), kernel.k_bar)[:x.shape[0]]
    return y.astype(_out_dtype(x))


def _check_selective(batch: SequenceBatch, A: np.ndarray, d_skip) -> tuple:
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (batch.channels, batch.state_dim):
        raise ShapeError(
            f"A must be {batch.channels} x {batch.state_dim} (channels x state), got {A.shape}"
        )
    if d_skip is not None:
        d_skip = np.asarray(d_skip, dtype=np.float64)
        if d_skip.shape != (batch.channels,):
            raise ShapeError(f"d_skip must have length {batch.channels} (channels axis), got {d_skip.shape}")
    delta = np.asarray(batch.delta, dtype=np.float64)
    if not np.all(delta > 0):
        d, t = np.argwhere(~(delta > 0))[0]
        raise DiscretizationError(
            f"selective_scan: delta[{d}, {t}] = {delta[d, t]} is not positive (softplus bypassed?)"
        )
    if np.any(A > 0):
        logger.warning("selective_scan: A has positive entries; the scan is not stability-checked")
    return A, d_skip, delta


def _step_coefficients(delta_t: np.ndarray, A: np.ndarray, b_t: np.ndarray) -> tuple:
    """Per-step (a_bar, b_bar) for all channels: D x N each."""
    z = delta_t[:, None] * A
    return z, np.exp(z), _phi(z) * delta_t[:, None] * b_t[None, :]


def selective_scan(batch: SequenceBatch, A, d_skip=None, h0=None) -> np.ndarray:
    """
    Input-dependent scan: every step is ZOH-discretized with its own Δ, B.

    y[d, t] = c_t . h_t[d] (+ d_skip[d] * x[d, t]).
    """
    A, d_skip, delta = _check_selective(batch, A, d_skip)
    u = np.asarray(batch.values, dtype=np.float64)
    b = np.asarray(batch.b, dtype=np.float64)
    c = np.asarray(batch.c, dtype=np.float64)
    h = np.zeros(A.shape) if h0 is None else np.asarray(h0, dtype=np.float64)
    if h.shape != A.shape:
        raise ShapeError(f"h0 must be {A.shape} (channels x state), got {h.shape}")

    y = np.empty(u.shape)
    for t in range(batch.length):
        _, a_bar, b_bar = _step_coefficients(delta[:, t], A, b[:, t])
        h = a_bar * h + b_bar * u[:, t, None]
        y[:, t] = h @ c[:, t]
    if d_skip is not None:
        y += d_skip[:, None] * u
    return y.astype(_out_dtype(batch.values))


def selective_scan_backward(batch: SequenceBatch, A, upstream, d_skip=None) -> ScanGradients:
    """
    Reverse-time gradients of sum(upstream * selective_scan(batch, A, d_skip)).

    The forward states are recomputed and checkpointed in full (L+1 x D x N).
    """
    A, d_skip, delta = _check_selective(batch, A, d_skip)
    u = np.asarray(batch.values, dtype=np.float64)
    b = np.asarray(batch.b, dtype=np.float64)
    c = np.asarray(batch.c, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != u.shape:
        raise ShapeError(f"upstream must match the output shape {u.shape}, got {g.shape}")
    length = batch.length

    states = np.zeros((length + 1,) + A.shape)
    for t in range(length):
        _, a_bar, b_bar = _step_coefficients(delta[:, t], A, b[:, t])
        states[t + 1] = a_bar * states[t] + b_bar * u[:, t, None]

    grad_u = np.zeros(u.shape)
    grad_delta = np.zeros(u.shape)
    grad_b = np.zeros(b.shape)
    grad_c = np.zeros(c.shape)
    grad_A = np.zeros(A.shape)
    grad_h = np.zeros(A.shape)
    for t in reversed(range(length)):
        z, a_bar, b_bar = _step_coefficients(delta[:, t], A, b[:, t])
        phi = _phi(z)
        dphi = _dphi(z)
        delta_t = delta[:, t, None]
        b_t = b[None, :, t]

        grad_c[:, t] = g[:, t] @ states[t + 1]
        grad_h = grad_h + g[:, t, None] * c[None, :, t]

        grad_a = grad_h * states[t]
        grad_bbar = grad_h * u[:, t, None]
        grad_u[:, t] = np.sum(grad_h * b_bar, axis=1)
        grad_delta[:, t] = np.sum(grad_a * a_bar * A + grad_bbar * b_t * (phi + z * dphi), axis=1)
        grad_A += grad_a * a_bar * delta_t + grad_bbar * b_t * delta_t * delta_t * dphi
        grad_b[:, t] = np.sum(grad_bbar * phi * delta_t, axis=0)

        grad_h = grad_h * a_bar

    grad_d = None
    if d_skip is not None:
        grad_u += g * d_skip[:, None]
        grad_d = np.sum(g * u, axis=1)

    return ScanGradients(x=grad_u, delta=grad_delta, b=grad_b, c=grad_c, A=grad_A, d_skip=grad_d)
