"""
Neural-network kernels on C×H×W tensors.

Storage is float32; every reduction (convolution taps, norm statistics)
accumulates in float64 and is rounded once at the end. Convolutions sum taps
in a fixed order (input channel, kernel row, kernel column) for every output
element, so splitting the output channels across threads does not change a
single bit of the result.
"""
import logging
import math

import numpy as np

from mambayolo import get_thread_cap, parallel_map
from mambayolo.config import Config
from mambayolo.exceptions import DiscretizationError, ShapeError
from mambayolo.models.tensor import ActivationKind, ConvSpec, Tensor, freeze

logger = logging.getLogger(__name__)

_GELU_SCALE = math.sqrt(2.0 / math.pi)
_GELU_CUBIC = 0.044715


def _require_feature_map(x: np.ndarray, op: str) -> None:
    if x.ndim != 3:
        raise ShapeError(f"{op}: expected a C x H x W tensor, got shape {x.shape}")


def _require_vector(v, length: int, op: str, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (length,):
        raise ShapeError(f"{op}: {name} must have length {length} (channels axis), got shape {v.shape}")
    return v


def conv2d(x: Tensor, spec: ConvSpec, weight: np.ndarray, bias: np.ndarray = None) -> Tensor:
    """Direct 2-D cross-correlation with zero padding and channel groups."""
    x = np.asarray(x)
    _require_feature_map(x, 'conv2d')
    weight = np.asarray(weight)
    channels, height, width = x.shape
    if channels != spec.in_channels:
        raise ShapeError(f"conv2d: input channels axis is {channels}, expected {spec.in_channels}")
    expected = spec.weight_shape
    if weight.shape != expected:
        axis_names = ('output channels', 'input channels per group', 'kernel height', 'kernel width')
        if weight.ndim != 4:
            raise ShapeError(f"conv2d: weight must be rank 4 {expected}, got {weight.shape}")
        axis = next(i for i in range(4) if weight.shape[i] != expected[i])
        raise ShapeError(
            f"conv2d: weight {axis_names[axis]} axis is {weight.shape[axis]}, expected {expected[axis]}"
        )
    if bias is not None:
        bias = _require_vector(bias, spec.out_channels, 'conv2d', 'bias')
    elif spec.has_bias:
        raise ShapeError("conv2d: spec declares a bias but none was given")

    out_h, out_w = spec.output_size(height, width)
    if out_h < 1 or out_w < 1:
        raise ShapeError(
            f"conv2d: {height}x{width} input is smaller than the {spec.kernel_size}x{spec.kernel_size} kernel"
        )

    pad = spec.padding
    padded = np.pad(x.astype(np.float64), ((0, 0), (pad, pad), (pad, pad)))
    groups = spec.groups
    in_per_group = spec.in_channels // groups
    out_per_group = spec.out_channels // groups
    padded = padded.reshape(groups, in_per_group, height + 2 * pad, width + 2 * pad)
    kernel = weight.astype(np.float64).reshape(groups, out_per_group, in_per_group, spec.kernel_size, spec.kernel_size)
    out = np.zeros((groups, out_per_group, out_h, out_w), dtype=np.float64)

    stride = spec.stride
    row_span = stride * (out_h - 1) + 1
    col_span = stride * (out_w - 1) + 1

    def accumulate(block):
        group_slice, out_slice = block
        acc = out[group_slice, out_slice]
        taps = kernel[group_slice, out_slice]
        source = padded[group_slice]
        for ci in range(in_per_group):
            for kh in range(spec.kernel_size):
                for kw in range(spec.kernel_size):
                    patch = source[:, ci, kh:kh + row_span:stride, kw:kw + col_span:stride]
                    acc += taps[:, :, ci, kh, kw][:, :, None, None] * patch[:, None]
        return block

    parallel_map(accumulate, _conv_blocks(groups, out_per_group, get_thread_cap()))

    out = out.reshape(spec.out_channels, out_h, out_w)
    if bias is not None:
        out += bias[:, None, None]
    return freeze(out)


def _conv_blocks(groups: int, out_per_group: int, threads: int) -> list:
    """Disjoint (group, output-channel) slices of the conv output."""
    if threads <= 1:
        return [(slice(None), slice(None))]
    if groups > 1:
        bounds = np.linspace(0, groups, min(threads, groups) + 1).astype(int)
        return [(slice(lo, hi), slice(None)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    bounds = np.linspace(0, out_per_group, min(threads, out_per_group) + 1).astype(int)
    return [(slice(None), slice(lo, hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def batch_norm_infer(x: Tensor, mean, var, gamma, beta, eps: float = Config.NORM_EPS) -> Tensor:
    """Inference-mode batch norm with stored per-channel statistics."""
    x = np.asarray(x)
    _require_feature_map(x, 'batch_norm_infer')
    channels = x.shape[0]
    mean = _require_vector(mean, channels, 'batch_norm_infer', 'mean')
    var = _require_vector(var, channels, 'batch_norm_infer', 'var')
    gamma = _require_vector(gamma, channels, 'batch_norm_infer', 'gamma')
    beta = _require_vector(beta, channels, 'batch_norm_infer', 'beta')
    if eps < 0:
        raise DiscretizationError(f"batch_norm_infer: eps must be >= 0, got {eps}")
    if np.any(var < 0):
        bad = int(np.flatnonzero(var < 0)[0])
        raise DiscretizationError(f"batch_norm_infer: running variance of channel {bad} is negative ({var[bad]})")
    if np.any(var + eps == 0):
        bad = int(np.flatnonzero(var + eps == 0)[0])
        raise DiscretizationError(f"batch_norm_infer: channel {bad} has zero variance and eps=0")
    scale = gamma / np.sqrt(var + eps)
    out = (x.astype(np.float64) - mean[:, None, None]) * scale[:, None, None] + beta[:, None, None]
    return freeze(out)


def layer_norm(x: Tensor, gamma, beta, eps: float = Config.NORM_EPS) -> Tensor:
    """Normalize over the channel axis at every spatial position."""
    x = np.asarray(x)
    _require_feature_map(x, 'layer_norm')
    channels = x.shape[0]
    gamma = _require_vector(gamma, channels, 'layer_norm', 'gamma')
    beta = _require_vector(beta, channels, 'layer_norm', 'beta')
    values = x.astype(np.float64)
    mean = values.mean(axis=0)
    centered = values - mean
    var = (centered * centered).mean(axis=0)
    normed = centered / np.sqrt(var + eps)
    return freeze(normed * gamma[:, None, None] + beta[:, None, None])


def activate(x: Tensor, kind: ActivationKind) -> Tensor:
    """Elementwise SiLU, tanh-form GELU, or identity."""
    kind = ActivationKind(kind)
    if kind is ActivationKind.IDENTITY:
        return x
    values = np.asarray(x, dtype=np.float64)
    if kind is ActivationKind.SILU:
        # x * sigmoid(x), sigmoid via tanh to stay finite for large |x|
        out = values * 0.5 * (1.0 + np.tanh(0.5 * values))
    else:
        out = 0.5 * values * (1.0 + np.tanh(_GELU_SCALE * (values + _GELU_CUBIC * values ** 3)))
    return freeze(out)


def elementwise(a: Tensor, b: Tensor, op: str) -> Tensor:
    """Exact elementwise add or multiply of same-shape tensors."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        axis = next((i for i, (p, q) in enumerate(zip(a.shape, b.shape)) if p != q), min(a.ndim, b.ndim))
        raise ShapeError(f"elementwise {op}: shapes {a.shape} and {b.shape} differ on axis {axis}")
    if op == 'add':
        out = a.astype(np.float32) + b.astype(np.float32)
    elif op == 'mul':
        out = a.astype(np.float32) * b.astype(np.float32)
    else:
        raise ValueError(f"elementwise: unknown op {op!r}, expected 'add' or 'mul'")
    return freeze(out)


def concat_channels(*maps: Tensor) -> Tensor:
    """Concatenate feature maps along the channel axis."""
    if not maps:
        raise ShapeError("concat_channels: nothing to concatenate")
    spatial = maps[0].shape[1:]
    for m in maps:
        _require_feature_map(m, 'concat_channels')
        if m.shape[1:] != spatial:
            raise ShapeError(f"concat_channels: spatial shape {m.shape[1:]} does not match {spatial}")
    return freeze(np.concatenate(maps, axis=0))


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    """Nearest-neighbour upsampling of both spatial axes."""
    _require_feature_map(np.asarray(x), 'upsample_nearest')
    return freeze(np.repeat(np.repeat(x, factor, axis=1), factor, axis=2))
