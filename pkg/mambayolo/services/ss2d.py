"""
2-D selective scan (SS2D).

A feature map is flattened along four paths (row-major, column-major and
their reversals), each path runs its own selective scan, and the four
outputs are scattered back onto the grid and summed. The sum always runs in
MERGE_ORDER and accumulates in float64, so the result does not depend on
which thread finished first.
"""
import logging
import math

import numpy as np

from mambayolo import parallel_map
from mambayolo.exceptions import ShapeError
from mambayolo.models.scan_direction import MERGE_ORDER, DirectionalSequences, ScanDirection
from mambayolo.models.ssm import SequenceBatch
from mambayolo.models.tensor import ActivationKind, ConvSpec, Tensor, freeze
from mambayolo.models.weights import ParamSpec
from mambayolo.services.ssm_scan import selective_scan
from mambayolo.services.tensor_ops import activate, conv2d, elementwise, layer_norm

logger = logging.getLogger(__name__)


def dt_rank(channels: int) -> int:
    """Rank of the Δ projection for a block of the given model width."""
    return math.ceil(channels / 16)


def cross_scan_expand(fm: Tensor) -> DirectionalSequences:
    """Flatten a C x H x W map along each of the four scan directions."""
    fm = np.asarray(fm)
    if fm.ndim != 3:
        raise ShapeError(f"cross_scan_expand: expected a C x H x W tensor, got shape {fm.shape}")
    channels, height, width = fm.shape
    flat = fm.reshape(channels, height * width)
    sequences = {d: freeze(flat[:, d.order(height, width)]) for d in MERGE_ORDER}
    return DirectionalSequences(sequences=sequences, height=height, width=width)


def cross_scan_merge(seqs: DirectionalSequences) -> Tensor:
    """Scatter each directional sequence back onto the grid and sum them."""
    channels, height, width = seqs.channels, seqs.height, seqs.width
    acc = np.zeros((channels, height * width), dtype=np.float64)
    for direction in MERGE_ORDER:
        placed = np.empty((channels, height * width), dtype=np.float64)
        placed[:, direction.order(height, width)] = seqs[direction]
        acc += placed
    return freeze(acc.reshape(channels, height, width))


def _direction_scan(seq: np.ndarray, params: dict) -> np.ndarray:
    """Project Δ, B, C from one directional sequence and scan it."""
    x_proj = np.asarray(params['x_proj'], dtype=np.float64)
    dt_weight = np.asarray(params['dt_weight'], dtype=np.float64)
    rank = dt_weight.shape[1]
    state_dim = (x_proj.shape[0] - rank) // 2
    if x_proj.shape[1] != seq.shape[0] or x_proj.shape[0] != rank + 2 * state_dim:
        raise ShapeError(
            f"x_proj must be (R+2N) x {seq.shape[0]} with R={rank}, got {x_proj.shape}"
        )
    projected = x_proj @ seq.astype(np.float64)
    dt_raw = projected[:rank]
    b = projected[rank:rank + state_dim]
    c = projected[rank + state_dim:]
    batch = SequenceBatch.from_projections(
        values=seq,
        delta_raw=dt_weight @ dt_raw,
        delta_bias=params['dt_bias'],
        b=b,
        c=c,
    )
    A = -np.exp(np.asarray(params['a_log'], dtype=np.float64))
    return selective_scan(batch, A, d_skip=params.get('d_skip'))


def selective_cross_scan(x: Tensor, direction_params: dict, identity: bool = False) -> Tensor:
    """
    Expand, scan every direction with its own parameters, and merge.

    direction_params maps each ScanDirection to a dict with keys x_proj,
    dt_weight, dt_bias, a_log and optionally d_skip. With identity=True the
    scans are skipped and the result is exactly 4 * x.
    """
    seqs = cross_scan_expand(x)
    if identity:
        return cross_scan_merge(seqs)

    missing = [d.value for d in MERGE_ORDER if d not in direction_params]
    if missing:
        raise ShapeError(f"selective_cross_scan: no parameters for {', '.join(missing)}")

    scanned = parallel_map(lambda d: _direction_scan(seqs[d], direction_params[d]), MERGE_ORDER)
    return cross_scan_merge(seqs.replace(dict(zip(MERGE_ORDER, scanned))))


def direction_params_from(weights) -> dict:
    """Unstack per-direction SS2D parameters (stacked in MERGE_ORDER)."""
    x_proj = weights['x_proj.weight']
    if x_proj.shape[0] != len(MERGE_ORDER):
        raise ShapeError(f"x_proj.weight must stack {len(MERGE_ORDER)} directions, got {x_proj.shape}")
    d_skip = weights.get('d_skip')
    return {
        direction: {
            'x_proj': x_proj[k],
            'dt_weight': weights['dt_proj.weight'][k],
            'dt_bias': weights['dt_proj.bias'][k],
            'a_log': weights['a_log'][k],
            'd_skip': None if d_skip is None else d_skip[k],
        }
        for k, direction in enumerate(MERGE_ORDER)
    }


def _pointwise(x: Tensor, weight, bias=None) -> Tensor:
    spec = ConvSpec.from_weight(np.asarray(weight), has_bias=bias is not None)
    return conv2d(x, spec, weight, bias)


def ss2d_apply(fm: Tensor, weights, identity: bool = False, trace: dict = None, path: str = 'ss2d') -> Tensor:
    """
    Full SS2D operator on a C x H x W map.

    in_proj splits into a scan branch x and a gate z; x goes through a
    depthwise 3x3 conv and SiLU, the four-way selective scan, and a
    per-position LayerNorm, is gated by SiLU(z), and is projected back to C.
    """
    fm = np.asarray(fm)
    if fm.ndim != 3:
        raise ShapeError(f"ss2d_apply: expected a C x H x W tensor, got shape {fm.shape}")
    in_weight = weights['in_proj.weight']
    if in_weight.shape[1] != fm.shape[0]:
        raise ShapeError(f"ss2d_apply: input channels axis is {fm.shape[0]}, expected {in_weight.shape[1]}")

    hidden = in_weight.shape[0] // 2
    xz = _pointwise(fm, in_weight)
    x, z = xz[:hidden], xz[hidden:]

    dw_spec = ConvSpec(hidden, hidden, 3, groups=hidden, has_bias=True)
    x = activate(conv2d(x, dw_spec, weights['conv.weight'], weights['conv.bias']), ActivationKind.SILU)

    merged = selective_cross_scan(x, direction_params_from(weights), identity=identity)
    if trace is not None:
        trace[f"{path}.merged"] = merged

    y = layer_norm(merged, weights['out_norm.weight'], weights['out_norm.bias'])
    y = elementwise(y, activate(z, ActivationKind.SILU), 'mul')
    return _pointwise(y, weights['out_proj.weight'])


def ss2d_plan(prefix: str, channels: int, hidden: int, state_dim: int) -> list:
    """Parameters of one SS2D operator of width `channels` and scan width `hidden`."""
    rank = dt_rank(channels)
    k = len(MERGE_ORDER)
    return [
        ParamSpec(f"{prefix}.in_proj.weight", (2 * hidden, channels, 1, 1), fan_in=channels),
        ParamSpec(f"{prefix}.conv.weight", (hidden, 1, 3, 3), fan_in=9),
        ParamSpec(f"{prefix}.conv.bias", (hidden,), init='zeros'),
        ParamSpec(f"{prefix}.x_proj.weight", (k, rank + 2 * state_dim, hidden), fan_in=hidden),
        ParamSpec(f"{prefix}.dt_proj.weight", (k, hidden, rank), fan_in=rank),
        ParamSpec(f"{prefix}.dt_proj.bias", (k, hidden), init='dt_bias'),
        ParamSpec(f"{prefix}.a_log", (k, hidden, state_dim), init='a_log'),
        ParamSpec(f"{prefix}.d_skip", (k, hidden), init='ones'),
        ParamSpec(f"{prefix}.out_norm.weight", (hidden,), init='ones'),
        ParamSpec(f"{prefix}.out_norm.bias", (hidden,), init='zeros'),
        ParamSpec(f"{prefix}.out_proj.weight", (channels, hidden, 1, 1), fan_in=hidden),
    ]
