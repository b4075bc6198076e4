"""
Composite blocks: LocalSpatial (LS), ResGated (RG), the MLP variants used
for ablations, and the ODSS block that chains them around SS2D.

Every public block takes a FeatureMap and a Weights view scoped to the
block, and returns a FeatureMap. Widths are read off the weight shapes, so
a block runs with whatever its weights were planned for.
"""
import logging

import numpy as np

from mambayolo.exceptions import ShapeError
from mambayolo.models.feature_map import FeatureMap, MlpVariant, OdssOptions
from mambayolo.models.tensor import ActivationKind, Tensor
from mambayolo.services import layers
from mambayolo.services.ss2d import ss2d_apply, ss2d_plan
from mambayolo.services.tensor_ops import activate, concat_channels, elementwise

logger = logging.getLogger(__name__)


def _check_channels(x: Tensor, weights, key: str, op: str) -> None:
    expected = weights[key].shape[1]
    if np.asarray(x).shape[0] != expected:
        raise ShapeError(f"{op}: input channels axis is {np.asarray(x).shape[0]}, expected {expected}")


def _ls_body(f: Tensor, weights) -> Tensor:
    local = layers.batch_norm(layers.depthwise(f, weights.scope('dw')), weights.scope('bn'))
    hidden = activate(layers.conv(local, weights.scope('fc1')), ActivationKind.GELU)
    return layers.conv(hidden, weights.scope('fc2'))


def _rg_body(x: Tensor, weights) -> Tensor:
    both = layers.conv(x, weights.scope('fc1'))
    hidden = both.shape[0] // 2
    gate, value = both[:hidden], both[hidden:]
    position = elementwise(layers.depthwise(value, weights.scope('dw')), value, 'add')
    return layers.conv(elementwise(gate, activate(position, ActivationKind.GELU), 'mul'), weights.scope('fc2'))


def _mlp_body(x: Tensor, variant: MlpVariant, weights) -> Tensor:
    variant = MlpVariant(variant)
    if variant is MlpVariant.RG_BLOCK:
        return _rg_body(x, weights)
    u = layers.conv(x, weights.scope('fc1'))
    if variant is MlpVariant.ORIGINAL:
        mixed = activate(u, ActivationKind.GELU)
    elif variant is MlpVariant.CONVOLUTIONAL:
        mixed = activate(layers.depthwise(u, weights.scope('dw')), ActivationKind.GELU)
    elif variant is MlpVariant.RES_CONVOLUTIONAL:
        mixed = activate(concat_channels(layers.depthwise(u, weights.scope('dw')), u), ActivationKind.GELU)
    else:
        hidden = u.shape[0] // 2
        gate, value = u[:hidden], u[hidden:]
        mixed = elementwise(gate, activate(layers.depthwise(value, weights.scope('dw')), ActivationKind.GELU), 'mul')
    return layers.conv(mixed, weights.scope('fc2'))


def ls_block(f: FeatureMap, weights) -> FeatureMap:
    """Depthwise 3x3 + BN for local context, then a 1x1 bottleneck, plus F."""
    _check_channels(f.tensor, weights, 'fc1.weight', 'ls_block')
    return f.with_tensor(elementwise(_ls_body(f.tensor, weights), f.tensor, 'add'))


def rg_block(x: FeatureMap, weights) -> FeatureMap:
    """Gated branch times GELU(DW(X2) + X2), projected back, plus X."""
    _check_channels(x.tensor, weights, 'fc1.weight', 'rg_block')
    return x.with_tensor(elementwise(_rg_body(x.tensor, weights), x.tensor, 'add'))


def mlp_variant_forward(x: FeatureMap, variant: MlpVariant, weights) -> FeatureMap:
    """One of the channel-mixing variants, with the outer residual."""
    variant = MlpVariant(variant)
    _check_channels(x.tensor, weights, 'fc1.weight', f"mlp_variant_forward[{variant.value}]")
    return x.with_tensor(elementwise(_mlp_body(x.tensor, variant, weights), x.tensor, 'add'))


def odss_block(z: FeatureMap, weights, options: OdssOptions = None, trace: dict = None,
               path: str = 'odss') -> FeatureMap:
    """
    ODSS block.

        Z'' = SiLU(BN(Conv1x1(Z)))
        Z'  = SS2D(LN(LS(Z''))) + Z''
        out = MLP(LN(Z')) + Z'
    """
    options = options or OdssOptions()
    _check_channels(z.tensor, weights, 'pre.conv.weight', 'odss_block')
    pre = layers.conv_bn_act(z.tensor, weights.scope('pre'))
    local = pre
    if options.use_ls:
        local = elementwise(_ls_body(pre, weights.scope('ls')), pre, 'add')

    scanned = ss2d_apply(
        layers.norm(local, weights.scope('norm1')),
        weights.scope('ss2d'),
        identity=options.identity_scan,
        trace=trace,
        path=f"{path}.ss2d",
    )
    if trace is not None:
        trace[f"{path}.ss2d"] = scanned
    mid = elementwise(scanned, pre, 'add')

    mixed = _mlp_body(layers.norm(mid, weights.scope('norm2')), options.mlp_variant, weights.scope('mlp'))
    return z.with_tensor(elementwise(mixed, mid, 'add'))


def ls_plan(prefix: str, channels: int, hidden: int) -> list:
    return (
        layers.conv_plan(f"{prefix}.dw", channels, channels, kernel=3, groups=channels)
        + layers.bn_plan(f"{prefix}.bn", channels)
        + layers.conv_plan(f"{prefix}.fc1", channels, hidden, bias=True)
        + layers.conv_plan(f"{prefix}.fc2", hidden, channels, bias=True)
    )


def mlp_plan(prefix: str, channels: int, hidden: int, variant: MlpVariant) -> list:
    """Parameters of an MLP variant; RG_BLOCK doubles as the rg_block plan."""
    variant = MlpVariant(variant)
    gated = variant in (MlpVariant.GATED, MlpVariant.RG_BLOCK)
    specs = layers.conv_plan(f"{prefix}.fc1", channels, 2 * hidden if gated else hidden, bias=True)
    if variant is not MlpVariant.ORIGINAL:
        specs += layers.conv_plan(f"{prefix}.dw", hidden, hidden, kernel=3, groups=hidden, bias=True)
    fc2_in = 2 * hidden if variant is MlpVariant.RES_CONVOLUTIONAL else hidden
    return specs + layers.conv_plan(f"{prefix}.fc2", fc2_in, channels, bias=True)


def odss_plan(prefix: str, in_channels: int, channels: int, config) -> list:
    """Parameters of one ODSS block mapping in_channels to channels."""
    specs = layers.conv_bn_plan(f"{prefix}.pre", in_channels, channels)
    if config.use_ls:
        specs += ls_plan(f"{prefix}.ls", channels, config.ls_hidden(channels))
    specs += layers.norm_plan(f"{prefix}.norm1", channels)
    specs += ss2d_plan(f"{prefix}.ss2d", channels, config.ssm_hidden(channels), config.state_dim)
    specs += layers.norm_plan(f"{prefix}.norm2", channels)
    specs += mlp_plan(f"{prefix}.mlp", channels, config.mlp_hidden(channels), config.mlp_variant)
    return specs
