"""Layers that read their tensors from a scoped Weights view."""
import numpy as np

from mambayolo.models.tensor import ActivationKind, ConvSpec, Tensor
from mambayolo.models.weights import ParamSpec
from mambayolo.services.tensor_ops import activate, batch_norm_infer, conv2d, layer_norm


def conv(x: Tensor, weights, stride: int = 1, groups: int = 1) -> Tensor:
    """Convolution with `weight` and optional `bias`; padding is k // 2."""
    weight = weights['weight']
    bias = weights.get('bias')
    spec = ConvSpec.from_weight(np.asarray(weight), stride=stride, groups=groups, has_bias=bias is not None)
    return conv2d(x, spec, weight, bias)


def depthwise(x: Tensor, weights) -> Tensor:
    return conv(x, weights, groups=np.asarray(x).shape[0])


def batch_norm(x: Tensor, weights) -> Tensor:
    return batch_norm_infer(
        x, weights['running_mean'], weights['running_var'], weights['weight'], weights['bias']
    )


def norm(x: Tensor, weights) -> Tensor:
    return layer_norm(x, weights['weight'], weights['bias'])


def conv_bn_act(x: Tensor, weights, stride: int = 1, act: ActivationKind = ActivationKind.SILU) -> Tensor:
    """conv (no bias) -> BN -> activation, reading `conv.*` and `bn.*`."""
    y = conv(x, weights.scope('conv'), stride=stride)
    return activate(batch_norm(y, weights.scope('bn')), act)


def conv_plan(prefix: str, in_channels: int, out_channels: int, kernel: int = 1,
              groups: int = 1, bias: bool = False) -> list:
    fan_in = (in_channels // groups) * kernel * kernel
    specs = [ParamSpec(f"{prefix}.weight", (out_channels, in_channels // groups, kernel, kernel), fan_in=fan_in)]
    if bias:
        specs.append(ParamSpec(f"{prefix}.bias", (out_channels,), init='zeros'))
    return specs


def bn_plan(prefix: str, channels: int) -> list:
    return [
        ParamSpec(f"{prefix}.weight", (channels,), init='ones'),
        ParamSpec(f"{prefix}.bias", (channels,), init='zeros'),
        ParamSpec(f"{prefix}.running_mean", (channels,), init='zeros', buffer=True),
        ParamSpec(f"{prefix}.running_var", (channels,), init='ones', buffer=True),
    ]


def norm_plan(prefix: str, channels: int) -> list:
    return [
        ParamSpec(f"{prefix}.weight", (channels,), init='ones'),
        ParamSpec(f"{prefix}.bias", (channels,), init='zeros'),
    ]


def conv_bn_plan(prefix: str, in_channels: int, out_channels: int, kernel: int = 1) -> list:
    return conv_plan(f"{prefix}.conv", in_channels, out_channels, kernel) + bn_plan(f"{prefix}.bn", out_channels)
