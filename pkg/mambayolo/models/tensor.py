"""Dense tensor value type and convolution/activation descriptors."""
from dataclasses import dataclass
from enum import Enum

import numpy as np
import numpy.typing as npt

from mambayolo.exceptions import ShapeError

# Dense row-major f32 array; C×H×W for feature maps.
Tensor = npt.NDArray[np.float32]


def as_tensor(data, name: str = 'tensor', rank: int = None) -> Tensor:
    """Validate and convert data to a read-only float32 tensor."""
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim < 1:
        raise ShapeError(f"{name}: rank must be >= 1, got a scalar")
    if rank is not None and arr.ndim != rank:
        raise ShapeError(f"{name}: expected rank {rank}, got shape {arr.shape}")
    for axis, size in enumerate(arr.shape):
        if size < 1:
            raise ShapeError(f"{name}: axis {axis} has size {size}, every dimension must be >= 1")
    if arr is data:
        arr = arr.copy()
    arr.flags.writeable = False
    return arr


def freeze(arr: np.ndarray) -> Tensor:
    """Cast an operation result to f32 storage and mark it immutable."""
    out = np.ascontiguousarray(arr, dtype=np.float32)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a 2-D convolution (square kernel, cross-correlation)."""

    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = None
    groups: int = 1
    has_bias: bool = False

    def __post_init__(self):
        if self.padding is None:
            object.__setattr__(self, 'padding', self.kernel_size // 2)
        for field_name in ('in_channels', 'out_channels', 'kernel_size', 'stride', 'groups'):
            if getattr(self, field_name) < 1:
                raise ShapeError(f"ConvSpec.{field_name} must be >= 1, got {getattr(self, field_name)}")
        if self.padding < 0:
            raise ShapeError(f"ConvSpec.padding must be >= 0, got {self.padding}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeError(
                f"ConvSpec: channels {self.in_channels}->{self.out_channels} not divisible by groups={self.groups}"
            )

    @property
    def weight_shape(self) -> tuple:
        return (self.out_channels, self.in_channels // self.groups, self.kernel_size, self.kernel_size)

    def output_size(self, height: int, width: int) -> tuple:
        out_h = (height + 2 * self.padding - self.kernel_size) // self.stride + 1
        out_w = (width + 2 * self.padding - self.kernel_size) // self.stride + 1
        return out_h, out_w

    @classmethod
    def from_weight(cls, weight: np.ndarray, stride: int = 1, groups: int = 1, has_bias: bool = False):
        """Derive the ConvSpec implied by a C_out × (C_in/groups) × k × k weight."""
        if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
            raise ShapeError(f"conv weight must be C_out x C_in/groups x k x k, got {weight.shape}")
        out_channels, in_per_group, kernel, _ = weight.shape
        return cls(
            in_channels=in_per_group * groups,
            out_channels=out_channels,
            kernel_size=kernel,
            stride=stride,
            groups=groups,
            has_bias=has_bias,
        )


class ActivationKind(str, Enum):
    SILU = 'silu'
    GELU = 'gelu'
    IDENTITY = 'identity'
