"""Feature maps flowing between blocks, and block-level options."""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from mambayolo.exceptions import ShapeError
from mambayolo.models.tensor import Tensor, freeze


@dataclass(frozen=True)
class FeatureMap:
    """A C x H x W activation tagged with the stage that produced it."""

    tensor: Tensor
    stage_id: int = 0

    def __post_init__(self):
        arr = np.asarray(self.tensor)
        if arr.ndim != 3:
            raise ShapeError(f"FeatureMap: expected a C x H x W tensor, got shape {arr.shape}")
        if arr.dtype != np.float32 or arr.flags.writeable:
            object.__setattr__(self, 'tensor', freeze(arr))

    @property
    def channels(self) -> int:
        return self.tensor.shape[0]

    @property
    def height(self) -> int:
        return self.tensor.shape[1]

    @property
    def width(self) -> int:
        return self.tensor.shape[2]

    @property
    def shape(self) -> tuple:
        return self.tensor.shape

    def with_tensor(self, tensor: Tensor) -> 'FeatureMap':
        return FeatureMap(tensor=tensor, stage_id=self.stage_id)


@dataclass(frozen=True)
class PyramidFeatures:
    """Stride-8, stride-16 and stride-32 maps."""

    p3: FeatureMap
    p4: FeatureMap
    p5: FeatureMap

    def __post_init__(self):
        h3, w3 = self.p3.height, self.p3.width
        for name, fm, factor in (('p4', self.p4, 2), ('p5', self.p5, 4)):
            if fm.height * factor != h3 or fm.width * factor != w3:
                raise ShapeError(
                    f"PyramidFeatures: {name} is {fm.height}x{fm.width}, expected {h3 // factor}x{w3 // factor}"
                )

    def items(self):
        return (('p3', self.p3), ('p4', self.p4), ('p5', self.p5))


class MlpVariant(str, Enum):
    """Channel-mixing designs the ODSS block can use after SS2D."""

    ORIGINAL = 'original'
    CONVOLUTIONAL = 'convolutional'
    RES_CONVOLUTIONAL = 'res_convolutional'
    GATED = 'gated'
    RG_BLOCK = 'rgblock'


@dataclass(frozen=True)
class OdssOptions:
    """Switches for ODSS ablations."""

    mlp_variant: MlpVariant = MlpVariant.RG_BLOCK
    use_ls: bool = True
    identity_scan: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'mlp_variant', MlpVariant(self.mlp_variant))
