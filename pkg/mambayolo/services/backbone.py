"""
Backbone and PAN-FPN neck.

    image -> stem (/4) -> stage1 -> merge -> stage2 (P3, /8)
          -> merge -> stage3 (P4, /16) -> merge -> stage4 (P5, /32)

The neck fuses the pyramid top-down (nearest upsampling) and bottom-up
(stride-2 conv) with ODSS blocks in place of C2f.
"""
import logging

import numpy as np

from mambayolo.config import Config
from mambayolo.exceptions import InputShapeError, ShapeError
from mambayolo.models.feature_map import FeatureMap, PyramidFeatures
from mambayolo.models.tensor import Tensor
from mambayolo.services import layers
from mambayolo.services.blocks import odss_block, odss_plan
from mambayolo.services.tensor_ops import concat_channels, upsample_nearest

logger = logging.getLogger(__name__)

# Stride-2 spatial phases, in channel order after the split
PHASES = ((0, 0), (0, 1), (1, 0), (1, 1))


def check_input_size(height: int, width: int, multiple: int = Config.STRIDE_MULTIPLE) -> None:
    if height % multiple or width % multiple:
        pad_h = (-height) % multiple
        pad_w = (-width) % multiple
        raise InputShapeError(
            f"input {height}x{width} is not a multiple of {multiple}: "
            f"pad by {pad_h} rows and {pad_w} columns to {height + pad_h}x{width + pad_w}"
        )


def simple_stem(img: Tensor, weights) -> FeatureMap:
    """Two 3x3 stride-2 conv + BN + SiLU stages: 3 x H x W -> C x H/4 x W/4."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"simple_stem: expected a 3 x H x W image, got shape {img.shape}")
    check_input_size(img.shape[1], img.shape[2])
    x = layers.conv_bn_act(img, weights.scope('conv1'), stride=2)
    x = layers.conv_bn_act(x, weights.scope('conv2'), stride=2)
    return FeatureMap(tensor=x, stage_id=0)


def split_phases(x: Tensor) -> Tensor:
    """Stack the four stride-2 phases on the channel axis: C x H x W -> 4C x H/2 x W/2."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"split_phases: expected a C x H x W tensor, got shape {x.shape}")
    _, height, width = x.shape
    if height % 2 or width % 2:
        raise ShapeError(f"split_phases: spatial size {height}x{width} must be even on both axes")
    return concat_channels(*(x[:, dh::2, dw::2] for dh, dw in PHASES))


def vision_clue_merge(f: FeatureMap, weights) -> FeatureMap:
    """Phase split (no norm) followed by a pointwise projection of the 4C stack."""
    stacked = split_phases(f.tensor)
    return FeatureMap(tensor=layers.conv(stacked, weights.scope('proj')), stage_id=f.stage_id + 1)


def conv_downsample(f: FeatureMap, weights) -> FeatureMap:
    """3x3 stride-2 conv + BN, the baseline clue merge is compared against."""
    _, height, width = f.shape
    if height % 2 or width % 2:
        raise ShapeError(f"conv_downsample: spatial size {height}x{width} must be even on both axes")
    y = layers.batch_norm(layers.conv(f.tensor, weights.scope('conv'), stride=2), weights.scope('bn'))
    return FeatureMap(tensor=y, stage_id=f.stage_id + 1)


def _run_stage(f: FeatureMap, weights, depth: int, config, trace: dict, path: str, root: str) -> FeatureMap:
    options = config.block_options()
    for j in range(depth):
        block_path = f"{path}.{j}"
        f = odss_block(f, weights.scope(block_path), options=options, trace=trace, path=f"{root}.{block_path}")
    return f


def _downsample(f: FeatureMap, weights, config) -> FeatureMap:
    if config.downsample == 'conv':
        return conv_downsample(f, weights)
    return vision_clue_merge(f, weights)


def backbone_forward(img: Tensor, config, weights, trace: dict = None) -> PyramidFeatures:
    """Stem and four ODSS stages; stages 2 to 4 are returned as P3, P4, P5."""
    scoped = weights.scope('backbone')
    f = simple_stem(img, scoped.scope('stem'))
    outputs = []
    for i, stage in enumerate(config.stages, start=1):
        if i > 1:
            f = _downsample(f, scoped.scope(f"merge{i - 1}"), config)
        f = _run_stage(f, scoped, stage.depth, config, trace, f"stage{i}", 'backbone')
        f = FeatureMap(tensor=f.tensor, stage_id=i)
        logger.debug("stage%d -> %s", i, f.shape)
        outputs.append(f)
    return PyramidFeatures(p3=outputs[1], p4=outputs[2], p5=outputs[3])


def neck_forward(pyr: PyramidFeatures, config, weights, trace: dict = None) -> PyramidFeatures:
    """PAN-FPN fusion of P3/P4/P5 with ODSS blocks."""
    neck = weights.scope('neck')
    depth = config.neck_depth

    def fuse(name: str, *maps: FeatureMap) -> FeatureMap:
        merged = FeatureMap(tensor=concat_channels(*(m.tensor for m in maps)), stage_id=maps[-1].stage_id)
        return _run_stage(merged, neck, depth, config, trace, name, 'neck')

    def down(name: str, f: FeatureMap) -> FeatureMap:
        y = layers.conv_bn_act(f.tensor, neck.scope(name), stride=2)
        return FeatureMap(tensor=y, stage_id=f.stage_id + 1)

    up5 = FeatureMap(tensor=upsample_nearest(pyr.p5.tensor), stage_id=pyr.p4.stage_id)
    top4 = fuse('top4', up5, pyr.p4)
    up4 = FeatureMap(tensor=upsample_nearest(top4.tensor), stage_id=pyr.p3.stage_id)
    top3 = fuse('top3', up4, pyr.p3)
    bottom4 = fuse('bottom4', down('down3', top3), top4)
    bottom5 = fuse('bottom5', down('down4', bottom4), pyr.p5)
    return PyramidFeatures(p3=top3, p4=bottom4, p5=bottom5)


def model_forward(img: Tensor, config, weights, trace: dict = None) -> PyramidFeatures:
    return neck_forward(backbone_forward(img, config, weights, trace), config, weights, trace)


def _stage_plan(prefix: str, in_channels: int, channels: int, depth: int, config) -> list:
    specs = []
    for j in range(depth):
        specs += odss_plan(f"{prefix}.{j}", in_channels if j == 0 else channels, channels, config)
    return specs


def backbone_plan(config) -> list:
    stem = config.stem_channels
    specs = (
        layers.conv_bn_plan('backbone.stem.conv1', 3, stem // 2, kernel=3)
        + layers.conv_bn_plan('backbone.stem.conv2', stem // 2, stem, kernel=3)
    )
    in_channels = stem
    for i, stage in enumerate(config.stages, start=1):
        if i > 1:
            merged = config.merge_ratio * in_channels
            prefix = f"backbone.merge{i - 1}"
            if config.downsample == 'conv':
                specs += layers.conv_bn_plan(prefix, in_channels, merged, kernel=3)
            else:
                specs += layers.conv_plan(f"{prefix}.proj", 4 * in_channels, merged, bias=True)
            in_channels = merged
        specs += _stage_plan(f"backbone.stage{i}", in_channels, stage.channels, stage.depth, config)
        in_channels = stage.channels
    return specs


def neck_plan(config) -> list:
    c3, c4, c5 = config.stage_channels[1:]
    n3, n4, n5 = config.neck_channels
    depth = config.neck_depth
    return (
        _stage_plan('neck.top4', c5 + c4, n4, depth, config)
        + _stage_plan('neck.top3', n4 + c3, n3, depth, config)
        + layers.conv_bn_plan('neck.down3', n3, n3, kernel=3)
        + _stage_plan('neck.bottom4', n3 + n4, n4, depth, config)
        + layers.conv_bn_plan('neck.down4', n4, n4, kernel=3)
        + _stage_plan('neck.bottom5', n4 + c5, n5, depth, config)
    )


def model_plan(config) -> list:
    """Every tensor init_weights allocates for this config, in forward order."""
    return backbone_plan(config) + neck_plan(config)
