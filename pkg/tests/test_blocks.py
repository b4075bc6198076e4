from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mambayolo.exceptions import ShapeError
from mambayolo.models.feature_map import FeatureMap, MlpVariant, OdssOptions
from mambayolo.models.tensor import ActivationKind
from mambayolo.services import layers
from mambayolo.services.analysis import mlp_params
from mambayolo.services.blocks import (
    ls_block, ls_plan, mlp_plan, mlp_variant_forward, odss_block, odss_plan, rg_block,
)
from mambayolo.services.initializer import allocate
from mambayolo.services.ss2d import ss2d_apply
from mambayolo.services.tensor_ops import activate, elementwise


def zeroed(weights, *keys):
    for key in keys:
        weights.set(key, np.zeros_like(weights[key]))
    return weights


@pytest.fixture
def fm(rng):
    return FeatureMap(rng.uniform(-1, 1, (8, 5, 6)).astype(np.float32))


def test_ls_block_collapses_to_identity(fm):
    weights = zeroed(allocate(ls_plan('ls', 8, 16), seed=0), 'ls.fc2.weight', 'ls.fc2.bias')
    assert_array_equal(ls_block(fm, weights.scope('ls')).tensor, fm.tensor)


def test_rg_block_collapses_to_identity(fm):
    weights = zeroed(allocate(mlp_plan('rg', 8, 16, MlpVariant.RG_BLOCK), seed=0), 'rg.fc2.weight', 'rg.fc2.bias')
    assert_array_equal(rg_block(fm, weights.scope('rg')).tensor, fm.tensor)


def test_odss_block_collapses_to_its_input_stage(fm, tiny_config):
    weights = allocate(odss_plan('odss', 8, 8, tiny_config), seed=0)
    zeroed(weights, 'odss.ss2d.out_proj.weight', 'odss.mlp.fc2.weight', 'odss.mlp.fc2.bias')
    scoped = weights.scope('odss')
    pre = layers.conv_bn_act(fm.tensor, scoped.scope('pre'))
    assert_array_equal(odss_block(fm, scoped, tiny_config.block_options()).tensor, pre)


def test_original_mlp_with_zeroed_output_is_identity(fm):
    weights = zeroed(allocate(mlp_plan('mlp', 8, 16, MlpVariant.ORIGINAL), seed=0), 'mlp.fc2.weight', 'mlp.fc2.bias')
    out = mlp_variant_forward(fm, MlpVariant.ORIGINAL, weights.scope('mlp'))
    assert_array_equal(out.tensor, fm.tensor)


def test_rgblock_variant_is_rg_block(fm):
    weights = allocate(mlp_plan('mlp', 8, 16, MlpVariant.RG_BLOCK), seed=5).scope('mlp')
    assert_array_equal(mlp_variant_forward(fm, MlpVariant.RG_BLOCK, weights).tensor, rg_block(fm, weights).tensor)


@pytest.mark.parametrize('variant', list(MlpVariant))
def test_mlp_variants_keep_shape_and_match_closed_form_count(fm, variant):
    weights = allocate(mlp_plan('mlp', 8, 12, variant), seed=2)
    assert weights.parameter_count() == mlp_params(8, 12, variant)
    out = mlp_variant_forward(fm, variant, weights.scope('mlp'))
    assert out.shape == fm.shape
    assert np.all(np.isfinite(out.tensor))


def test_mlp_variant_param_ordering():
    original, convolutional, res_convolutional = (
        mlp_params(32, 64, v) for v in (MlpVariant.ORIGINAL, MlpVariant.CONVOLUTIONAL, MlpVariant.RES_CONVOLUTIONAL)
    )
    assert original < convolutional < res_convolutional


def test_odss_block_changes_width_and_records_trace(fm, tiny_config):
    weights = allocate(odss_plan('blk', 8, 16, tiny_config), seed=1).scope('blk')
    trace = {}
    out = odss_block(fm, weights, tiny_config.block_options(), trace=trace, path='blk')
    assert out.shape == (16, 5, 6)
    assert trace['blk.ss2d'].shape == (16, 5, 6)
    assert trace['blk.ss2d.merged'].shape == (tiny_config.ssm_hidden(16), 5, 6)


def test_odss_block_without_local_spatial_branch(fm, tiny_config):
    config = replace(tiny_config, use_ls=False)
    plan = odss_plan('blk', 8, 8, config)
    assert not any('.ls.' in spec.path for spec in plan)
    out = odss_block(fm, allocate(plan, seed=1).scope('blk'), config.block_options())
    assert out.shape == fm.shape


def test_identity_scan_option(fm, tiny_config):
    weights = allocate(odss_plan('blk', 8, 8, tiny_config), seed=1).scope('blk')
    scanned = odss_block(fm, weights, OdssOptions(identity_scan=True))
    assert scanned.shape == fm.shape
    assert not np.array_equal(scanned.tensor, odss_block(fm, weights).tensor)


def test_blocks_reject_wrong_width(fm, tiny_config):
    weights = allocate(odss_plan('blk', 16, 16, tiny_config), seed=1).scope('blk')
    with pytest.raises(ShapeError, match='odss_block'):
        odss_block(fm, weights)
    ls = allocate(ls_plan('ls', 4, 8), seed=0).scope('ls')
    with pytest.raises(ShapeError, match='ls_block'):
        ls_block(fm, ls)


def randomized(weights, rng, *keys):
    for key in keys:
        weights.set(key, rng.uniform(-0.5, 0.5, weights[key].shape))
    return weights


def ref_pointwise(x, weight, bias):
    return np.einsum('oi,ihw->ohw', weight[:, :, 0, 0].astype(np.float64), x) + bias[:, None, None]


def ref_depthwise(x, weight, bias=None):
    _, height, width = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    out = np.zeros(x.shape)
    for i in range(3):
        for j in range(3):
            out += weight[:, 0, i, j, None, None] * padded[:, i:i + height, j:j + width]
    return out if bias is None else out + bias[:, None, None]


def ref_gelu(x):
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x ** 3)))


def test_ls_block_matches_straight_line_reference(rng):
    weights = allocate(ls_plan('ls', 4, 8), seed=11)
    randomized(weights, rng, 'ls.fc1.bias', 'ls.fc2.bias', 'ls.bn.weight', 'ls.bn.bias', 'ls.bn.running_mean')
    weights.set('ls.bn.running_var', rng.uniform(0.5, 2.0, 4))
    f = rng.uniform(-1, 1, (4, 4, 4)).astype(np.float32)
    w = {key: np.asarray(weights[f"ls.{key}"], dtype=np.float64) for key in (
        'dw.weight', 'bn.weight', 'bn.bias', 'bn.running_mean', 'bn.running_var',
        'fc1.weight', 'fc1.bias', 'fc2.weight', 'fc2.bias')}

    x = f.astype(np.float64)
    local = ref_depthwise(x, w['dw.weight'])
    local = ((local - w['bn.running_mean'][:, None, None]) / np.sqrt(w['bn.running_var'] + 1e-5)[:, None, None]
             * w['bn.weight'][:, None, None] + w['bn.bias'][:, None, None])
    hidden = ref_gelu(ref_pointwise(local, w['fc1.weight'], w['fc1.bias']))
    expected = ref_pointwise(hidden, w['fc2.weight'], w['fc2.bias']) + x

    assert_allclose(ls_block(FeatureMap(f), weights.scope('ls')).tensor, expected, rtol=1e-5, atol=1e-5)


def test_rg_block_matches_straight_line_reference(rng):
    weights = allocate(mlp_plan('rg', 4, 8, MlpVariant.RG_BLOCK), seed=12)
    randomized(weights, rng, 'rg.fc1.bias', 'rg.dw.bias', 'rg.fc2.bias')
    x_in = rng.uniform(-1, 1, (4, 4, 4)).astype(np.float32)
    w = {key: np.asarray(weights[f"rg.{key}"], dtype=np.float64) for key in (
        'fc1.weight', 'fc1.bias', 'dw.weight', 'dw.bias', 'fc2.weight', 'fc2.bias')}

    x = x_in.astype(np.float64)
    branches = ref_pointwise(x, w['fc1.weight'], w['fc1.bias'])
    x1, x2 = branches[:8], branches[8:]
    gated = x1 * ref_gelu(ref_depthwise(x2, w['dw.weight'], w['dw.bias']) + x2)
    expected = ref_pointwise(gated, w['fc2.weight'], w['fc2.bias']) + x

    assert_allclose(rg_block(FeatureMap(x_in), weights.scope('rg')).tensor, expected, rtol=1e-5, atol=1e-5)


def test_rg_block_without_position_encoding(fm, rng):
    weights = allocate(mlp_plan('rg', 8, 16, MlpVariant.RG_BLOCK), seed=4)
    randomized(weights, rng, 'rg.fc1.bias', 'rg.fc2.bias')
    zeroed(weights, 'rg.dw.weight', 'rg.dw.bias')
    scoped = weights.scope('rg')

    branches = layers.conv(fm.tensor, scoped.scope('fc1'))
    x1, x2 = branches[:16], branches[16:]
    expected = elementwise(layers.conv(elementwise(x1, activate(x2, ActivationKind.GELU), 'mul'), scoped.scope('fc2')),
                           fm.tensor, 'add')
    assert_array_equal(rg_block(fm, scoped).tensor, expected)


@pytest.mark.parametrize('use_ls', [True, False])
def test_odss_block_is_the_composition_of_its_stages(rng, tiny_config, use_ls):
    config = replace(tiny_config, use_ls=use_ls)
    weights = allocate(odss_plan('blk', 16, 16, config), seed=6).scope('blk')
    z = FeatureMap(rng.uniform(-1, 1, (16, 8, 8)).astype(np.float32))
    options = config.block_options()

    pre = layers.conv_bn_act(z.tensor, weights.scope('pre'))
    local = ls_block(FeatureMap(pre), weights.scope('ls')).tensor if use_ls else pre
    mid = elementwise(ss2d_apply(layers.norm(local, weights.scope('norm1')), weights.scope('ss2d')), pre, 'add')
    normed = layers.norm(mid, weights.scope('norm2'))
    mixed = mlp_variant_forward(FeatureMap(normed), options.mlp_variant, weights.scope('mlp')).tensor
    expected = mid.astype(np.float64) + (mixed.astype(np.float64) - normed)

    out = odss_block(z, weights, options)
    assert out.shape == (16, 8, 8)
    assert_allclose(out.tensor, expected, rtol=1e-5, atol=1e-5)


@pytest.mark.parametrize('size', [1, 3, 7])
def test_blocks_preserve_shape_and_stay_finite(rng, size):
    x = FeatureMap(rng.uniform(-10, 10, (4, size, size)).astype(np.float32))
    rg = allocate(mlp_plan('rg', 4, 8, MlpVariant.RG_BLOCK), seed=1).scope('rg')
    ls = allocate(ls_plan('ls', 4, 8), seed=1).scope('ls')
    for out in (rg_block(x, rg), ls_block(x, ls)):
        assert out.shape == x.shape
        assert np.all(np.isfinite(out.tensor))
