import numpy as np
import pytest
from numpy.testing import assert_array_equal

from mambayolo.exceptions import ShapeError
from mambayolo.models.weights import ParamSpec
from mambayolo.services.analysis import count_params
from mambayolo.services.backbone import model_plan
from mambayolo.services.initializer import DT_MAX, DT_MIN, allocate, init_weights, keyed_generator, path_key
from mambayolo.services.ssm_scan import softplus


def test_same_seed_same_weights(tiny_config, tiny_weights):
    assert init_weights(tiny_config, seed=0).checksum() == tiny_weights.checksum()
    assert init_weights(tiny_config, seed=1).checksum() != tiny_weights.checksum()


def test_config_seed_is_the_default(tiny_config, tiny_weights):
    assert tiny_config.seed == 0
    assert init_weights(tiny_config).checksum() == tiny_weights.checksum()


def test_values_do_not_depend_on_allocation_order():
    a = ParamSpec('layer.a.weight', (4, 3), fan_in=3)
    b = ParamSpec('layer.b.weight', (5,), fan_in=5)
    alone = allocate([a], seed=7)
    together = allocate([b, a], seed=7)
    assert_array_equal(alone['layer.a.weight'], together['layer.a.weight'])


def test_keyed_generator_streams_differ_by_path():
    x = keyed_generator(3, 'x.weight').uniform(size=4)
    y = keyed_generator(3, 'y.weight').uniform(size=4)
    assert not np.array_equal(x, y)
    assert_array_equal(keyed_generator(3, 'x.weight').uniform(size=4), x)


def test_initializer_kinds():
    weights = allocate([
        ParamSpec('w', (64, 16), fan_in=16),
        ParamSpec('a_log', (4, 8, 6), init='a_log'),
        ParamSpec('dt', (4, 200), init='dt_bias'),
        ParamSpec('bias', (3,), init='zeros'),
        ParamSpec('var', (3,), init='ones', buffer=True),
    ], seed=0)
    assert np.all(np.abs(weights['w']) <= 0.25)
    assert_array_equal(weights['bias'], np.zeros(3))
    assert np.allclose(np.exp(weights['a_log'][2, 5]), np.arange(1, 7), rtol=1e-6)
    dt = softplus(weights['dt'])
    assert np.all(dt >= DT_MIN * 0.999) and np.all(dt <= DT_MAX * 1.001)
    assert weights.parameter_count() == 64 * 16 + 4 * 8 * 6 + 4 * 200 + 3
    assert list(weights.buffers()) == ['var']


def test_allocate_rejects_duplicates_and_unknown_kinds():
    with pytest.raises(ValueError, match='duplicate'):
        allocate([ParamSpec('w', (1,)), ParamSpec('w', (1,))], seed=0)
    with pytest.raises(ValueError, match='unknown initializer'):
        allocate([ParamSpec('w', (1,), init='orthogonal')], seed=0)


def test_weights_are_read_only_and_shape_checked(tiny_weights):
    tensor = tiny_weights['backbone.stem.conv1.conv.weight']
    assert tensor.dtype == np.float32
    assert not tensor.flags.writeable
    copy = tiny_weights.copy()
    with pytest.raises(ShapeError):
        copy.set('backbone.stem.conv1.conv.weight', np.zeros((1, 1, 1, 1)))
    with pytest.raises(KeyError):
        tiny_weights['backbone.nope']


def test_scoped_views(tiny_weights):
    stem = tiny_weights.scope('backbone').scope('stem')
    assert 'conv1.bn.running_mean' in stem
    assert_array_equal(stem['conv2.conv.weight'], tiny_weights['backbone.stem.conv2.conv.weight'])
    assert tiny_weights.checksum('backbone.stem.conv1.conv.weight') == stem.checksum('conv1.conv.weight')


def test_allocated_count_matches_closed_form(tiny_config, tiny_weights):
    planned = sum(spec.size for spec in model_plan(tiny_config) if not spec.buffer)
    assert tiny_weights.parameter_count() == planned == count_params(tiny_config).total_params


def test_uniform_draws_are_centred():
    weights = allocate([ParamSpec('wide.weight', (10000,), fan_in=100)], seed=0)
    assert abs(float(weights['wide.weight'].astype(np.float64).mean())) <= 0.01


def test_no_two_layers_share_a_stream(tiny_config):
    paths = [spec.path for spec in model_plan(tiny_config)]
    assert len({path_key(path) for path in paths}) == len(paths)
    heads = {tuple(keyed_generator(0, path).uniform(size=2)) for path in paths}
    assert len(heads) == len(paths)
