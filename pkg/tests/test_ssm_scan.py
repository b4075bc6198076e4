import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mambayolo.exceptions import DiscretizationError, ShapeError
from mambayolo.models.ssm import SequenceBatch, SsmParams
from mambayolo.services.analysis import SelectiveScanTarget, grad_check, zoh_oracle
from mambayolo.services.ssm_scan import (
    _phi, build_kernel, inverse_softplus, scan_convolutional, scan_recurrent, scan_states, selective_scan,
    selective_scan_backward, softplus, zoh_discretize,
)


def random_params(rng, n=4, delta=0.1):
    return SsmParams(A=-rng.uniform(0.05, 1.0, n), B=rng.standard_normal(n), C=rng.standard_normal(n), delta=delta)


def test_zoh_matches_decimal_oracle_including_series_region():
    A = -np.array([1e-14, 1e-10, 3e-9, 1e-6, 0.01, 0.5, 1.0, 4.0])
    B = np.linspace(-2.0, 2.0, A.shape[0])
    for delta in (1e-4, 0.01, 1.0):
        disc = zoh_discretize(SsmParams(A=A, B=B, C=B, delta=delta))
        a_ref, b_ref = zoh_oracle(A, delta, B)
        assert_allclose(disc.a_bar, a_ref, rtol=0, atol=1e-12)
        assert_allclose(disc.b_bar, b_ref, rtol=0, atol=1e-12)


def test_zoh_known_value():
    disc = zoh_discretize(SsmParams(A=[-1.0], B=[1.0], C=[1.0], delta=1.0))
    assert_allclose(disc.a_bar, [np.exp(-1.0)], rtol=1e-15)
    assert_allclose(disc.b_bar, [1.0 - np.exp(-1.0)], rtol=1e-15)


def test_phi_is_continuous_at_zero():
    z = np.array([-2e-8, -1e-8, -5e-9, 0.0, 5e-9, 1e-8, 2e-8])
    assert_allclose(_phi(z), 1.0 + z / 2.0, rtol=1e-15)


def test_non_positive_delta_rejected():
    with pytest.raises(DiscretizationError):
        SsmParams(A=[-1.0], B=[1.0], C=[1.0], delta=0.0)


def test_mismatched_state_axes_rejected():
    with pytest.raises(ShapeError):
        SsmParams(A=[-1.0, -2.0], B=[1.0], C=[1.0, 1.0], delta=0.1)


def test_recurrent_and_convolutional_forms_agree(rng):
    params = random_params(rng, n=16, delta=0.3)
    x = rng.standard_normal(64)
    disc = zoh_discretize(params)
    recurrent = scan_recurrent(disc, params.C, x)
    convolutional = scan_convolutional(build_kernel(disc, params.C, 64), x)
    assert recurrent.dtype == np.float64
    assert_allclose(recurrent, convolutional, rtol=0, atol=1e-9)


def test_float32_inputs_return_float32(rng):
    params = random_params(rng)
    x = rng.standard_normal(32).astype(np.float32)
    disc = zoh_discretize(params)
    assert scan_recurrent(disc, params.C, x).dtype == np.float32
    assert scan_convolutional(build_kernel(disc, params.C, 32), x).dtype == np.float32


def test_kernel_matches_matrix_powers(rng):
    params = random_params(rng, n=5)
    disc = zoh_discretize(params)
    a = np.diag(disc.a_bar)
    expected = [params.C @ np.linalg.matrix_power(a, j) @ disc.b_bar for j in range(12)]
    assert_allclose(build_kernel(disc, params.C, 12).k_bar, expected, rtol=1e-12, atol=1e-14)


def test_scan_states_with_initial_state(rng):
    params = random_params(rng, n=3)
    disc = zoh_discretize(params)
    x = rng.standard_normal(6)
    h0 = rng.standard_normal(3)
    h = h0.copy()
    for t in range(6):
        h = disc.a_bar * h + disc.b_bar * x[t]
    assert_allclose(scan_states(disc, x, h0)[-1], h, rtol=1e-14)


def test_kernel_length_must_match(rng):
    params = random_params(rng)
    kernel = build_kernel(zoh_discretize(params), params.C, 8)
    with pytest.raises(ShapeError):
        scan_convolutional(kernel, np.zeros(9))


def test_selective_scan_with_constant_parameters_is_time_invariant(rng):
    channels, n, length = 3, 4, 20
    deltas = rng.uniform(0.05, 0.5, channels)
    b = rng.standard_normal(n)
    c = rng.standard_normal(n)
    A = -rng.uniform(0.1, 1.0, (channels, n))
    x = rng.standard_normal((channels, length))
    batch = SequenceBatch(
        values=x,
        delta=np.repeat(deltas[:, None], length, axis=1),
        b=np.repeat(b[:, None], length, axis=1),
        c=np.repeat(c[:, None], length, axis=1),
    )
    y = selective_scan(batch, A)
    for d in range(channels):
        disc = zoh_discretize(SsmParams(A=A[d], B=b, C=c, delta=deltas[d]))
        assert_allclose(y[d], scan_recurrent(disc, c, x[d]), rtol=1e-12, atol=1e-12)


def test_selective_scan_skip_connection(rng):
    target = SelectiveScanTarget.random(rng, channels=2, state_dim=3, length=5, with_skip=True)
    with_skip = selective_scan(target.batch, target.A, d_skip=target.d_skip)
    without = selective_scan(target.batch, target.A)
    assert_allclose(with_skip - without, target.d_skip[:, None] * target.batch.values, rtol=1e-12, atol=1e-14)


def test_selective_scan_rejects_raw_delta(rng):
    batch = SequenceBatch(
        values=np.ones((1, 3)), delta=np.array([[0.1, -0.2, 0.1]]), b=np.ones((2, 3)), c=np.ones((2, 3)),
    )
    with pytest.raises(DiscretizationError, match=r'delta\[0, 1\]'):
        selective_scan(batch, -np.ones((1, 2)))


def test_from_projections_applies_softplus():
    batch = SequenceBatch.from_projections(
        values=np.ones((2, 3)), delta_raw=np.zeros((2, 3)), delta_bias=np.array([0.0, 1.0]),
        b=np.ones((1, 3)), c=np.ones((1, 3)),
    )
    assert_allclose(batch.delta[0], np.log(2.0))
    assert_allclose(batch.delta[1], np.log1p(np.e))


def test_softplus_inverse():
    y = np.array([1e-3, 0.01, 0.1, 1.0, 5.0])
    assert_allclose(softplus(inverse_softplus(y)), y, rtol=1e-12)


@pytest.mark.parametrize('with_skip', [True, False])
def test_selective_backward_matches_finite_differences(rng, with_skip):
    target = SelectiveScanTarget.random(rng, channels=1, state_dim=2, length=4, with_skip=with_skip)
    report = grad_check(target)
    assert report.passed, report
    assert report.coordinates == sum(v.size for v in target.inputs().values())


def test_backward_shapes(rng):
    target = SelectiveScanTarget.random(rng, channels=2, state_dim=3, length=6)
    grads = selective_scan_backward(target.batch, target.A, target.upstream, d_skip=target.d_skip)
    for name, value in target.inputs().items():
        assert grads.as_dict()[name].shape == value.shape


def test_ln2_step_halves_the_state():
    disc = zoh_discretize(SsmParams(A=[-1.0], B=[1.0], C=[1.0], delta=math.log(2.0)))
    assert_allclose(disc.a_bar, [0.5], rtol=1e-15)
    assert_allclose(disc.b_bar, [0.5], rtol=1e-15)


def test_running_sum_with_unit_coefficients():
    disc = zoh_discretize(SsmParams(A=[0.0], B=[1.0], C=[1.0], delta=1.0))
    assert_array_equal(scan_recurrent(disc, [1.0], np.ones(3)), [1.0, 2.0, 3.0])


@pytest.mark.parametrize('cut', [0, 7, 30])
def test_scans_are_causal(rng, cut):
    params = random_params(rng, n=6, delta=0.2)
    disc = zoh_discretize(params)
    x = rng.standard_normal(32)
    clipped = x.copy()
    clipped[cut + 1:] = 0.0
    kernel = build_kernel(disc, params.C, 32)
    assert_array_equal(scan_recurrent(disc, params.C, x)[:cut + 1], scan_recurrent(disc, params.C, clipped)[:cut + 1])
    assert_array_equal(scan_convolutional(kernel, x)[:cut + 1], scan_convolutional(kernel, clipped)[:cut + 1])

    target = SelectiveScanTarget.random(rng, channels=2, state_dim=3, length=32)
    batch = target.batch
    cut_batch = SequenceBatch(values=np.where(np.arange(32) > cut, 0.0, batch.values),
                              delta=batch.delta, b=batch.b, c=batch.c)
    assert_array_equal(selective_scan(batch, target.A)[:, :cut + 1], selective_scan(cut_batch, target.A)[:, :cut + 1])


def test_scans_are_linear_in_the_input(rng):
    params = random_params(rng, n=8, delta=0.3)
    disc = zoh_discretize(params)
    x, z = rng.standard_normal((2, 40))
    alpha, beta = 1.7, -0.4
    combined = scan_recurrent(disc, params.C, alpha * x + beta * z)
    expected = alpha * scan_recurrent(disc, params.C, x) + beta * scan_recurrent(disc, params.C, z)
    assert_allclose(combined, expected, rtol=1e-5, atol=1e-12)

    target = SelectiveScanTarget.random(rng, channels=2, state_dim=4, length=16)
    u, v = rng.standard_normal((2, 2, 16))

    def run(values):
        batch = target.batch
        return selective_scan(SequenceBatch(values=values, delta=batch.delta, b=batch.b, c=batch.c), target.A)

    assert_allclose(run(alpha * u + beta * v), alpha * run(u) + beta * run(v), rtol=1e-5, atol=1e-12)


def test_states_stay_within_the_geometric_bound(rng):
    for _ in range(20):
        params = random_params(rng, n=5, delta=rng.uniform(0.01, 1.0))
        disc = zoh_discretize(params)
        x = rng.uniform(-1.0, 1.0, 200)
        bound = np.abs(disc.b_bar).sum() / (1.0 - disc.a_bar.max())
        assert np.abs(scan_states(disc, x)).max() <= bound


def test_selective_scan_matches_a_scalar_loop(rng):
    channels, n, length = 2, 4, 8
    A = -rng.uniform(0.1, 2.0, (channels, n))
    x = rng.standard_normal((channels, length))
    delta = rng.uniform(0.01, 0.5, (channels, length))
    b, c = rng.standard_normal((2, n, length))
    y = selective_scan(SequenceBatch(values=x, delta=delta, b=b, c=c), A)

    expected = np.zeros((channels, length))
    for d in range(channels):
        state = [0.0] * n
        for t in range(length):
            total = 0.0
            for k in range(n):
                z = delta[d, t] * A[d, k]
                state[k] = math.exp(z) * state[k] + math.expm1(z) / A[d, k] * b[k, t] * x[d, t]
                total += c[k, t] * state[k]
            expected[d, t] = total
    assert_allclose(y, expected, rtol=1e-12, atol=1e-14)
