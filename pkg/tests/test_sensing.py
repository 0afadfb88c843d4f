import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from jbsd.hankel_ops import LiftShape, hankel_lift
from jbsd.sensing import (
    ChannelGroundTruth,
    MeasurementSet,
    PathParam,
    UserChannel,
    build_data_matrix,
    dump_instance,
    load_instance,
    measure,
    measure_adjoint_k,
    measure_k,
    min_separation,
    sample_amplitudes,
    sample_channel,
    sample_coefficients,
    sample_delays,
    sample_subspace,
    simulate_instance,
    steering_vector,
    wrap_distance,
)


def test_steering_vector_examples():
    np.testing.assert_allclose(steering_vector(0.0, 4), [1, 1, 1, 1])
    np.testing.assert_allclose(steering_vector(0.5, 4), [1, -1, 1, -1], atol=1e-15)
    np.testing.assert_allclose(steering_vector(0.25, 4), [1, -1j, -1, 1j], atol=1e-15)
    assert np.allclose(np.abs(steering_vector(0.123, 50)), 1.0)


@pytest.mark.parametrize("tau", [-0.1, 1.0, 1.5])
def test_steering_vector_rejects_out_of_range(tau):
    with pytest.raises(ValueError):
        steering_vector(tau, 4)


def test_path_param_validation():
    PathParam(0.3, 1 + 1j)
    with pytest.raises(ValueError):
        PathParam(1.2, 1.0)
    with pytest.raises(ValueError):
        PathParam(0.2, 0.0)


def test_build_data_matrix_single_path():
    X = build_data_matrix([0.3], [1.0], np.array([1.0, 0.0]), 8)
    np.testing.assert_allclose(X[0], steering_vector(0.3, 8))
    np.testing.assert_array_equal(X[1], 0)
    with pytest.raises(ValueError):
        build_data_matrix([], [], np.array([1.0]), 8)
    with pytest.raises(ValueError):
        build_data_matrix([0.1], [1.0], np.zeros(2), 8)


def test_lift_rank_equals_path_count():
    rng = np.random.default_rng(3)
    sh = LiftShape(32, 2)
    ch = sample_channel(1, 3, 2, 32, rng).users[0]
    S = np.linalg.svd(hankel_lift(ch.X, sh), compute_uv=False)
    assert S[3] / S[2] <= 1e-10
    # duplicated delay collapses the rank
    X = build_data_matrix([0.2, 0.2], [1.0, 2.0], ch.h, 32)
    S = np.linalg.svd(hankel_lift(X, sh), compute_uv=False)
    assert S[1] <= 1e-10 * S[0]


def test_amplitude_magnitudes_within_bounds():
    rng = np.random.default_rng(0)
    d = np.abs(sample_amplitudes(10_000, rng))
    assert d.min() >= 2.0 and d.max() <= 11.0
    assert d.min() < 2.1 and d.max() > 10.9


def test_coefficients_unit_norm():
    rng = np.random.default_rng(1)
    for kind in ("complex", "real"):
        h = sample_coefficients(3, rng, kind)
        assert abs(np.linalg.norm(h) - 1) <= 1e-14
    assert not np.any(sample_coefficients(3, rng, "real").imag)
    with pytest.raises(ValueError):
        sample_coefficients(3, rng, "quaternion")


def test_separated_delays_respect_wrap_gap():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(8, 64))
        taus = sample_delays(4, n, rng, separated=True)
        assert min_separation(taus) >= 1.0 / n
        assert np.all((taus >= 0) & (taus < 1))


def test_separated_infeasible_raises():
    with pytest.raises(ValueError):
        sample_delays(9, 8, np.random.default_rng(0))


def test_wrap_distance():
    assert wrap_distance(0.05, 0.95) == pytest.approx(0.1)
    assert min_separation([0.01, 0.5, 0.99]) == pytest.approx(0.02)


def test_subspace_support_and_variance():
    rng = np.random.default_rng(4)
    B = sample_subspace(4000, 3, rng)
    assert np.abs(B).max() <= np.sqrt(3)
    assert abs(B.var() - 1.0) < 0.05
    assert sample_subspace(10, 1, rng).shape == (10, 1)


def test_measure_examples():
    X = np.array([[1.0, 2.0, 3.0]]) + 0j
    np.testing.assert_allclose(measure(X[None], np.ones((1, 3, 1))), X[0])
    # row j of B is b^H with b = i, so b^H x = -i * 2
    B = np.full((1, 3, 1), -1j)
    y = measure(np.full((1, 1, 3), 2.0), B)
    np.testing.assert_allclose(y, [-2j] * 3)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 3), st.integers(1, 12), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_measurement_operator_against_oracle(s, n, K, seed):
    rng = np.random.default_rng(seed)
    B = oracles.random_complex(rng, K, n, s)
    Xs = oracles.random_complex(rng, K, s, n)
    Xs2 = oracles.random_complex(rng, K, s, n)
    v = oracles.random_complex(rng, n)
    y = measure(Xs, B)
    np.testing.assert_allclose(y, sum(oracles.measure_k(X, Bk) for X, Bk in zip(Xs, B)),
                               atol=1e-12 * np.linalg.norm(Xs) * np.linalg.norm(B))
    np.testing.assert_allclose(measure(Xs + Xs2, B), y + measure(Xs2, B), atol=1e-12 * np.linalg.norm(y))
    for X, Bk in zip(Xs, B):
        Av = measure_adjoint_k(v, Bk)
        np.testing.assert_allclose(Av, oracles.measure_adjoint_k(v, Bk), atol=1e-14 * np.linalg.norm(Av))
        lhs = np.vdot(measure_k(X, Bk), v)
        rhs = np.vdot(X, Av)
        assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(X) * np.linalg.norm(Av)


def test_measure_adjoint_unit_and_zero():
    rng = np.random.default_rng(5)
    B = oracles.random_complex(rng, 6, 2)
    e = np.zeros(6)
    e[2] = 1
    out = measure_adjoint_k(e, B)
    np.testing.assert_allclose(out[:, 2], B[2].conj())
    assert np.count_nonzero(np.abs(out).sum(axis=0)) == 1
    assert not np.any(measure_adjoint_k(np.zeros(6), B))
    with pytest.raises(ValueError):
        measure_adjoint_k(np.zeros(5), B)


def test_measure_shape_mismatch():
    with pytest.raises(ValueError):
        measure(np.zeros((2, 2, 5)), np.zeros((2, 4, 2)))


def test_truth_reproducible_from_parameters():
    m, truth = simulate_instance(32, 2, 2, 3, seed=11)
    for u in truth.users:
        ref = sum(d * np.outer(u.h, steering_vector(t, 32)) for t, d in zip(u.taus, u.amps))
        assert np.linalg.norm(u.X - ref) <= 1e-12 * np.linalg.norm(ref)
    np.testing.assert_allclose(m.y, measure(truth.signals, m.B))


def test_simulate_bit_reproducible():
    a, _ = simulate_instance(40, 2, 2, 2, seed=7)
    b, _ = simulate_instance(40, 2, 2, 2, seed=7)
    assert a.y.tobytes() == b.y.tobytes()
    assert a.B.tobytes() == b.B.tobytes()


def test_instance_json_round_trip_is_exact():
    m, truth = simulate_instance(24, 2, 2, 2, seed=3, separated=False)
    m2, truth2 = load_instance(dump_instance(m, truth))
    assert m2.y.tobytes() == m.y.tobytes()
    assert m2.B.tobytes() == m.B.tobytes()
    assert m2.shape == m.shape
    assert truth2.signals.tobytes() == truth.signals.tobytes()
    assert m2.meta == m.meta


def test_measurement_set_validation():
    sh = LiftShape(6, 2)
    with pytest.raises(ValueError):
        MeasurementSet(np.zeros(5), np.zeros((1, 6, 2)), sh)
    with pytest.raises(ValueError):
        MeasurementSet(np.zeros(6), np.zeros((1, 6, 3)), sh)
    assert MeasurementSet(np.zeros(6), np.zeros((6, 2)), sh).K == 1


def test_ground_truth_signals_stack():
    u = UserChannel(np.array([0.1]), np.array([2.0]), np.array([1.0, 0.0]), 5)
    g = ChannelGroundTruth([u, u])
    assert g.K == 2 and g.signals.shape == (2, 2, 5)
