import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from jbsd.manifold import (
    LowRankLift,
    TangentVector,
    condition_number,
    lowrank_norms_and_gaps,
    retract,
    retract_dense,
    tangent_project,
    tangent_project_dense,
    truncated_svd,
)


def _random_base(rng, m, n, r):
    return truncated_svd(oracles.random_lowrank(rng, m, n, r), r)


def test_tangent_project_hand_example():
    base = LowRankLift(np.array([[1.0], [0.0]]), np.array([1.0]), np.array([[1.0], [0.0]]))
    Y = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(tangent_project(Y, base).to_dense(), [[1, 2], [3, 0]])
    np.testing.assert_allclose(tangent_project_dense(Y, base), [[1, 2], [3, 0]])


def test_tangent_project_fixes_base_and_is_projection():
    rng = np.random.default_rng(0)
    base = _random_base(rng, 12, 9, 2)
    Z = base.to_dense()
    np.testing.assert_allclose(tangent_project(Z, base).to_dense(), Z, atol=1e-12 * np.linalg.norm(Z))
    Y = oracles.random_complex(rng, 12, 9)
    P = tangent_project(Y, base).to_dense()
    PP = tangent_project(P, base).to_dense()
    assert np.linalg.norm(PP - P) <= 1e-12 * np.linalg.norm(Y)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(2, 12), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_tangent_project_matches_formula(m, n, r, seed):
    r = min(r, m, n)
    rng = np.random.default_rng(seed)
    base = _random_base(rng, m, n, r)
    Y = oracles.random_complex(rng, m, n)
    W = oracles.random_complex(rng, m, n)
    ref = oracles.tangent_project(Y, base.U, base.V)
    xi = tangent_project(Y, base)
    assert np.linalg.norm(xi.to_dense() - ref) <= 1e-12 * np.linalg.norm(Y)
    # operator form gives the same vector
    xi2 = tangent_project((base.U.conj().T @ Y, Y @ base.V), base)
    assert np.linalg.norm(xi2.to_dense() - ref) <= 1e-12 * np.linalg.norm(Y)
    # contraction and self-adjointness
    assert np.linalg.norm(ref) <= np.linalg.norm(Y) * (1 + 1e-12)
    PW = tangent_project(W, base).to_dense()
    assert abs(np.vdot(ref, W) - np.vdot(Y, PW)) <= 1e-10 * np.linalg.norm(Y) * np.linalg.norm(W)
    # the representation has U^H B = 0, which makes the norm formula exact
    assert abs(xi.norm() ** 2 - np.linalg.norm(ref) ** 2) <= 1e-10 * np.linalg.norm(Y) ** 2


def test_tangent_project_shape_mismatch():
    base = _random_base(np.random.default_rng(1), 5, 4, 1)
    with pytest.raises(ValueError):
        tangent_project(np.zeros((4, 4)), base)


def test_tangent_inner_is_real_part():
    rng = np.random.default_rng(2)
    base = _random_base(rng, 6, 5, 2)
    a = tangent_project(oracles.random_complex(rng, 6, 5), base)
    b = tangent_project(oracles.random_complex(rng, 6, 5), base)
    assert a.inner(b) == pytest.approx(np.real(np.vdot(a.to_dense(), b.to_dense())), rel=1e-12)


def test_retract_eckart_young_examples():
    W = np.diag([3.0, 1.0])
    base = truncated_svd(W, 2)
    zero = TangentVector(base, np.zeros((2, 2)), np.zeros((2, 2)))
    np.testing.assert_allclose(retract(zero, r=1).to_dense(), np.diag([3.0, 0.0]), atol=1e-15)
    np.testing.assert_allclose(retract(zero).to_dense(), W, atol=1e-12)


def test_retract_rejects_large_rank():
    base = _random_base(np.random.default_rng(3), 4, 3, 1)
    xi = TangentVector(base, np.zeros((3, 1)), np.zeros((4, 1)))
    with pytest.raises(ValueError):
        retract(xi, r=4)


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 24), st.integers(3, 24), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_retract_matches_dense_truncation(m, n, r, seed):
    rng = np.random.default_rng(seed)
    r = min(r, m // 2, n // 2) or 1
    base = _random_base(rng, m, n, r)
    xi = tangent_project(oracles.random_complex(rng, m, n), base)
    scale, step = rng.uniform(-1, 1), rng.uniform(-1, 1)
    W = scale * base.to_dense() + step * xi.to_dense()
    out = retract(xi, r, scale=scale, step=step)
    ref = retract_dense(W, r).to_dense()
    assert np.linalg.norm(out.to_dense() - ref) <= 1e-10 * np.linalg.norm(W)
    assert np.linalg.norm(out.U.conj().T @ out.U - np.eye(r)) <= 1e-10
    assert np.linalg.norm(out.V.conj().T @ out.V - np.eye(r)) <= 1e-10
    assert np.all(np.diff(out.S) <= 0) and np.all(out.S >= 0)


def test_retraction_is_optimal_against_random_competitors():
    rng = np.random.default_rng(4)
    for _ in range(200):
        m, n = rng.integers(4, 25, size=2)
        r = int(rng.integers(1, 3))
        base = _random_base(rng, m, n, r)
        xi = tangent_project(oracles.random_complex(rng, m, n), base)
        W = base.to_dense() + xi.to_dense()
        err = np.linalg.norm(W - retract(xi, r).to_dense())
        for _ in range(50):
            # rank-r competitors near the optimum are the informative ones
            U, S, Vh = np.linalg.svd(W)
            Uc = U[:, :r] + 0.1 * oracles.random_complex(rng, m, r)
            Vc = Vh[:r] + 0.1 * oracles.random_complex(rng, r, n)
            M = (Uc * S[:r]) @ Vc
            assert err <= np.linalg.norm(W - M) + 1e-10


def test_retract_keeps_low_rank_point():
    rng = np.random.default_rng(5)
    base = _random_base(rng, 10, 8, 2)
    # a tangent step along the base keeps the rank: W = 1.5 Z
    xi = tangent_project(base.to_dense(), base)
    out = retract(xi, 2, scale=1.0, step=0.5)
    assert np.linalg.norm(out.to_dense() - 1.5 * base.to_dense()) <= 1e-12 * base.fro_norm


def test_norms_and_condition_examples():
    Z = LowRankLift(np.eye(3, 2), np.array([3.0, 1.0]), np.eye(3, 2))
    d = lowrank_norms_and_gaps(Z)
    assert d["sigma_1"] == 3 and d["sigma_r"] == 1
    assert condition_number([LowRankLift(np.eye(2), np.array([5.0, 1.0]), np.eye(2))]) == 5
    a = LowRankLift(np.eye(2), np.array([4.0, 2.0]), np.eye(2))
    b = LowRankLift(np.eye(2), np.array([6.0, 3.0]), np.eye(2))
    assert condition_number([a, b]) == 3


def test_collapsed_flag():
    assert LowRankLift(np.eye(2), np.array([1.0, 1e-16]), np.eye(2)).collapsed()
    assert not LowRankLift(np.eye(2), np.array([1.0, 1e-3]), np.eye(2)).collapsed()
