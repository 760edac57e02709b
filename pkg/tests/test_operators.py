import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopspec import operators as ops
from koopspec.checks import random_odo
from koopspec.operators import KoopmanOperator, OperatorError, SpectralParams, Squash, Variant

import oracles


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def test_constrained_spectrum_by_hand():
    spec = SpectralParams(S=np.array([0.0, 2.0, -1.0]), rho_max=0.99, rho_min=0.0)
    expected = [0.99 * sigmoid(s) for s in (0.0, 2.0, -1.0)]
    np.testing.assert_allclose(ops.build_spectrum(spec, Squash.CONSTRAINED), expected, rtol=1e-15)


def test_scalar_and_per_mode_spectrum_by_hand():
    S = np.array([0.5, -0.25])
    scalar = SpectralParams(S=S, alpha=np.array([2.0]), beta=np.array([1.0]), rho_max=0.9, rho_min=0.1)
    expected = [0.1 + 0.8 * sigmoid(2.0 * s + 1.0) for s in S]
    np.testing.assert_allclose(ops.build_spectrum(scalar, "scalar"), expected, rtol=1e-15)
    per = SpectralParams(S=S, alpha=np.array([2.0, -1.0]), beta=np.array([0.0, 3.0]), rho_max=0.9)
    expected = [0.9 * sigmoid(1.0), 0.9 * sigmoid(3.25)]
    np.testing.assert_allclose(ops.build_spectrum(per, "per_mode"), expected, rtol=1e-15)


def test_mlp_spectrum_by_hand():
    spec = SpectralParams(
        S=np.array([0.3]),
        mlp_w1=np.array([[1.0], [-2.0]]),
        mlp_b1=np.array([0.1, 0.0]),
        mlp_w2=np.array([[0.5, 1.5]]),
        mlp_b2=np.array([-0.2]),
    )
    a = 0.5 * math.tanh(0.3 + 0.1) + 1.5 * math.tanh(-0.6) - 0.2
    assert ops.build_spectrum(spec, "mlp")[0] == pytest.approx(0.99 * sigmoid(a), rel=1e-15)


def test_squash_keeps_distance_to_upper_bound():
    sigma = ops.squash(np.array([30.0]), 0.0, 0.99)[0]
    assert sigma < 0.99
    assert 0.99 - sigma == pytest.approx(0.99 * math.exp(-30.0), rel=1e-12)


def test_missing_gates_raise():
    spec = SpectralParams(S=np.zeros(2))
    with pytest.raises(OperatorError, match="alpha"):
        ops.build_spectrum(spec, "scalar")
    with pytest.raises(OperatorError, match="mlp"):
        ops.build_spectrum(spec, "mlp")


def test_materialize_matches_triple_loop():
    op = random_odo(Variant.PER_MODE, 4, np.random.default_rng(0))
    sigma = ops.spectrum(op)
    US = [[op.U[i, j] * sigma[j] for j in range(4)] for i in range(4)]
    ref = oracles.matmul(US, oracles.transpose(op.V.tolist()))
    np.testing.assert_allclose(ops.materialize(op), ref, atol=1e-14)


@pytest.mark.parametrize("variant", list(Variant))
def test_apply_matches_dense_product(variant):
    rng = np.random.default_rng(1)
    op = ops.init_operator(variant, 6, rng, rank=3)
    Z = rng.standard_normal((5, 6))
    K = ops.materialize(op)
    np.testing.assert_allclose(ops.apply(op, Z), Z @ K.T, atol=1e-14)
    np.testing.assert_allclose(ops.apply(op, Z[0]), K @ Z[0], atol=1e-14)


def test_apply_dimension_mismatch():
    op = ops.init_operator("constrained", 4, np.random.default_rng(0))
    with pytest.raises(OperatorError, match="dimension"):
        ops.apply(op, np.ones(3))


@settings(max_examples=50)
@given(st.sampled_from(ops.ODO_VARIANTS), st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_singular_values_equal_spectrum(variant, d, seed):
    rng = np.random.default_rng(seed)
    op = random_odo(variant, d, rng, rank=max(1, d // 2))
    sv = np.linalg.svd(ops.materialize(op), compute_uv=False)
    sigma = np.sort(ops.spectrum(op))[::-1]
    assert sv[0] < 0.99
    np.testing.assert_allclose(sv[: op.m], sigma, atol=1e-12)
    np.testing.assert_allclose(ops.operator_spectrum(op), sigma, atol=0)


def test_low_rank_has_rank_r():
    op = ops.init_operator("low_rank", 10, np.random.default_rng(2), rank=3)
    sv = np.linalg.svd(ops.materialize(op), compute_uv=False)
    assert op.m == 3
    assert sv[3] < 1e-14
    assert op.squash is Squash.CONSTRAINED


def test_low_rank_rank_validated():
    with pytest.raises(OperatorError, match="1 <= r < d"):
        ops.init_operator("low_rank", 4, np.random.default_rng(0), rank=4)


def test_inverse_round_trip_and_refusals():
    rng = np.random.default_rng(3)
    op = random_odo("mlp", 5, rng, rho_min=0.05)
    z = rng.standard_normal((3, 5))
    np.testing.assert_allclose(ops.inverse_apply(op, ops.apply(op, z)), z, rtol=1e-10, atol=1e-12)
    with pytest.raises(OperatorError, match="rho_min"):
        ops.inverse_apply(random_odo("constrained", 5, rng), z)
    with pytest.raises(OperatorError, match="low_rank"):
        ops.inverse_apply(random_odo("low_rank", 5, rng, rank=2, rho_min=0.1), z)
    with pytest.raises(OperatorError, match="unconstrained"):
        ops.inverse_apply(ops.init_operator("unconstrained", 5, rng), z)


def test_retract_restores_orthonormality():
    rng = np.random.default_rng(4)
    op = ops.init_operator("constrained", 6, rng)
    drifted = ops.with_params(op, {"U": op.U + 0.01 * rng.standard_normal(op.U.shape)})
    assert ops.orthogonality_error(drifted) > 1e-3
    fixed = ops.retract(drifted)
    assert ops.orthogonality_error(fixed) < 1e-14
    # already-orthonormal factors are a fixed point
    np.testing.assert_allclose(ops.retract(op).U, op.U, atol=1e-14)
    with pytest.raises(OperatorError):
        ops.retract(ops.init_operator("unconstrained", 3, rng))


def test_from_matrix_reconstructs_and_validates():
    rng = np.random.default_rng(5)
    M = rng.standard_normal((5, 5))
    M *= 0.8 / np.linalg.norm(M, 2)
    np.testing.assert_allclose(ops.materialize(ops.from_matrix(M)), M, atol=1e-12)
    with pytest.raises(OperatorError, match="admissible"):
        ops.from_matrix(2.0 * M)
    low = ops.from_matrix(M, rank=2)
    assert low.variant is Variant.LOW_RANK
    U, s, Vt = np.linalg.svd(M)
    np.testing.assert_allclose(ops.materialize(low), (U[:, :2] * s[:2]) @ Vt[:2], atol=1e-12)


def test_init_defaults():
    rng = np.random.default_rng(6)
    op = ops.init_operator("scalar", 4, rng)
    np.testing.assert_array_equal(op.spec.alpha, [1.0])
    np.testing.assert_array_equal(op.spec.beta, [0.0])
    assert ops.orthogonality_error(op) < 1e-14
    dense = ops.init_operator("unconstrained", 4, rng)
    assert dense.K.shape == (4, 4) and not dense.is_odo


@pytest.mark.parametrize("variant", list(Variant))
def test_text_round_trip_is_exact(variant):
    op = ops.init_operator(variant, 5, np.random.default_rng(7), rank=2, rho_min=0.01, mlp_hidden=3)
    back = ops.operator_from_text(ops.operator_to_text(op))
    assert back.variant is op.variant and back.d == op.d
    for key, value in ops.operator_params(op).items():
        np.testing.assert_array_equal(ops.operator_params(back)[key], value)
    np.testing.assert_array_equal(ops.materialize(back), ops.materialize(op))


def test_spectral_params_validation():
    with pytest.raises(OperatorError, match="rho_min < rho_max"):
        SpectralParams(S=np.zeros(2), rho_max=0.5, rho_min=0.6)
    with pytest.raises(OperatorError):
        SpectralParams(S=np.zeros(2), rho_max=1.0)
