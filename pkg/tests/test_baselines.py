import numpy as np
import pytest

from koopspec.baselines import (
    DivergenceError,
    DLinearModel,
    PersistenceModel,
    SSMModel,
    augment_unstable_ssm,
    baseline_from_text,
    baseline_to_text,
    dlinear_forward,
    persistence_forecast,
    ssm_forward,
)
from koopspec.linalg import spectral_radius_estimate


def test_dlinear_shares_weights_across_channels():
    m = DLinearModel.init(5, 3, 2, np.random.default_rng(0))
    m = m.with_params({"W": m.params["W"], "b": np.array([0.1, 0.2, 0.3])})
    X = np.random.default_rng(1).standard_normal((5, 2))
    Y = dlinear_forward(m, X)
    for c in range(2):
        np.testing.assert_allclose(Y[:, c], m.params["W"] @ X[:, c] + m.params["b"], atol=1e-15)
    assert m.predict(X[None]).shape == (1, 3, 2)


def test_ssm_recurrence_by_hand():
    params = {"A": np.array([[0.5]]), "B": np.array([[1.0, 2.0]]), "C": np.array([[1.0], [-1.0]])}
    m = SSMModel(P=2, H=1, d=2, d_h=1, params=params)
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    # h1 = 1, h2 = 0.5 * 1 + 2 = 2.5
    np.testing.assert_allclose(ssm_forward(m, X), [[2.5, -2.5]])


def test_diagonal_ssm_matches_dense_equivalent():
    rng = np.random.default_rng(2)
    diag = SSMModel.init(8, 2, 3, rng, d_h=4, diagonal=True)
    dense = SSMModel(8, 2, 3, 4, {"A": np.diag(diag.params["a"]), "B": diag.params["B"], "C": diag.params["C"]})
    X = rng.standard_normal((5, 8, 3))
    np.testing.assert_allclose(ssm_forward(diag, X), ssm_forward(dense, X), atol=1e-14)
    np.testing.assert_array_equal(diag.transition_matrix(), np.diag(diag.params["a"]))


@pytest.mark.parametrize("diagonal", [False, True])
def test_unstable_augmentation_exact(diagonal):
    rng = np.random.default_rng(3)
    base = SSMModel.init(12, 3, 2, rng, d_h=6, diagonal=diagonal)
    aug = augment_unstable_ssm(base, 2.0, 3)
    X = rng.standard_normal((20, 12, 2))
    assert aug.d_h == 9
    assert np.array_equal(ssm_forward(aug, X), ssm_forward(base, X))
    assert spectral_radius_estimate(aug.A) >= 1.9


def test_augmentation_rejects_negative_dim():
    with pytest.raises(ValueError):
        augment_unstable_ssm(SSMModel.init(4, 1, 1, np.random.default_rng(0), d_h=2), 2.0, -1)


def test_ssm_divergence_raises():
    m = SSMModel(200, 1, 1, 1, {"A": np.array([[1e6]]), "B": np.ones((1, 1)), "C": np.ones((1, 1))})
    with pytest.raises(DivergenceError):
        ssm_forward(m, np.ones((200, 1)))


@pytest.mark.parametrize("H", [1, 4, 7])
def test_persistence_on_ramp(H):
    s, P = 0.3, 10
    t = np.arange(P + H, dtype=float)
    series = np.stack([s * t, -s * t], axis=1)
    X, Y = series[:P], series[P:]
    Y_hat = persistence_forecast(X, H)
    k = np.arange(1, H + 1)
    assert np.mean((Y_hat - Y) ** 2) == pytest.approx(s**2 * np.mean(k**2), rel=1e-12)
    np.testing.assert_array_equal(PersistenceModel(H).predict(X[None])[0], Y_hat)


def test_checkpoint_round_trip():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((3, 6, 2))
    for m in (DLinearModel.init(6, 2, 2, rng), SSMModel.init(6, 2, 2, rng, d_h=3),
              SSMModel.init(6, 2, 2, rng, d_h=3, diagonal=True)):
        back = baseline_from_text(baseline_to_text(m))
        assert type(back) is type(m)
        np.testing.assert_array_equal(back.predict(X), m.predict(X))
