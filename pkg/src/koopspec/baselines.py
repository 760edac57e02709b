"""Linear reference forecasters.

* ``DLinearModel``: one ``H x P`` map shared by every channel.
* ``SSMModel``: discrete-time linear state-space model
  ``h_{t+1} = A h_t + B x_t`` run over the window from ``h_0 = 0``, read out
  from the final state by ``C`` into all ``H * d`` forecast entries. ``A`` is
  free (dense by default, or diagonal).
* ``persistence_forecast``: repeat the last observation.
* ``augment_unstable_ssm``: pad an SSM with a decoupled ``gamma * I`` block
  that is never excited, giving an unstable transition matrix with exactly
  the same input-output behaviour.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import textio


class DivergenceError(FloatingPointError):
    """A forward pass produced non-finite values."""


def _batched(X):
    X = np.asarray(X, dtype=np.float64)
    return (X[None], True) if X.ndim == 2 else (X, False)


@dataclass(frozen=True)
class DLinearModel:
    P: int
    H: int
    d: int
    params: dict[str, np.ndarray] = field(repr=False)  # W (H, P), b (H,)

    @classmethod
    def init(cls, P: int, H: int, d: int, rng: np.random.Generator) -> "DLinearModel":
        W = rng.uniform(-1, 1, (H, P)) / np.sqrt(P)
        return cls(P, H, d, {"W": W, "b": np.zeros(H)})

    def with_params(self, params) -> "DLinearModel":
        return dataclasses.replace(self, params=dict(params))

    def retract(self) -> "DLinearModel":
        return self

    def predict(self, X) -> np.ndarray:
        return dlinear_forward(self, X)


def dlinear_forward(m: DLinearModel, X) -> np.ndarray:
    """Column ``c`` of the output is ``W @ X[:, c] + b``."""
    Xb, single = _batched(X)
    if Xb.shape[1] != m.P:
        raise ValueError(f"window length {Xb.shape[1]} != P={m.P}")
    Y = np.matmul(m.params["W"], Xb) + m.params["b"][:, None]
    return Y[0] if single else Y


@dataclass(frozen=True)
class SSMModel:
    P: int
    H: int
    d: int
    d_h: int
    params: dict[str, np.ndarray] = field(repr=False)
    diagonal: bool = False

    @classmethod
    def init(
        cls, P: int, H: int, d: int, rng: np.random.Generator, d_h: int = 32, diagonal: bool = False
    ) -> "SSMModel":
        if diagonal:
            A = {"a": rng.uniform(0.0, 0.9, d_h)}
        else:
            A = {"A": rng.standard_normal((d_h, d_h)) * 0.5 / np.sqrt(d_h)}
        params = {
            **A,
            "B": rng.uniform(-1, 1, (d_h, d)) / np.sqrt(d),
            "C": rng.uniform(-1, 1, (H * d, d_h)) / np.sqrt(d_h),
        }
        return cls(P, H, d, d_h, params, diagonal)

    @property
    def A(self) -> np.ndarray:
        return np.diag(self.params["a"]) if self.diagonal else self.params["A"]

    def with_params(self, params) -> "SSMModel":
        return dataclasses.replace(self, params=dict(params))

    def retract(self) -> "SSMModel":
        return self

    def predict(self, X) -> np.ndarray:
        return ssm_forward(self, X)

    def transition_matrix(self) -> np.ndarray:
        return self.A


def ssm_states(m: SSMModel, Xb: np.ndarray) -> list[np.ndarray]:
    """Hidden states ``h_0 .. h_P`` for a batch of windows, each (B, d_h)."""
    B_in = m.params["B"]
    h = np.zeros((Xb.shape[0], m.d_h))
    states = [h]
    with np.errstate(over="ignore", invalid="ignore"):
        if m.diagonal:
            a = m.params["a"]
            for t in range(Xb.shape[1]):
                h = h * a + Xb[:, t] @ B_in.T
                states.append(h)
        else:
            A = m.params["A"]
            for t in range(Xb.shape[1]):
                h = h @ A.T + Xb[:, t] @ B_in.T
                states.append(h)
    if not np.all(np.isfinite(h)):
        raise DivergenceError("SSM hidden state became non-finite")
    return states


def ssm_forward(m: SSMModel, X) -> np.ndarray:
    Xb, single = _batched(X)
    if Xb.shape[1:] != (m.P, m.d):
        raise ValueError(f"expected windows of shape ({m.P}, {m.d}), got {Xb.shape[1:]}")
    h_last = ssm_states(m, Xb)[-1]
    Y = (h_last @ m.params["C"].T).reshape(-1, m.H, m.d)
    return Y[0] if single else Y


def augment_unstable_ssm(m: SSMModel, gamma: float, extra_dim: int) -> SSMModel:
    """Block-diagonal ``diag(A, gamma I)`` with the new block cut off from input and readout."""
    if extra_dim < 0:
        raise ValueError("extra_dim must be nonnegative")
    d_new = m.d_h + extra_dim
    p = m.params
    params = {
        "B": np.vstack([p["B"], np.zeros((extra_dim, m.d))]),
        "C": np.hstack([p["C"], np.zeros((m.H * m.d, extra_dim))]),
    }
    if m.diagonal:
        params["a"] = np.concatenate([p["a"], np.full(extra_dim, float(gamma))])
    else:
        A = np.zeros((d_new, d_new))
        A[: m.d_h, : m.d_h] = p["A"]
        A[m.d_h :, m.d_h :] = gamma * np.eye(extra_dim)
        params["A"] = A
    return dataclasses.replace(m, d_h=d_new, params=params)


def persistence_forecast(X, H: int) -> np.ndarray:
    Xb, single = _batched(X)
    if Xb.shape[1] < 1:
        raise ValueError("need at least one input row")
    Y = np.repeat(Xb[:, -1:, :], H, axis=1)
    return Y[0] if single else Y


@dataclass(frozen=True)
class PersistenceModel:
    H: int

    def predict(self, X) -> np.ndarray:
        return persistence_forecast(X, self.H)


def baseline_to_text(m: DLinearModel | SSMModel) -> str:
    if isinstance(m, DLinearModel):
        meta = {"kind": "dlinear", "P": m.P, "H": m.H, "d": m.d}
    else:
        meta = {"kind": "ssm", "P": m.P, "H": m.H, "d": m.d, "d_h": m.d_h, "diagonal": m.diagonal}
    return textio.dumps(meta, m.params)


def baseline_from_text(text: str) -> DLinearModel | SSMModel:
    meta, tensors = textio.loads(text)
    P, H, d = int(meta["P"]), int(meta["H"]), int(meta["d"])
    if meta["kind"] == "dlinear":
        return DLinearModel(P, H, d, tensors)
    if meta["kind"] == "ssm":
        return SSMModel(P, H, d, int(meta["d_h"]), tensors, meta["diagonal"] == "True")
    raise textio.FormatError(f"unknown baseline kind {meta['kind']!r}")
