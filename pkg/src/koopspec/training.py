"""Adam, the step-then-retract training loop, and evaluation metrics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import SpectralSnapshot, model_snapshot
from .forecaster import LossConfig
from .grad import loss_terms_and_grad
from .linalg import LinAlgError


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray], **hyper) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            **hyper,
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {key}")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = {}, {}, {}
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {key}")
        m = b1 * state.m[key] + (1.0 - b1) * g
        v = b2 * state.v[key] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_params[key] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[key], new_v[key] = m, v
    return new_params, AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 32
    lr: float = 3e-4
    lambda_lyap: float = 0.1
    seed: int = 0
    eval_every: int = 50
    spectral_log_every: int = 100

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")
        if self.eval_every < 1 or self.spectral_log_every < 1:
            raise ValueError("logging intervals must be >= 1")


@dataclass(frozen=True)
class HistoryRecord:
    step: int
    loss: float
    mse: float
    hinge: float
    max_sv: float


@dataclass
class RunHistory:
    variant: str
    records: list[HistoryRecord] = field(default_factory=list)
    snapshots: list[SpectralSnapshot] = field(default_factory=list)
    status: str = "ok"
    failed_step: int | None = None
    failure: str = ""
    initial: dict[str, float] = field(default_factory=dict)
    final: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def diverged(self) -> bool:
        return self.status != "ok"


def evaluate(model, windows, chunk: int = 1024) -> dict[str, float]:
    """MSE and MAE over every sample, step and channel."""
    X, Y = windows.X, windows.Y
    if len(X) == 0:
        raise ValueError("no windows to evaluate")
    sq = ab = 0.0
    for i in range(0, len(X), chunk):
        diff = model.predict(X[i : i + chunk]) - Y[i : i + chunk]
        sq += float(np.sum(diff**2))
        ab += float(np.sum(np.abs(diff)))
    n = Y.size
    return {"mse": sq / n, "mae": ab / n}


def _safe_evaluate(model, windows) -> dict[str, float]:
    try:
        with np.errstate(all="ignore"):
            return evaluate(model, windows)
    except FloatingPointError:
        return {"mse": math.nan, "mae": math.nan}


def train(model, train_set, cfg: TrainConfig, test_set=None, variant: str = ""):
    """Minibatch Adam with QR retraction after every step.

    Minibatches are drawn with replacement from ``train_set`` by a
    Philox (counter-based) generator seeded with ``cfg.seed``. A non-finite
    loss or gradient stops the run and marks it diverged.
    """
    if len(train_set) == 0:
        raise ValueError("empty training set")
    variant = variant or getattr(getattr(model, "config", None), "variant", type(model).__name__)
    variant = getattr(variant, "value", variant)
    history = RunHistory(variant)
    history.initial = _safe_evaluate(model, train_set)
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    loss_cfg = LossConfig(lambda_lyap=cfg.lambda_lyap)
    state = AdamState.zeros_like(model.params, lr=cfg.lr)
    N = len(train_set)
    for step in range(cfg.steps):
        idx = rng.integers(0, N, size=cfg.batch_size)
        snap = None
        if step % cfg.spectral_log_every == 0:
            snap = _record_snapshot(history, model, step)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                total, mse, hinge, grads = loss_terms_and_grad(
                    model, (train_set.X[idx], train_set.Y[idx]), loss_cfg
                )
            if step % cfg.eval_every == 0:
                max_sv = snap.max_sv if snap is not None else math.nan
                history.records.append(HistoryRecord(step, total, mse, hinge, max_sv))
            params, state = adam_step(model.params, grads, state)
            model = model.with_params(params).retract()
        except (FloatingPointError, LinAlgError) as exc:
            history.status = "diverged"
            history.failed_step = step
            history.failure = str(exc)
            break
    else:
        _record_snapshot(history, model, cfg.steps)
    history.final["train"] = _safe_evaluate(model, train_set)
    if test_set is not None:
        history.final["test"] = _safe_evaluate(model, test_set)
    return model, history


def _record_snapshot(history: RunHistory, model, step: int):
    try:
        snap = model_snapshot(model, step, history.variant)
    except (LinAlgError, FloatingPointError):
        return None
    if snap is not None:
        history.snapshots.append(snap)
    return snap


HISTORY_HEADER = ("step", "loss", "mse", "hinge", "max_singular_value")


def history_to_text(history: RunHistory) -> str:
    """CSV with header ``step,loss,mse,hinge,max_singular_value``; floats via repr."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_HEADER)
    for r in history.records:
        w.writerow([r.step, repr(r.loss), repr(r.mse), repr(r.hinge), repr(r.max_sv)])
    return buf.getvalue()


def history_from_text(text: str) -> list[HistoryRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != HISTORY_HEADER:
        raise ValueError("not a history file")
    return [HistoryRecord(int(s), float(a), float(b), float(c), float(e)) for s, a, b, c, e in rows[1:]]
