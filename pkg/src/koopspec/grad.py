"""Reverse-mode gradients of the training loss, derived per layer by hand.

The computation graph is fixed and shallow, so each backward rule is
written out explicitly next to the forward quantities it needs. Gradients
with respect to the orthonormal factors ``U, V`` are plain Euclidean
gradients; the Stiefel constraint is restored by retraction after the
optimizer step.

At the hinge kink (zero energy growth) the subgradient 0 is used.
"""

from __future__ import annotations

from functools import singledispatch

import numpy as np

from . import operators as ops
from .baselines import DLinearModel, SSMModel, ssm_states
from .forecaster import Forecaster, LossConfig, encode_with_cache, forward, loss_terms, lyapunov_margin
from .operators import Squash, logistic

Grads = dict[str, np.ndarray]


def as_batch(batch) -> tuple[np.ndarray, np.ndarray]:
    """Accept ``(X, Y)`` arrays or a sequence of ``(X_i, Y_i)`` pairs."""
    if isinstance(batch, tuple) and len(batch) == 2 and np.ndim(batch[0]) == 3:
        X, Y = batch
    else:
        pairs = list(batch)
        if not pairs:
            raise ValueError("empty batch")
        X = np.stack([p[0] for p in pairs])
        Y = np.stack([p[1] for p in pairs])
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("empty batch")
    return X, Y


def loss_and_grad(model, batch, cfg: LossConfig | None = None) -> tuple[float, Grads]:
    """Batch-mean loss and its exact gradient for every trainable tensor."""
    total, _, _, grads = loss_terms_and_grad(model, batch, cfg)
    return total, grads


def loss_terms_and_grad(model, batch, cfg: LossConfig | None = None) -> tuple[float, float, float, Grads]:
    """``(total, mse, hinge, grads)``; raises FloatingPointError on a non-finite loss."""
    X, Y = as_batch(batch)
    out = _backward(model, X, Y, cfg or LossConfig())
    if not np.isfinite(out[0]):
        raise FloatingPointError("non-finite loss")
    return out


@singledispatch
def _backward(model, X, Y, cfg):
    raise TypeError(f"no gradient rule for {type(model).__name__}")


def spectrum_backward(spec: ops.SpectralParams, kind: Squash, g_sigma: np.ndarray) -> Grads:
    """Pull a gradient on the squashed spectrum back to the raw spectral tensors."""
    a, hidden = ops.preactivation(spec, kind)
    ga = g_sigma * (spec.rho_max - spec.rho_min) * logistic(a) * logistic(-a)
    if kind is Squash.CONSTRAINED:
        return {"S": ga}
    if kind is Squash.SCALAR:
        return {
            "S": spec.alpha[0] * ga,
            "alpha": np.array([np.dot(ga, spec.S)]),
            "beta": np.array([ga.sum()]),
        }
    if kind is Squash.PER_MODE:
        return {"S": spec.alpha * ga, "alpha": ga * spec.S, "beta": ga.copy()}
    # mlp: a_i = w2 . tanh(w1 S_i + b1) + b2
    g_hidden = ga[:, None] * spec.mlp_w2[0][None, :]
    g_pre = g_hidden * (1.0 - hidden**2)
    return {
        "S": g_pre @ spec.mlp_w1[:, 0],
        "mlp_w1": (g_pre.T @ spec.S)[:, None],
        "mlp_b1": g_pre.sum(axis=0),
        "mlp_w2": (ga @ hidden)[None, :],
        "mlp_b2": np.array([ga.sum()]),
    }


def operator_backward(op: ops.KoopmanOperator, z: np.ndarray, g_next: np.ndarray) -> tuple[Grads, np.ndarray]:
    """Gradients of ``z_next = K z`` (batched rows) w.r.t. operator tensors and ``z``."""
    if not op.is_odo:
        return {"K": g_next.T @ z}, g_next @ op.K
    sigma = ops.spectrum(op)
    zV = z @ op.V
    gU_side = g_next @ op.U
    grads = spectrum_backward(op.spec, op.squash, np.sum(zV * gU_side, axis=0))
    grads["U"] = g_next.T @ (zV * sigma)
    grads["V"] = z.T @ (gU_side * sigma)
    return grads, (gU_side * sigma) @ op.V.T


def encoder_backward(f: Forecaster, cache: dict, g_z: np.ndarray) -> Grads:
    enc = f.encoder
    n, dm = enc.n_patches, enc.d_model
    g_mixed = np.repeat(g_z[:, None, :] / n, n, axis=1)
    g_tokens = g_mixed.copy()
    grads: Grads = {}
    if enc.use_attention:
        tokens, q, k, v, attn = (cache[key] for key in ("tokens", "q", "k", "v", "attn"))
        qkv = enc.attn_qkv
        Wq, Wk, Wv = qkv[:dm], qkv[dm : 2 * dm], qkv[2 * dm :]
        g_attn = g_mixed @ v.transpose(0, 2, 1)
        g_v = attn.transpose(0, 2, 1) @ g_mixed
        g_scores = attn * (g_attn - np.sum(g_attn * attn, axis=-1, keepdims=True)) / np.sqrt(dm)
        g_q = g_scores @ k
        g_k = g_scores.transpose(0, 2, 1) @ q
        flat_tokens = tokens.reshape(-1, dm)
        grads["enc.attn_qkv"] = np.vstack(
            [g.reshape(-1, dm).T @ flat_tokens for g in (g_q, g_k, g_v)]
        )
        g_tokens += g_q @ Wq + g_k @ Wk + g_v @ Wv
    patches = cache["patches"]
    grads["enc.embed"] = g_tokens.reshape(-1, dm).T @ patches.reshape(-1, patches.shape[-1])
    return grads


@_backward.register
def _(f: Forecaster, X, Y, cfg: LossConfig):
    B = X.shape[0]
    z, cache = encode_with_cache(f.encoder, X)
    op = f.koop
    z_next = ops.apply(op, z)
    W, b = f.params["dec.W"], f.params["dec.b"]
    Y_hat = z_next @ W.T + b
    diff = Y_hat - Y.reshape(B, -1)
    mse = float(np.mean(diff**2))
    Pm = cfg.metric(z.shape[1])
    margin = lyapunov_margin(z, z_next, Pm)
    hinge = float(np.mean(np.maximum(margin, 0.0)))
    total = mse + cfg.lambda_lyap * hinge

    g_out = 2.0 * diff / diff.size
    grads: Grads = {"dec.W": g_out.T @ z_next, "dec.b": g_out.sum(axis=0)}
    g_next = g_out @ W
    coef = np.where(margin > 0.0, cfg.lambda_lyap / B, 0.0)[:, None]
    # P is symmetric, so d(z^T P z)/dz = 2 P z
    g_next = g_next + 2.0 * coef * (z_next @ Pm)
    g_z = -2.0 * coef * (z @ Pm)
    op_grads, g_z_op = operator_backward(op, z, g_next)
    g_z = g_z + g_z_op
    grads.update({f"koop.{k}": v for k, v in op_grads.items()})
    grads.update(encoder_backward(f, cache, g_z))
    return total, mse, hinge, {k: grads[k] for k in f.params}


@_backward.register
def _(m: DLinearModel, X, Y, cfg):
    diff = np.matmul(m.params["W"], X) + m.params["b"][:, None] - Y
    mse = float(np.mean(diff**2))
    g = 2.0 * diff / diff.size
    grads = {"W": np.einsum("bhc,bpc->hp", g, X), "b": g.sum(axis=(0, 2))}
    return mse, mse, 0.0, grads


@_backward.register
def _(m: SSMModel, X, Y, cfg):
    B = X.shape[0]
    states = ssm_states(m, X)
    C = m.params["C"]
    diff = states[-1] @ C.T - Y.reshape(B, -1)
    mse = float(np.mean(diff**2))
    g_out = 2.0 * diff / diff.size
    grads = {"C": g_out.T @ states[-1], "B": np.zeros_like(m.params["B"])}
    g_h = g_out @ C
    if m.diagonal:
        a = m.params["a"]
        g_a = np.zeros_like(a)
        for t in range(m.P - 1, -1, -1):
            g_a += np.sum(g_h * states[t], axis=0)
            grads["B"] += g_h.T @ X[:, t]
            g_h = g_h * a
        grads["a"] = g_a
    else:
        A = m.params["A"]
        g_A = np.zeros_like(A)
        for t in range(m.P - 1, -1, -1):
            g_A += g_h.T @ states[t]
            grads["B"] += g_h.T @ X[:, t]
            g_h = g_h @ A
        grads["A"] = g_A
    return mse, mse, 0.0, {k: grads[k] for k in m.params}


def model_loss(model, X, Y, cfg: LossConfig | None = None) -> float:
    """Loss through the public forward path (independent of the backward code)."""
    cfg = cfg or LossConfig()
    if isinstance(model, Forecaster):
        Y_hat, z, z_next = forward(model, X)
        return loss_terms(Y_hat, Y, z, z_next, cfg)[0]
    return float(np.mean((model.predict(X) - Y) ** 2))


def hinge_safe_batch(model, X, Y, cfg: LossConfig | None = None, margin_tol: float = 1e-3):
    """Drop samples whose energy growth sits within ``margin_tol`` of the hinge kink."""
    if not isinstance(model, Forecaster):
        return X, Y
    cfg = cfg or LossConfig()
    _, z, z_next = forward(model, X)
    keep = np.abs(lyapunov_margin(z, z_next, cfg.metric(z.shape[1]))) > margin_tol
    return X[keep], Y[keep]


def finite_diff_errors(model, batch, eps: float = 1e-5, cfg: LossConfig | None = None) -> dict[str, float]:
    """Per-tensor max relative error between analytic and central-difference gradients.

    Relative error per entry is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    X, Y = hinge_safe_batch(model, *as_batch(batch), cfg)
    if len(X) == 0:
        raise ValueError("every sample sits on the hinge boundary")
    _, grads = loss_and_grad(model, (X, Y), cfg)
    errors = {}
    for key, value in model.params.items():
        worst = 0.0
        for idx in np.ndindex(value.shape):
            numeric = _central_difference(model, key, idx, eps, X, Y, cfg)
            analytic = grads[key][idx]
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
        errors[key] = worst
    return errors


def finite_diff_check(model, batch, eps: float = 1e-5, cfg: LossConfig | None = None) -> float:
    return max(finite_diff_errors(model, batch, eps, cfg).values())


def _central_difference(model, key, idx, eps, X, Y, cfg) -> float:
    def shifted(delta):
        arr = model.params[key].copy()
        arr[idx] += delta
        return model.with_params({**model.params, key: arr})

    return (model_loss(shifted(eps), X, Y, cfg) - model_loss(shifted(-eps), X, Y, cfg)) / (2 * eps)
