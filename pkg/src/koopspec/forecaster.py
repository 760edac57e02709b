"""Encoder -> Koopman propagator -> direct multi-step decoder.

The encoder is a compact patch encoder: the window is cut into
``n_patches`` contiguous patches, each patch is flattened and linearly
embedded, fixed sinusoidal positions are added, an optional single-head
softmax self-attention layer (with residual connection) mixes the tokens,
and the tokens are mean-pooled into one latent vector ``z``. One Koopman
step gives ``z_next = K z`` and a linear layer decodes ``z_next`` into all
``H`` forecast rows at once.

All functions accept a single window ``(P, d)`` or a batch ``(B, P, d)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from . import textio
from .operators import KoopmanOperator, Variant


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class PatchEncoder:
    n_patches: int
    patch_len: int
    embed: np.ndarray  # (d_model, patch_len * d)
    pos_enc: np.ndarray  # (n_patches, d_model)
    attn_qkv: np.ndarray | None = None  # (3 * d_model, d_model)
    use_attention: bool = False

    @property
    def d_model(self) -> int:
        return self.embed.shape[0]


@dataclass(frozen=True)
class LinearDecoder:
    W: np.ndarray  # (H * d, d_lat)
    b: np.ndarray  # (H * d,)
    H: int
    d: int


@dataclass(frozen=True)
class LossConfig:
    lambda_lyap: float = 0.1
    P_metric: np.ndarray | None = None  # identity when None

    def __post_init__(self):
        if self.lambda_lyap < 0:
            raise ValueError("lambda_lyap must be nonnegative")
        if self.P_metric is not None:
            Pm = np.asarray(self.P_metric, dtype=np.float64)
            if Pm.ndim != 2 or Pm.shape[0] != Pm.shape[1]:
                raise ValueError("P_metric must be square")
            if np.max(np.abs(Pm - Pm.T)) > 1e-12:
                raise ValueError("P_metric must be symmetric")
            if np.linalg.eigvalsh(Pm)[0] <= 0:
                raise ValueError("P_metric must be positive definite")

    def metric(self, d: int) -> np.ndarray:
        return np.eye(d) if self.P_metric is None else np.asarray(self.P_metric, dtype=np.float64)


def sinusoidal_positions(n: int, d_model: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def patch_length(P: int, n_patches: int) -> int:
    return -(-P // n_patches)


def patchify(X: np.ndarray, n_patches: int) -> np.ndarray:
    """(B, P, d) -> (B, n_patches, patch_len * d), right-padding with the last row."""
    B, P, d = X.shape
    pl = patch_length(P, n_patches)
    pad = n_patches * pl - P
    if pad:
        X = np.concatenate([X, np.repeat(X[:, -1:, :], pad, axis=1)], axis=1)
    return X.reshape(B, n_patches, pl * d)


def _batched(X: np.ndarray, ndim: int) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == ndim - 1:
        return X[None], True
    return X, False


def softmax(S: np.ndarray) -> np.ndarray:
    e = np.exp(S - S.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def encode_with_cache(enc: PatchEncoder, X: np.ndarray) -> tuple[np.ndarray, dict]:
    """Batched encoder forward pass returning intermediates for backprop."""
    if X.ndim != 3 or X.shape[2] * enc.patch_len != enc.embed.shape[1]:
        raise ShapeError(f"window shape {X.shape[1:]} does not match the encoder")
    patches = patchify(X, enc.n_patches)
    tokens = patches @ enc.embed.T + enc.pos_enc
    cache = {"patches": patches, "tokens": tokens}
    if enc.use_attention:
        dm = enc.d_model
        Wq, Wk, Wv = enc.attn_qkv[:dm], enc.attn_qkv[dm : 2 * dm], enc.attn_qkv[2 * dm :]
        q = tokens @ Wq.T
        k = tokens @ Wk.T
        v = tokens @ Wv.T
        attn = softmax(q @ k.transpose(0, 2, 1) / np.sqrt(dm))
        mixed = tokens + attn @ v
        cache.update(q=q, k=k, v=v, attn=attn)
    else:
        mixed = tokens
    return mixed.mean(axis=1), cache


def encode(enc: PatchEncoder, X: np.ndarray) -> np.ndarray:
    Xb, single = _batched(X, 3)
    z, _ = encode_with_cache(enc, Xb)
    return z[0] if single else z


def decode(dec: LinearDecoder, z_next: np.ndarray) -> np.ndarray:
    zb, single = _batched(z_next, 2)
    if zb.shape[1] != dec.W.shape[1]:
        raise ShapeError(f"latent has size {zb.shape[1]}, decoder expects {dec.W.shape[1]}")
    Y = (zb @ dec.W.T + dec.b).reshape(-1, dec.H, dec.d)
    return Y[0] if single else Y


@dataclass(frozen=True)
class ForecasterConfig:
    P: int
    H: int
    d: int
    d_model: int = 32
    variant: Variant = Variant.CONSTRAINED
    n_patches: int = 4
    use_attention: bool = True
    rank: int = 16
    rho_max: float = 0.99
    rho_min: float = 0.0
    mlp_hidden: int = 16

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if min(self.P, self.H, self.d, self.d_model, self.n_patches) < 1:
            raise ValueError("sizes must be positive")
        if self.n_patches > self.P:
            raise ValueError("n_patches cannot exceed P")

    @property
    def patch_len(self) -> int:
        return patch_length(self.P, self.n_patches)


@dataclass(frozen=True)
class Forecaster:
    """Model value: a config plus a flat map of named parameter tensors.

    Parameter keys are ``enc.embed``, ``enc.attn_qkv`` (attention only),
    ``koop.<name>`` for the operator tensors and ``dec.W``, ``dec.b``.
    """

    config: ForecasterConfig
    params: dict[str, np.ndarray] = field(repr=False)

    @classmethod
    def init(cls, config: ForecasterConfig, rng: np.random.Generator) -> "Forecaster":
        c = config
        fan_in = c.patch_len * c.d
        params = {"enc.embed": rng.uniform(-1, 1, (c.d_model, fan_in)) / np.sqrt(fan_in)}
        if c.use_attention:
            params["enc.attn_qkv"] = rng.standard_normal((3 * c.d_model, c.d_model)) / np.sqrt(c.d_model)
        koop = ops.init_operator(
            c.variant, c.d_model, rng,
            rank=c.rank, rho_max=c.rho_max, rho_min=c.rho_min, mlp_hidden=c.mlp_hidden,
        )
        params.update({f"koop.{k}": v for k, v in ops.operator_params(koop).items()})
        params["dec.W"] = rng.uniform(-1, 1, (c.H * c.d, c.d_model)) / np.sqrt(c.d_model)
        params["dec.b"] = np.zeros(c.H * c.d)
        return cls(config, params)

    def with_params(self, params: dict[str, np.ndarray]) -> "Forecaster":
        return dataclasses.replace(self, params=dict(params))

    @property
    def encoder(self) -> PatchEncoder:
        c = self.config
        return PatchEncoder(
            n_patches=c.n_patches,
            patch_len=c.patch_len,
            embed=self.params["enc.embed"],
            pos_enc=sinusoidal_positions(c.n_patches, c.d_model),
            attn_qkv=self.params.get("enc.attn_qkv"),
            use_attention=c.use_attention,
        )

    @property
    def koop(self) -> KoopmanOperator:
        c = self.config
        tensors = {k[5:]: v for k, v in self.params.items() if k.startswith("koop.")}
        if c.variant is Variant.UNCONSTRAINED:
            return KoopmanOperator(c.variant, c.d_model, K=tensors["K"])
        spec = ops.SpectralParams(
            rho_max=c.rho_max,
            rho_min=c.rho_min,
            **{k: tensors[k] for k in ops.SPECTRAL_KEYS if k in tensors},
        )
        return KoopmanOperator(c.variant, c.d_model, U=tensors["U"], V=tensors["V"], spec=spec)

    @property
    def decoder(self) -> LinearDecoder:
        return LinearDecoder(self.params["dec.W"], self.params["dec.b"], self.config.H, self.config.d)

    def with_koop(self, op: KoopmanOperator) -> "Forecaster":
        params = dict(self.params)
        params.update({f"koop.{k}": v for k, v in ops.operator_params(op).items()})
        return self.with_params(params)

    def retract(self) -> "Forecaster":
        if not self.koop.is_odo:
            return self
        return self.with_koop(ops.retract(self.koop))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return forward(self, X)[0]

    def transition_matrix(self) -> np.ndarray:
        return ops.materialize(self.koop)


def forward(f: Forecaster, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns ``(Y_hat, z, z_next)``; batched inputs give batched outputs."""
    Xb, single = _batched(X, 3)
    c = f.config
    if Xb.shape[1:] != (c.P, c.d):
        raise ShapeError(f"expected windows of shape ({c.P}, {c.d}), got {Xb.shape[1:]}")
    z, _ = encode_with_cache(f.encoder, Xb)
    z_next = ops.apply(f.koop, z)
    Y_hat = decode(f.decoder, z_next)
    if single:
        return Y_hat[0], z[0], z_next[0]
    return Y_hat, z, z_next


def lyapunov_margin(z: np.ndarray, z_next: np.ndarray, P_metric: np.ndarray) -> np.ndarray:
    """Per-sample energy growth ``z_next^T P z_next - z^T P z``."""
    z = np.atleast_2d(z)
    z_next = np.atleast_2d(z_next)
    return np.einsum("bi,ij,bj->b", z_next, P_metric, z_next) - np.einsum("bi,ij,bj->b", z, P_metric, z)


def loss_terms(Y_hat, Y, z, z_next, cfg: LossConfig) -> tuple[float, float, float]:
    """``(total, mse, hinge)`` averaged over the batch."""
    Y_hat = np.asarray(Y_hat, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y_hat.shape != Y.shape:
        raise ShapeError(f"forecast shape {Y_hat.shape} != target shape {Y.shape}")
    mse = float(np.mean((Y_hat - Y) ** 2))
    margin = lyapunov_margin(z, z_next, cfg.metric(np.shape(z)[-1]))
    hinge = float(np.mean(np.maximum(margin, 0.0)))
    return mse + cfg.lambda_lyap * hinge, mse, hinge


def loss(Y_hat, Y, z, z_next, cfg: LossConfig) -> float:
    return loss_terms(Y_hat, Y, z, z_next, cfg)[0]


_META_FIELDS = ("P", "H", "d", "d_model", "variant", "n_patches", "use_attention", "rank", "rho_max", "rho_min", "mlp_hidden")


def forecaster_to_text(f: Forecaster) -> str:
    meta: dict[str, object] = {"kind": "forecaster"}
    for name in _META_FIELDS:
        value = getattr(f.config, name)
        meta[name] = value.value if isinstance(value, Variant) else repr(value) if isinstance(value, float) else value
    return textio.dumps(meta, f.params)


def forecaster_from_text(text: str) -> Forecaster:
    meta, tensors = textio.loads(text)
    if meta.get("kind") != "forecaster":
        raise textio.FormatError("not a forecaster checkpoint")
    config = ForecasterConfig(
        P=int(meta["P"]),
        H=int(meta["H"]),
        d=int(meta["d"]),
        d_model=int(meta["d_model"]),
        variant=Variant(meta["variant"]),
        n_patches=int(meta["n_patches"]),
        use_attention=meta["use_attention"] == "True",
        rank=int(meta["rank"]),
        rho_max=float(meta["rho_max"]),
        rho_min=float(meta["rho_min"]),
        mlp_hidden=int(meta["mlp_hidden"]),
    )
    return Forecaster(config, tensors)
