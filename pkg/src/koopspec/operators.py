"""Learnable Koopman propagators.

Every structured variant has the orthogonal-diagonal-orthogonal form
``K = U diag(sigma) V^T`` where ``U, V`` (d x m) have orthonormal columns and
the spectral vector ``sigma`` is produced by squashing raw parameters ``S``
into ``(rho_min, rho_max)``::

    sigma_i = rho_min + (rho_max - rho_min) * logistic(a_i)

with the pre-activation ``a_i`` depending on the variant:

==============  =====================================
constrained     ``S_i``
scalar          ``alpha * S_i + beta`` (shared gate)
per_mode        ``alpha_i * S_i + beta_i``
mlp             ``w2 . tanh(w1 * S_i + b1) + b2``
low_rank        ``S_i`` with ``m = r < d``
==============  =====================================

The ``unconstrained`` variant is a free dense ``d x d`` matrix with no
spectral guarantee.

Because the logistic map lands in ``(0, 1)`` the spectrum is strictly
positive; negative singular coefficients are not representable. In float64
the strict upper bound survives for pre-activations up to roughly 36 in
magnitude, beyond which the logistic saturates to exactly 0 or 1.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import textio
from .linalg import LinAlgError, qr_orthonormalize, singular_values


class Variant(str, Enum):
    CONSTRAINED = "constrained"
    SCALAR = "scalar"
    PER_MODE = "per_mode"
    MLP = "mlp"
    LOW_RANK = "low_rank"
    UNCONSTRAINED = "unconstrained"


class Squash(str, Enum):
    CONSTRAINED = "constrained"
    SCALAR = "scalar"
    PER_MODE = "per_mode"
    MLP = "mlp"


ODO_VARIANTS = (
    Variant.CONSTRAINED,
    Variant.SCALAR,
    Variant.PER_MODE,
    Variant.MLP,
    Variant.LOW_RANK,
)

_SQUASH_OF = {
    Variant.CONSTRAINED: Squash.CONSTRAINED,
    Variant.SCALAR: Squash.SCALAR,
    Variant.PER_MODE: Squash.PER_MODE,
    Variant.MLP: Squash.MLP,
    Variant.LOW_RANK: Squash.CONSTRAINED,
}

SPECTRAL_KEYS = ("S", "alpha", "beta", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2")


class OperatorError(ValueError):
    """Raised when an operation is not defined for an operator variant."""


@dataclass(frozen=True)
class SpectralParams:
    """Raw spectral parameters; gate and MLP fields are ``None`` when unused."""

    S: np.ndarray
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    mlp_w1: np.ndarray | None = None  # (h, 1)
    mlp_b1: np.ndarray | None = None  # (h,)
    mlp_w2: np.ndarray | None = None  # (1, h)
    mlp_b2: np.ndarray | None = None  # (1,)
    rho_max: float = 0.99
    rho_min: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rho_min < self.rho_max < 1.0:
            raise OperatorError(
                f"need 0 <= rho_min < rho_max < 1, got {self.rho_min}, {self.rho_max}"
            )

    @property
    def m(self) -> int:
        return self.S.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in SPECTRAL_KEYS if getattr(self, k) is not None}


@dataclass(frozen=True)
class KoopmanOperator:
    variant: Variant
    d: int
    U: np.ndarray | None = None
    V: np.ndarray | None = None
    spec: SpectralParams | None = None
    K: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.d if self.spec is None else self.spec.m

    @property
    def is_odo(self) -> bool:
        return self.variant in ODO_VARIANTS

    @property
    def squash(self) -> Squash:
        return _SQUASH_OF[self.variant]


def logistic(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def squash(a: np.ndarray, rho_min: float, rho_max: float) -> np.ndarray:
    """Map pre-activations into ``(rho_min, rho_max)``.

    Evaluated from whichever end of the interval is closer so that values
    near ``rho_max`` keep their distance to the bound.
    """
    a = np.asarray(a, dtype=np.float64)
    width = rho_max - rho_min
    return np.where(
        a >= 0,
        rho_max - width * logistic(-a),
        rho_min + width * logistic(a),
    )


def preactivation(spec: SpectralParams, kind: Squash) -> tuple[np.ndarray, np.ndarray | None]:
    """Pre-activations ``a`` and, for the MLP map, the hidden activations (m, h)."""
    S = spec.S
    if kind is Squash.CONSTRAINED:
        return S.copy(), None
    if kind in (Squash.SCALAR, Squash.PER_MODE):
        if spec.alpha is None or spec.beta is None:
            raise OperatorError(f"{kind.value} squash needs alpha and beta")
        want = 1 if kind is Squash.SCALAR else S.shape[0]
        if spec.alpha.shape != (want,) or spec.beta.shape != (want,):
            raise OperatorError(
                f"{kind.value} gates must have shape ({want},), got "
                f"{spec.alpha.shape} and {spec.beta.shape}"
            )
        return spec.alpha * S + spec.beta, None
    if kind is Squash.MLP:
        if spec.mlp_w1 is None or spec.mlp_b1 is None or spec.mlp_w2 is None or spec.mlp_b2 is None:
            raise OperatorError("mlp squash needs mlp_w1, mlp_b1, mlp_w2, mlp_b2")
        h = spec.mlp_w1.shape[0]
        if spec.mlp_w1.shape != (h, 1) or spec.mlp_b1.shape != (h,) or spec.mlp_w2.shape != (1, h):
            raise OperatorError("inconsistent MLP weight shapes")
        hidden = np.tanh(S[:, None] * spec.mlp_w1[:, 0][None, :] + spec.mlp_b1[None, :])
        return hidden @ spec.mlp_w2[0] + spec.mlp_b2[0], hidden
    raise OperatorError(f"unknown squash {kind!r}")


def build_spectrum(spec: SpectralParams, kind: Squash | str) -> np.ndarray:
    a, _ = preactivation(spec, Squash(kind))
    return squash(a, spec.rho_min, spec.rho_max)


def spectrum(op: KoopmanOperator) -> np.ndarray:
    """Spectral coefficients of an ODO operator, in parameter order."""
    if not op.is_odo:
        raise OperatorError("the unconstrained operator has no spectral parameters")
    return build_spectrum(op.spec, op.squash)


def materialize(op: KoopmanOperator) -> np.ndarray:
    if not op.is_odo:
        return op.K.copy()
    return (op.U * spectrum(op)) @ op.V.T


def apply(op: KoopmanOperator, z: np.ndarray) -> np.ndarray:
    """``K z`` for a single vector (d,) or a batch of row vectors (B, d).

    ODO variants cost O(d m) per vector; K is never formed.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != op.d:
        raise OperatorError(f"state has dimension {z.shape[-1]}, operator expects {op.d}")
    if not op.is_odo:
        return z @ op.K.T
    return ((z @ op.V) * spectrum(op)) @ op.U.T


def inverse_apply(op: KoopmanOperator, z: np.ndarray) -> np.ndarray:
    """``K^{-1} z = V diag(1/sigma) U^T z``.

    Only defined for full-rank ODO operators with a positive lower spectral
    bound; otherwise invertibility is not guaranteed and this raises.
    """
    if not op.is_odo or op.m != op.d:
        raise OperatorError(
            f"invertibility not guaranteed for the {op.variant.value} operator"
        )
    if op.spec.rho_min <= 0.0:
        raise OperatorError("invertibility not guaranteed: rho_min must be > 0")
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != op.d:
        raise OperatorError(f"state has dimension {z.shape[-1]}, operator expects {op.d}")
    return ((z @ op.U) / spectrum(op)) @ op.V.T


def operator_spectrum(op: KoopmanOperator) -> np.ndarray:
    """Singular values, descending. ODO variants read them off the spectrum."""
    if op.is_odo:
        return np.sort(np.abs(spectrum(op)))[::-1]
    return singular_values(op.K)


def retract(op: KoopmanOperator) -> KoopmanOperator:
    """Project the orthonormal factors back onto the Stiefel manifold via QR."""
    if not op.is_odo:
        raise OperatorError("retraction applies to ODO operators only")
    return dataclasses.replace(op, U=qr_orthonormalize(op.U), V=qr_orthonormalize(op.V))


def orthogonality_error(op: KoopmanOperator) -> float:
    """max of ||U^T U - I||_F and ||V^T V - I||_F (0 for dense operators)."""
    if not op.is_odo:
        return 0.0
    eye = np.eye(op.m)
    return float(max(np.linalg.norm(op.U.T @ op.U - eye), np.linalg.norm(op.V.T @ op.V - eye)))


def random_stiefel(d: int, m: int, rng: np.random.Generator) -> np.ndarray:
    return qr_orthonormalize(rng.standard_normal((d, m)))


def init_operator(
    variant: Variant | str,
    d: int,
    rng: np.random.Generator,
    *,
    rank: int = 16,
    rho_max: float = 0.99,
    rho_min: float = 0.0,
    mlp_hidden: int = 16,
) -> KoopmanOperator:
    """Fresh operator with the default initialisation.

    ``S ~ N(0, 0.1^2)``, gates ``alpha = 1``, ``beta = 0``, factors from QR of
    Gaussian matrices, MLP weights Gaussian with fan-in scaling, dense ``K``
    Gaussian scaled by ``0.9 / sqrt(d)``.
    """
    variant = Variant(variant)
    if variant is Variant.UNCONSTRAINED:
        return KoopmanOperator(variant, d, K=rng.standard_normal((d, d)) * 0.9 / np.sqrt(d))
    m = d
    if variant is Variant.LOW_RANK:
        if not 1 <= rank < d:
            raise OperatorError(f"low-rank operator needs 1 <= r < d, got r={rank}, d={d}")
        m = rank
    U = random_stiefel(d, m, rng)
    V = random_stiefel(d, m, rng)
    S = rng.normal(0.0, 0.1, size=m)
    extra: dict[str, np.ndarray] = {}
    if variant is Variant.SCALAR:
        extra = {"alpha": np.ones(1), "beta": np.zeros(1)}
    elif variant is Variant.PER_MODE:
        extra = {"alpha": np.ones(m), "beta": np.zeros(m)}
    elif variant is Variant.MLP:
        extra = {
            "mlp_w1": rng.standard_normal((mlp_hidden, 1)),
            "mlp_b1": rng.standard_normal(mlp_hidden) * 0.1,
            "mlp_w2": rng.standard_normal((1, mlp_hidden)) / np.sqrt(mlp_hidden),
            "mlp_b2": np.zeros(1),
        }
    spec = SpectralParams(S=S, rho_max=rho_max, rho_min=rho_min, **extra)
    return KoopmanOperator(variant, d, U=U, V=V, spec=spec)


def _logit(p: np.ndarray) -> np.ndarray:
    return np.log(p) - np.log1p(-p)


def from_matrix(
    M: np.ndarray,
    *,
    rho_max: float = 0.99,
    rho_min: float = 0.0,
    rank: int | None = None,
) -> KoopmanOperator:
    """ODO operator reproducing ``M`` (or its rank-``rank`` SVD truncation).

    Requires every retained singular value to lie strictly inside
    ``(rho_min, rho_max)``. With ``rank`` set the result is a low-rank
    operator holding the leading singular triplets.
    """
    M = np.asarray(M, dtype=np.float64)
    d = M.shape[0]
    if M.shape != (d, d):
        raise OperatorError(f"expected a square matrix, got {M.shape}")
    Uf, s, Vt = np.linalg.svd(M)
    m = d if rank is None else rank
    s = s[:m]
    if np.any(s <= rho_min) or np.any(s >= rho_max):
        raise OperatorError("singular values fall outside the admissible interval")
    S = _logit((s - rho_min) / (rho_max - rho_min))
    spec = SpectralParams(S=S, rho_max=rho_max, rho_min=rho_min)
    variant = Variant.CONSTRAINED if rank is None else Variant.LOW_RANK
    return KoopmanOperator(variant, d, U=Uf[:, :m].copy(), V=Vt[:m].T.copy(), spec=spec)


def operator_params(op: KoopmanOperator) -> dict[str, np.ndarray]:
    """Trainable tensors of ``op`` keyed by name (no prefix)."""
    if not op.is_odo:
        return {"K": op.K}
    return {**op.spec.arrays(), "U": op.U, "V": op.V}


def with_params(op: KoopmanOperator, params: dict[str, np.ndarray]) -> KoopmanOperator:
    """Copy of ``op`` with tensors replaced by ``params`` (same keys as operator_params)."""
    if not op.is_odo:
        return dataclasses.replace(op, K=params["K"])
    spec_updates = {k: params[k] for k in SPECTRAL_KEYS if k in params}
    return dataclasses.replace(
        op,
        U=params.get("U", op.U),
        V=params.get("V", op.V),
        spec=dataclasses.replace(op.spec, **spec_updates),
    )


def operator_to_text(op: KoopmanOperator) -> str:
    meta: dict[str, object] = {"kind": "koopman", "variant": op.variant.value, "d": op.d}
    if op.spec is not None:
        meta["rho_max"] = repr(op.spec.rho_max)
        meta["rho_min"] = repr(op.spec.rho_min)
    return textio.dumps(meta, operator_params(op))


def operator_from_text(text: str) -> KoopmanOperator:
    meta, tensors = textio.loads(text)
    return operator_from_tensors(meta, tensors)


def operator_from_tensors(meta: dict[str, str], tensors: dict[str, np.ndarray], prefix: str = "") -> KoopmanOperator:
    variant = Variant(meta["variant"])
    d = int(meta["d"])
    get = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
    if variant is Variant.UNCONSTRAINED:
        return KoopmanOperator(variant, d, K=get["K"])
    spec = SpectralParams(
        rho_max=float(meta["rho_max"]),
        rho_min=float(meta["rho_min"]),
        **{k: get[k] for k in SPECTRAL_KEYS if k in get},
    )
    return KoopmanOperator(variant, d, U=get["U"], V=get["V"], spec=spec)


__all__ = [
    "KoopmanOperator",
    "LinAlgError",
    "ODO_VARIANTS",
    "OperatorError",
    "SpectralParams",
    "Squash",
    "Variant",
    "apply",
    "build_spectrum",
    "from_matrix",
    "init_operator",
    "inverse_apply",
    "materialize",
    "operator_from_text",
    "operator_params",
    "operator_spectrum",
    "operator_to_text",
    "retract",
    "spectrum",
    "with_params",
]
