"""Spectral logging and stability certificates."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .linalg import singular_values, spectral_radius_estimate, sym_max_eig
from .operators import KoopmanOperator


class InvariantViolation(AssertionError):
    """A property that holds by construction was found broken."""


@dataclass(frozen=True)
class SpectralSnapshot:
    step: int
    variant: str
    singular_values: np.ndarray  # descending
    radius: float

    @property
    def max_sv(self) -> float:
        return float(self.singular_values[0]) if self.singular_values.size else 0.0


def snapshot(op_or_A: KoopmanOperator | np.ndarray, step: int, variant: str | None = None) -> SpectralSnapshot:
    """Singular values plus a spectral-radius estimate.

    ODO operators report their spectrum directly and use its maximum as the
    radius bound; dense matrices go through an SVD and the Gelfand estimate.
    """
    if isinstance(op_or_A, KoopmanOperator):
        sv = ops.operator_spectrum(op_or_A)
        tag = variant or op_or_A.variant.value
        radius = float(sv[0]) if op_or_A.is_odo else spectral_radius_estimate(op_or_A.K)
    else:
        A = np.asarray(op_or_A, dtype=np.float64)
        sv = singular_values(A)
        tag = variant or "matrix"
        radius = spectral_radius_estimate(A)
    return SpectralSnapshot(step, tag, sv, radius)


def model_snapshot(model, step: int, variant: str) -> SpectralSnapshot | None:
    """Snapshot of a model's linear transition, or None if it has none."""
    koop = getattr(model, "koop", None)
    if koop is not None:
        return snapshot(koop, step, variant)
    if hasattr(model, "transition_matrix"):
        return snapshot(model.transition_matrix(), step, variant)
    return None


def contraction_envelope(op: KoopmanOperator, z0: np.ndarray, n_max: int, slack: float = 1e-12) -> list[tuple[int, float, float]]:
    """``(n, ||K^n z0||, rho_max^n ||z0||)`` for ``n = 0..n_max``.

    Raises InvariantViolation if any norm exceeds its bound by more than
    ``slack`` (relative).
    """
    if not op.is_odo:
        raise ops.OperatorError("contraction envelope needs an ODO operator")
    z = np.asarray(z0, dtype=np.float64)
    norm0 = float(np.linalg.norm(z))
    rho = op.spec.rho_max
    out = []
    for n in range(n_max + 1):
        if n:
            z = ops.apply(op, z)
        norm = float(np.linalg.norm(z))
        bound = rho**n * norm0
        if norm > bound * (1.0 + slack):
            raise InvariantViolation(f"step {n}: ||K^n z0|| = {norm!r} exceeds {bound!r}")
        out.append((n, norm, bound))
    return out


def lyapunov_certificate_check(K: np.ndarray, P: np.ndarray, tol: float = 1e-10) -> tuple[bool, float]:
    """Largest eigenvalue of ``K^T P K - P`` and whether it is ``<= tol``."""
    K = np.asarray(K, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if np.linalg.norm(P - P.T) >= 1e-10:
        raise ValueError("P must be symmetric")
    M = K.T @ P @ K - P
    max_eig = sym_max_eig(0.5 * (M + M.T))
    return max_eig <= tol, max_eig


@dataclass(frozen=True)
class SpectrumRecord:
    variant: str
    backbone: str
    P: int
    H: int
    singular_value: float


SPECTRA_HEADER = ("variant", "backbone", "P", "H", "singular_value")


def export_spectra(runs) -> list[SpectrumRecord]:
    """Pool final-snapshot singular values of each run.

    ``runs`` is an iterable of ``(variant, backbone, P, H, history)`` with
    ``history`` a RunHistory; runs without snapshots contribute nothing.
    """
    records = []
    for variant, backbone, P, H, history in runs:
        if not history.snapshots:
            continue
        final = history.snapshots[-1]
        records.extend(SpectrumRecord(variant, backbone, P, H, float(s)) for s in final.singular_values)
    return records


def spectra_to_text(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SPECTRA_HEADER)
    for r in records:
        w.writerow([r.variant, r.backbone, r.P, r.H, repr(r.singular_value)])
    return buf.getvalue()


def spectra_from_text(text: str) -> list[SpectrumRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != SPECTRA_HEADER:
        raise ValueError("not a spectra file")
    return [SpectrumRecord(v, b, int(P), int(H), float(s)) for v, b, P, H, s in rows[1:]]
