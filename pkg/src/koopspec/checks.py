"""Executable stability properties of the propagator family.

Each check draws random operators, measures the relevant quantity and
returns a CheckResult; ``run_all`` runs the whole suite with default sizes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .baselines import SSMModel, augment_unstable_ssm, ssm_forward
from .diagnostics import contraction_envelope, lyapunov_certificate_check
from .forecaster import Forecaster, ForecasterConfig
from .grad import finite_diff_errors
from .linalg import singular_values, spectral_radius_estimate
from .operators import KoopmanOperator, SpectralParams, Variant


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def random_odo(variant: Variant | str, d: int, rng: np.random.Generator, *, rank: int = 4,
               rho_max: float = 0.99, rho_min: float = 0.0, scale: float = 3.0, mlp_hidden: int = 16) -> KoopmanOperator:
    """Operator with every parameter drawn at random (wide spread, not the training init).

    Pre-activations stay far below the ~36 where float64 saturates the logistic.
    """
    variant = Variant(variant)
    m = rank if variant is Variant.LOW_RANK else d
    extra = {}
    if variant is Variant.SCALAR:
        extra = {"alpha": rng.normal(0, 1, 1), "beta": rng.normal(0, 1, 1)}
    elif variant is Variant.PER_MODE:
        extra = {"alpha": rng.normal(0, 1, m), "beta": rng.normal(0, 1, m)}
    elif variant is Variant.MLP:
        extra = {
            "mlp_w1": rng.normal(0, 1, (mlp_hidden, 1)),
            "mlp_b1": rng.normal(0, 1, mlp_hidden),
            "mlp_w2": rng.normal(0, 1, (1, mlp_hidden)),
            "mlp_b2": rng.normal(0, 1, 1),
        }
    spec = SpectralParams(S=rng.normal(0, scale, m), rho_max=rho_max, rho_min=rho_min, **extra)
    return KoopmanOperator(variant, d, U=ops.random_stiefel(d, m, rng), V=ops.random_stiefel(d, m, rng), spec=spec)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        return CheckResult(res.name, res.passed, res.value, res.detail, time.perf_counter() - t0)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_spectral_bound(n_draws: int = 1000, d: int = 8, rank: int = 3, seed: int = 0) -> CheckResult:
    """max singular value < rho_max and == max sigma (1e-10) for every ODO variant."""
    rng = np.random.default_rng(seed)
    worst_sv, worst_gap = 0.0, 0.0
    passed = True
    for variant in ops.ODO_VARIANTS:
        for _ in range(n_draws):
            op = random_odo(variant, d, rng, rank=rank)
            sv = singular_values(ops.materialize(op))
            sig_max = float(np.max(ops.spectrum(op)))
            gap = abs(sv[0] - sig_max)
            worst_sv, worst_gap = max(worst_sv, sv[0]), max(worst_gap, gap)
            passed &= bool(sv[0] < op.spec.rho_max and sig_max < op.spec.rho_max and gap <= 1e-10)
    return CheckResult("spectral bound", passed, worst_sv,
                       f"max sv {worst_sv:.15f} < 0.99, |sv_max - max sigma| <= {worst_gap:.1e}")


@_timed
def check_contraction(n_pairs: int = 100, n_max: int = 100, d: int = 8, seed: int = 1) -> CheckResult:
    """||K^n z0|| <= rho_max^n ||z0|| (1 + 1e-12) for n <= n_max."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    passed = True
    for i in range(n_pairs):
        op = random_odo(ops.ODO_VARIANTS[i % len(ops.ODO_VARIANTS)], d, rng)
        try:
            env = contraction_envelope(op, rng.standard_normal(d), n_max)
        except AssertionError:
            passed = False
            continue
        worst = max(worst, max(norm / bound for _, norm, bound in env if bound > 0))
    return CheckResult("contraction", passed, worst, f"max ||K^n z0|| / (0.99^n ||z0||) = {worst:.6f}")


@_timed
def check_invertibility(n_cases: int = 100, d: int = 8, rho_min: float = 0.01, seed: int = 2) -> CheckResult:
    """inverse_apply(apply(z)) == z within 1e-8 relative; refusal when rho_min = 0."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_cases):
        variant = (Variant.CONSTRAINED, Variant.SCALAR, Variant.PER_MODE, Variant.MLP)[i % 4]
        op = random_odo(variant, d, rng, rho_min=rho_min)
        z = rng.standard_normal(d)
        back = ops.inverse_apply(op, ops.apply(op, z))
        worst = max(worst, np.linalg.norm(back - z) / np.linalg.norm(z))
    refused = True
    try:
        ops.inverse_apply(random_odo(Variant.CONSTRAINED, d, rng), np.ones(d))
        refused = False
    except ops.OperatorError:
        pass
    return CheckResult("invertibility", bool(worst < 1e-8 and refused), worst,
                       f"round-trip error {worst:.2e}; rho_min=0 refused: {refused}")


@_timed
def check_low_rank(d: int = 32, r: int = 16, n_ops: int = 20, ey_d: int = 8, ey_r: int = 2,
                   n_targets: int = 20, n_random: int = 200, seed: int = 3) -> CheckResult:
    """Rank <= r, and SVD truncation beats random admissible rank-r operators."""
    rng = np.random.default_rng(seed)
    worst_tail = 0.0
    for _ in range(n_ops):
        sv = singular_values(ops.materialize(random_odo(Variant.LOW_RANK, d, rng, rank=r)))
        worst_tail = max(worst_tail, sv[r])
    ey_ok = True
    for _ in range(n_targets):
        M = rng.standard_normal((ey_d, ey_d))
        M *= 0.9 * 0.99 / singular_values(M)[0]
        best = ops.materialize(ops.from_matrix(M, rank=ey_r))
        err = np.linalg.norm(M - best)
        for _ in range(n_random):
            other = ops.materialize(random_odo(Variant.LOW_RANK, ey_d, rng, rank=ey_r))
            ey_ok &= bool(err <= np.linalg.norm(M - other))
    passed = worst_tail < 1e-10 and ey_ok
    return CheckResult("low-rank structure", passed, worst_tail,
                       f"sigma_(r+1) <= {worst_tail:.1e}; truncation optimal on all targets: {ey_ok}")


@_timed
def check_surjectivity(n: int = 50, d: int = 8, norm: float = 0.89, seed: int = 4) -> CheckResult:
    """Matrices with ||M||_2 = norm are reproduced by SVD-initialised ODO operators."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        M = rng.standard_normal((d, d))
        M *= norm / singular_values(M)[0]
        worst = max(worst, np.linalg.norm(ops.materialize(ops.from_matrix(M)) - M))
    return CheckResult("surjectivity", worst < 1e-9, worst, f"max Frobenius error {worst:.2e}")


@_timed
def check_lyapunov(n_ops: int = 200, d: int = 8, seed: int = 5) -> CheckResult:
    """Constrained operators certify with P = I, tol = 0; 1.1 I fails with max_eig 0.21."""
    rng = np.random.default_rng(seed)
    all_hold = True
    for i in range(n_ops):
        op = random_odo(ops.ODO_VARIANTS[i % len(ops.ODO_VARIANTS)], d, rng)
        holds, _ = lyapunov_certificate_check(ops.materialize(op), np.eye(d), tol=0.0)
        all_hold &= holds
    holds_bad, eig_bad = lyapunov_certificate_check(1.1 * np.eye(2), np.eye(2), tol=0.0)
    passed = all_hold and not holds_bad and abs(eig_bad - 0.21) <= 1e-12
    return CheckResult("lyapunov certificate", passed, eig_bad,
                       f"ODO certified: {all_hold}; 1.1*I max_eig = {eig_bad!r}")


@_timed
def check_unstable_augmentation(gamma: float = 2.0, extra_dim: int = 2, n_windows: int = 50,
                                P: int = 16, H: int = 4, d: int = 3, seed: int = 6) -> CheckResult:
    """Augmented SSM: identical outputs, spectral radius estimate >= 1.9."""
    rng = np.random.default_rng(seed)
    base = SSMModel.init(P, H, d, rng, d_h=8)
    aug = augment_unstable_ssm(base, gamma, extra_dim)
    X = rng.standard_normal((n_windows, P, d))
    gap = float(np.max(np.abs(ssm_forward(aug, X) - ssm_forward(base, X))))
    radius = spectral_radius_estimate(aug.A, 64)
    return CheckResult("unstable augmentation", gap == 0.0 and radius >= 1.9, gap,
                       f"output discrepancy {gap!r}, radius estimate {radius:.4f}")


@_timed
def check_gradients(P: int = 16, H: int = 4, d: int = 4, d_model: int = 8, batch: int = 4,
                    eps: float = 1e-5, seed: int = 17) -> CheckResult:
    """Central differences agree with the analytic gradient (rel. err < 1e-4)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((batch, P, d))
    Y = rng.standard_normal((batch, H, d))
    worst, where = 0.0, ""
    for variant in Variant:
        cfg = ForecasterConfig(P, H, d, d_model=d_model, variant=variant, rank=d_model // 2)
        errs = finite_diff_errors(Forecaster.init(cfg, rng), (X, Y), eps)
        key = max(errs, key=errs.get)
        if errs[key] >= worst:
            worst, where = errs[key], f"{variant.value}/{key}"
    return CheckResult("gradient check", worst < 1e-4, worst, f"max relative error {worst:.2e} at {where}")


ALL_CHECKS = (
    check_spectral_bound,
    check_contraction,
    check_invertibility,
    check_low_rank,
    check_surjectivity,
    check_lyapunov,
    check_unstable_augmentation,
    check_gradients,
)


def run_all() -> list[CheckResult]:
    return [check() for check in ALL_CHECKS]
