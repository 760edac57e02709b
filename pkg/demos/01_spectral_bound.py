"""Spectral control of a Koopman propagator.

Walk through how a propagator K = U diag(sigma) V^T is assembled, why its
largest singular value can never reach rho_max, and what that means for
repeated application.

Run with ``python3 demos/01_spectral_bound.py``.
"""

# %%
import numpy as np

from koopspec import operators as ops
from koopspec.diagnostics import contraction_envelope, lyapunov_certificate_check

rng = np.random.default_rng(0)
np.set_printoptions(precision=4, suppress=True)

# %% [markdown]
# A freshly initialised operator: orthonormal factors and a squashed spectrum.

# %%
op = ops.init_operator("per_mode", d=6, rng=rng)
K = ops.materialize(op)
print("spectrum        :", np.sort(ops.spectrum(op))[::-1])
print("singular values :", np.linalg.svd(K, compute_uv=False))
print("U^T U - I (max) :", np.abs(op.U.T @ op.U - np.eye(6)).max())

# %% [markdown]
# Push the raw spectral parameters far out. The squash keeps every value
# strictly inside (rho_min, rho_max) -- up to the float64 limit, where the
# logistic rounds to exactly 1 once its argument passes ~36.

# %%
for s in (0.0, 5.0, 20.0, 35.0, 40.0):
    sigma = ops.squash(np.array([s]), 0.0, 0.99)[0]
    print(f"S = {s:5.1f}  sigma = {float(sigma)!r:<20} gap to 0.99 = {0.99 - sigma:.3e}")

# %% [markdown]
# Contraction: ||K^n z|| never exceeds 0.99^n ||z||.

# %%
env = contraction_envelope(op, rng.standard_normal(6), n_max=40)
for n, norm, bound in env[::10]:
    print(f"n = {n:2d}  ||K^n z|| = {norm:.4e}  bound = {bound:.4e}")

# %% [markdown]
# The same fact as a Lyapunov certificate with P = I, next to a matrix that
# fails it.

# %%
print("ODO operator :", lyapunov_certificate_check(K, np.eye(6), tol=0.0))
print("1.1 * I      :", lyapunov_certificate_check(1.1 * np.eye(2), np.eye(2), tol=0.0))

# %% [markdown]
# Any matrix with ||M||_2 < rho_max is reachable: initialise from its SVD.

# %%
M = rng.standard_normal((6, 6))
M *= 0.89 / np.linalg.norm(M, 2)
print("reconstruction error:", np.linalg.norm(ops.materialize(ops.from_matrix(M)) - M))
