"""Output error cannot certify stability.

Pad a linear state-space model with a decoupled block gamma * I that the
input never reaches and the readout never sees. Forecasts are bit-for-bit
unchanged while the transition matrix becomes unstable -- a reminder that
matching data says nothing about the spectrum unless it is controlled.

Run with ``python3 demos/03_unstable_ssm.py``.
"""

# %%
import numpy as np

from koopspec.baselines import SSMModel, augment_unstable_ssm, ssm_forward
from koopspec.diagnostics import lyapunov_certificate_check
from koopspec.linalg import spectral_radius_estimate

rng = np.random.default_rng(0)
base = SSMModel.init(P=16, H=4, d=3, rng=rng, d_h=8)
aug = augment_unstable_ssm(base, gamma=2.0, extra_dim=2)

# %%
X = rng.standard_normal((50, 16, 3))
gap = np.abs(ssm_forward(aug, X) - ssm_forward(base, X)).max()
print(f"max output discrepancy over 50 windows: {float(gap)!r}")
print(f"spectral radius, original : {spectral_radius_estimate(base.A):.4f}")
print(f"spectral radius, augmented: {spectral_radius_estimate(aug.A):.4f}")

# %% [markdown]
# The Lyapunov check with P = I exposes the hidden growth immediately.

# %%
holds, max_eig = lyapunov_certificate_check(aug.A, np.eye(aug.d_h), tol=0.0)
print(f"certificate holds: {holds}, largest eigenvalue of A^T A - I: {max_eig:.4f}")
