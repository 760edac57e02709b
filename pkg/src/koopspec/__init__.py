"""Learnable Koopman propagators with spectral control for time-series forecasting."""

from .baselines import (
    DLinearModel,
    SSMModel,
    augment_unstable_ssm,
    dlinear_forward,
    persistence_forecast,
    ssm_forward,
)
from .data import (
    Series,
    WindowDataset,
    build_datasets,
    chrono_split,
    load_csv,
    make_windows,
    normalize,
    synthesize_series,
)
from .diagnostics import (
    SpectralSnapshot,
    contraction_envelope,
    export_spectra,
    lyapunov_certificate_check,
    snapshot,
)
from .forecaster import (
    Forecaster,
    ForecasterConfig,
    LossConfig,
    decode,
    encode,
    forward,
    loss,
)
from .grad import finite_diff_check, loss_and_grad
from .operators import (
    KoopmanOperator,
    SpectralParams,
    Squash,
    Variant,
    apply,
    build_spectrum,
    init_operator,
    inverse_apply,
    materialize,
    operator_spectrum,
    retract,
)
from .training import AdamState, RunHistory, TrainConfig, adam_step, evaluate, train

__version__ = "0.1.0"
