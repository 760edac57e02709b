"""Benchmark grid: configuration, per-run training and on-disk artifacts.

Config files are flat ``key = value`` text; ``#`` starts a comment. Lists are
comma-separated. Keys (default in brackets):

==================  =================================================
data                CSV path or ``synthetic:<kind>`` (required)
synth_T, synth_d    length/channels of synthetic data [4096, 4]
P, H                context lengths / horizons (required)
variant             models to run [all six Koopman variants, dlinear, ssm]
steps, batch_size   [2000, 32]
lr, lambda_lyap     [3e-4, 0.1]
seed                [0]
eval_every          loss-record interval [50]
spectral_log_every  snapshot interval [100]
rho_max, rho_min    [0.99, 0.0]
rank                low-rank r [16]
d_model             latent width [32]
n_patches           [4]
attention           encoder self-attention [true]
mlp_hidden          [16]
ssm_hidden          [32]
ssm_diagonal        [false]
split_ratio         [0.8]
out                 output directory [koopspec_out]
workers             parallel runs [1]
==================  =================================================

Output layout under ``out``::

    summary.csv                    one row per (variant, P, H) plus persistence
    spectra.csv                    pooled final singular values
    runs/<variant>_P<P>_H<H>/history.csv
    runs/<variant>_P<P>_H<H>/checkpoint.txt
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics
from .baselines import DLinearModel, PersistenceModel, SSMModel, baseline_to_text
from .data import Series, build_datasets, load_csv, synthesize_series
from .forecaster import Forecaster, ForecasterConfig, forecaster_to_text
from .operators import ODO_VARIANTS, Variant, orthogonality_error
from .training import RunHistory, TrainConfig, evaluate, history_to_text, train

KOOPMAN_MODELS = tuple(v.value for v in Variant)
ALL_MODELS = KOOPMAN_MODELS + ("dlinear", "ssm")


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _variant_list(text: str) -> tuple[str, ...]:
    names = tuple(x.strip() for x in text.split(",") if x.strip())
    for name in names:
        if name not in ALL_MODELS:
            raise ConfigError(f"unknown variant {name!r} (choose from {', '.join(ALL_MODELS)})")
    return names


# key -> (parser, default); default None marks a required key
KEYS: dict[str, tuple] = {
    "data": (str, None),
    "synth_T": (int, 4096),
    "synth_d": (int, 4),
    "P": (_int_list, None),
    "H": (_int_list, None),
    "variant": (_variant_list, ALL_MODELS),
    "steps": (int, 2000),
    "batch_size": (int, 32),
    "lr": (float, 3e-4),
    "lambda_lyap": (float, 0.1),
    "seed": (int, 0),
    "eval_every": (int, 50),
    "spectral_log_every": (int, 100),
    "rho_max": (float, 0.99),
    "rho_min": (float, 0.0),
    "rank": (int, 16),
    "d_model": (int, 32),
    "n_patches": (int, 4),
    "attention": (_bool, True),
    "mlp_hidden": (int, 16),
    "ssm_hidden": (int, 32),
    "ssm_diagonal": (_bool, False),
    "split_ratio": (float, 0.8),
    "out": (str, "koopspec_out"),
    "workers": (int, 1),
}


@dataclass(frozen=True)
class BenchmarkConfig:
    data: str
    P: tuple[int, ...]
    H: tuple[int, ...]
    variant: tuple[str, ...] = ALL_MODELS
    synth_T: int = 4096
    synth_d: int = 4
    steps: int = 2000
    batch_size: int = 32
    lr: float = 3e-4
    lambda_lyap: float = 0.1
    seed: int = 0
    eval_every: int = 50
    spectral_log_every: int = 100
    rho_max: float = 0.99
    rho_min: float = 0.0
    rank: int = 16
    d_model: int = 32
    n_patches: int = 4
    attention: bool = True
    mlp_hidden: int = 16
    ssm_hidden: int = 32
    ssm_diagonal: bool = False
    split_ratio: float = 0.8
    out: str = "koopspec_out"
    workers: int = 1

    def __post_init__(self):
        if not self.P or not self.H or not self.variant:
            raise ConfigError("P, H and variant lists must be nonempty")

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(
            steps=self.steps, batch_size=self.batch_size, lr=self.lr, lambda_lyap=self.lambda_lyap,
            seed=self.seed, eval_every=self.eval_every, spectral_log_every=self.spectral_log_every,
        )


def parse_value(key: str, text: str):
    if key not in KEYS:
        raise ConfigError(f"unknown key {key!r}")
    parser = KEYS[key][0]
    try:
        return parser(text.strip())
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None


def parse_config_text(text: str, overrides: dict[str, str] | None = None) -> BenchmarkConfig:
    values: dict[str, object] = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = (part.strip() for part in line.partition("="))
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} on lines {seen[key]} and {lineno}")
        seen[key] = lineno
        values[key] = parse_value(key, value)
    for key, value in (overrides or {}).items():
        values[key] = parse_value(key, value)
    for key, (_, default) in KEYS.items():
        if key not in values:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            values[key] = default
    return BenchmarkConfig(**values)


def parse_config(path: str | Path, overrides: dict[str, str] | None = None) -> BenchmarkConfig:
    return parse_config_text(Path(path).read_text(), overrides)


def load_series(cfg: BenchmarkConfig) -> Series:
    if cfg.data.startswith("synthetic:"):
        return synthesize_series(cfg.data.split(":", 1)[1], cfg.synth_T, cfg.synth_d, cfg.seed)
    return load_csv(cfg.data)


def run_seed(seed: int, variant: str, P: int, H: int) -> int:
    """Per-run seed; independent of which other runs share the grid."""
    ss = np.random.SeedSequence([seed, ALL_MODELS.index(variant), P, H])
    return int(ss.generate_state(1)[0])


def build_model(cfg: BenchmarkConfig, variant: str, P: int, H: int, d: int, rng: np.random.Generator):
    if variant == "dlinear":
        return DLinearModel.init(P, H, d, rng)
    if variant == "ssm":
        return SSMModel.init(P, H, d, rng, d_h=cfg.ssm_hidden, diagonal=cfg.ssm_diagonal)
    fc = ForecasterConfig(
        P=P, H=H, d=d, d_model=cfg.d_model, variant=Variant(variant), n_patches=cfg.n_patches,
        use_attention=cfg.attention, rank=cfg.rank, rho_max=cfg.rho_max, rho_min=cfg.rho_min,
        mlp_hidden=cfg.mlp_hidden,
    )
    return Forecaster.init(fc, rng)


def backbone_tag(cfg: BenchmarkConfig, variant: str) -> str:
    if variant in ("dlinear", "ssm"):
        return variant
    return "patch-attn" if cfg.attention else "patch"


@dataclass
class RunResult:
    variant: str
    P: int
    H: int
    history: RunHistory | None
    status: str
    train: dict[str, float] = field(default_factory=dict)
    test: dict[str, float] = field(default_factory=dict)
    max_sv_final: float = math.nan
    checkpoint: str = ""
    violations: tuple[str, ...] = ()


def run_single(cfg: BenchmarkConfig, variant: str, P: int, H: int, train_set, test_set) -> RunResult:
    seed = run_seed(cfg.seed, variant, P, H)
    rng = np.random.default_rng(seed)
    model = build_model(cfg, variant, P, H, train_set.X.shape[2], rng)
    tcfg = dataclasses.replace(cfg.train_config, seed=seed)
    model, history = train(model, train_set, tcfg, test_set, variant=variant)
    violations = list(invariant_violations(cfg, variant, model, history))
    status = history.status if not violations else "invariant_failed"
    max_sv = history.snapshots[-1].max_sv if history.snapshots else math.nan
    if isinstance(model, Forecaster):
        checkpoint = forecaster_to_text(model)
    else:
        checkpoint = baseline_to_text(model)
    return RunResult(
        variant, P, H, history, status,
        train=history.final.get("train", {}), test=history.final.get("test", {}),
        max_sv_final=max_sv, checkpoint=checkpoint, violations=tuple(violations),
    )


def invariant_violations(cfg: BenchmarkConfig, variant: str, model, history: RunHistory):
    if variant not in {v.value for v in ODO_VARIANTS}:
        return
    for snap in history.snapshots:
        if not snap.max_sv < cfg.rho_max:
            yield f"step {snap.step}: max singular value {snap.max_sv!r} >= {cfg.rho_max}"
    if history.status == "ok":
        err = orthogonality_error(model.koop)
        if err >= 1e-10:
            yield f"orthogonality drift {err!r}"


SUMMARY_HEADER = ("variant", "P", "H", "train_mse", "train_mae", "test_mse", "test_mae", "max_sv_final", "status")


def _f(x: float) -> str:
    return repr(float(x))


def summary_to_text(results: list[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for r in results:
        w.writerow([
            r.variant, r.P, r.H,
            _f(r.train.get("mse", math.nan)), _f(r.train.get("mae", math.nan)),
            _f(r.test.get("mse", math.nan)), _f(r.test.get("mae", math.nan)),
            _f(r.max_sv_final), r.status,
        ])
    return buf.getvalue()


def _run_job(args):
    return run_single(*args)


@dataclass
class BenchmarkResult:
    results: list[RunResult]
    summary: str
    spectra: str
    ok: bool


def run_benchmark(cfg: BenchmarkConfig, write: bool = True, workers: int | None = None) -> BenchmarkResult:
    """Train every (variant, P, H) in the grid, evaluate persistence, write artifacts.

    Rows come out in config order (variant, then P, then H) no matter how
    runs are scheduled; persistence rows follow for each (P, H).
    """
    series = load_series(cfg)
    datasets = {(P, H): build_datasets(series, P, H, cfg.split_ratio) for P in cfg.P for H in cfg.H}
    jobs = [(cfg, v, P, H, *datasets[(P, H)]) for v in cfg.variant for P in cfg.P for H in cfg.H]
    n_workers = max(1, workers if workers is not None else cfg.workers)
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(job) for job in jobs]
    for (P, H), (train_set, test_set) in datasets.items():
        pers = PersistenceModel(H)
        results.append(RunResult("persistence", P, H, None, "ok",
                                 train=evaluate(pers, train_set), test=evaluate(pers, test_set)))
    summary = summary_to_text(results)
    spectra = diagnostics.spectra_to_text(diagnostics.export_spectra(
        (r.variant, backbone_tag(cfg, r.variant), r.P, r.H, r.history)
        for r in results if r.history is not None
    ))
    ok = all(r.status == "ok" for r in results)
    if write:
        write_artifacts(cfg, results, summary, spectra)
    return BenchmarkResult(results, summary, spectra, ok)


def write_artifacts(cfg: BenchmarkConfig, results: list[RunResult], summary: str, spectra: str) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(summary)
    (out / "spectra.csv").write_text(spectra)
    for r in results:
        if r.history is None:
            continue
        run_dir = out / "runs" / f"{r.variant}_P{r.P}_H{r.H}"
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "history.csv").write_text(history_to_text(r.history))
        (run_dir / "checkpoint.txt").write_text(r.checkpoint)
