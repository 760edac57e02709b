"""Series loading, synthetic generators, windowing, splitting, normalisation."""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Series:
    values: np.ndarray  # (T, d)
    names: tuple[str, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DataError(f"series values must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("series contains non-finite values")
        object.__setattr__(self, "values", v)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{i}" for i in range(v.shape[1])))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def load_csv(path: str | Path) -> Series:
    """Read a header + numeric-rows CSV; a leading ``time`` column is skipped."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    skip_time = bool(header) and header[0].lower() == "time"
    names = header[1:] if skip_time else header
    if not names:
        raise DataError(f"{path}: no data columns")
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataError(f"{path}: header only, no data rows")
    values = np.empty((len(body), len(names)))
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != len(header):
            raise DataError(f"{path}: row {line} has {len(row)} cells, expected {len(header)}")
        cells = row[1:] if skip_time else row
        for j, cell in enumerate(cells):
            try:
                x = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {line}, column {names[j]!r}: non-numeric cell {cell!r}") from None
            if not math.isfinite(x):
                raise DataError(f"{path}: row {line}, column {names[j]!r}: non-finite cell {cell!r}")
            values[i, j] = x
    return Series(values, tuple(names))


def write_csv(series: Series, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(series.names)
        for row in series.values:
            w.writerow([repr(float(x)) for x in row])


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    degenerate: tuple[int, ...] = ()


@dataclass(frozen=True)
class WindowDataset:
    """Stacked ``(X, Y)`` pairs; indexes and iterates like a list of pairs."""

    X: np.ndarray  # (N, P, d)
    Y: np.ndarray  # (N, H, d)
    starts: np.ndarray  # (N,) series index of each window's first row
    split: str = "all"
    stats: NormStats | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i):
        return self.X[i], self.Y[i]

    def __iter__(self):
        return zip(self.X, self.Y)

    @property
    def P(self) -> int:
        return self.X.shape[1]

    @property
    def H(self) -> int:
        return self.Y.shape[1]


def make_windows(s: Series, P: int, H: int) -> WindowDataset:
    """All stride-1 windows: ``X`` rows ``t..t+P-1``, ``Y`` rows ``t+P..t+P+H-1``."""
    if P < 1 or H < 1:
        raise DataError("P and H must be positive")
    N = s.T - P - H + 1
    if N < 1:
        raise DataError(f"series of length {s.T} too short for P={P}, H={H}")
    view = np.lib.stride_tricks.sliding_window_view(s.values, P + H, axis=0)  # (N, d, P+H)
    view = view.transpose(0, 2, 1)
    return WindowDataset(view[:, :P].copy(), view[:, P:].copy(), np.arange(N))


def chrono_split(pairs: WindowDataset, ratio: float = 0.8) -> tuple[WindowDataset, WindowDataset]:
    N = len(pairs)
    if N == 0:
        raise DataError("no windows to split")
    n_train = math.floor(ratio * N)
    if n_train == 0 or n_train == N:
        raise DataError(f"split of {N} windows at ratio {ratio} leaves one side empty")
    cut = lambda sl, tag: dataclasses.replace(pairs, X=pairs.X[sl], Y=pairs.Y[sl], starts=pairs.starts[sl], split=tag)
    return cut(slice(0, n_train), "train"), cut(slice(n_train, N), "test")


def fit_stats(train: WindowDataset) -> NormStats:
    """Per-channel mean/std of all training-window ``X`` values pooled together."""
    pooled = train.X.reshape(-1, train.X.shape[-1])
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)
    degenerate = tuple(int(i) for i in np.flatnonzero(std <= 0.0))
    std = np.where(std > 0.0, std, 1.0)
    return NormStats(mean, std, degenerate)


def apply_stats(ds: WindowDataset, stats: NormStats) -> WindowDataset:
    return dataclasses.replace(
        ds, X=(ds.X - stats.mean) / stats.std, Y=(ds.Y - stats.mean) / stats.std, stats=stats
    )


def normalize(train: WindowDataset, test: WindowDataset) -> tuple[WindowDataset, WindowDataset, NormStats]:
    """z-score both splits with statistics from the training split only.

    Constant channels get std 1 and are listed in ``stats.degenerate``.
    """
    stats = fit_stats(train)
    return apply_stats(train, stats), apply_stats(test, stats), stats


def denormalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(values) * stats.std + stats.mean


def build_datasets(s: Series, P: int, H: int, ratio: float = 0.8) -> tuple[WindowDataset, WindowDataset]:
    """Windows, chronological split and normalisation in one call."""
    train, test = chrono_split(make_windows(s, P, H), ratio)
    train, test, _ = normalize(train, test)
    return train, test


def rotation_block_matrix(d: int, theta: float, rho: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return rho * np.kron(np.eye(d // 2), R)


def synthesize_series(kind: str, T: int, d: int, seed: int) -> Series:
    """Synthetic benchmark series.

    ``damped_rotation``
        ``x_{t+1} = rho R(theta) x_t + eps_t`` with ``rho = 0.97``,
        ``theta = 0.2`` rad, ``eps ~ N(0, 0.01^2 I)``; ``d`` must be even.
        ``x_0`` is drawn from the stationary distribution so the series has
        no start-up transient.
    ``sinusoid_ar``
        two sinusoids per channel with per-channel phase and amplitude,
        plus AR(1) noise (coefficient 0.8, innovation std 0.1). Both
        frequencies sit on DFT bins of the full series, at periods close to
        24 and ``24 * golden ratio`` samples.
    ``random_walk``
        cumulative sum of standard normal steps.
    """
    if T < 64:
        raise DataError("synthetic series need T >= 64")
    rng = np.random.default_rng(seed)
    if kind == "damped_rotation":
        return damped_rotation(T, d, rng)
    if kind == "sinusoid_ar":
        return sinusoid_ar(T, d, rng)
    if kind == "random_walk":
        return Series(np.cumsum(rng.standard_normal((T, d)), axis=0))
    raise DataError(f"unknown synthetic kind {kind!r}")


def damped_rotation(T: int, d: int, rng: np.random.Generator, rho: float = 0.97,
                    theta: float = 0.2, noise: float = 0.01) -> Series:
    if d < 2 or d % 2:
        raise DataError("damped_rotation needs an even number of channels")
    A = rotation_block_matrix(d, theta, rho)
    x = np.empty((T, d))
    scale = noise / math.sqrt(1.0 - rho**2) if noise > 0 else 1.0
    x[0] = rng.standard_normal(d) * scale
    eps = rng.standard_normal((T - 1, d)) * noise
    for t in range(T - 1):
        x[t + 1] = A @ x[t] + eps[t]
    return Series(x)


def sinusoid_bins(T: int) -> tuple[int, int]:
    k1 = max(1, round(T / 24))
    k2 = max(1, round(T / (24 * (1 + math.sqrt(5)) / 2)))
    if k2 == k1:
        k2 = k1 - 1 if k1 > 1 else k1 + 1
    return k1, k2


def sinusoid_ar(T: int, d: int, rng: np.random.Generator, ar: float = 0.8, noise: float = 0.1) -> Series:
    k1, k2 = sinusoid_bins(T)
    t = np.arange(T)[:, None]
    amp = rng.uniform(0.5, 1.5, (2, d))
    phase = rng.uniform(0, 2 * np.pi, (2, d))
    clean = amp[0] * np.sin(2 * np.pi * k1 * t / T + phase[0]) + amp[1] * np.sin(2 * np.pi * k2 * t / T + phase[1])
    e = np.zeros((T, d))
    if noise > 0:
        innov = rng.standard_normal((T, d)) * noise
        for i in range(1, T):
            e[i] = ar * e[i - 1] + innov[i]
    return Series(clean + e)
