"""Per-config call-count forecasting with additive Holt-Winters smoothing.

Series are call counts per 30-minute slot. A fit consumes at least two full
seasons; the default season is one week (336 slots).
"""

from __future__ import annotations

import csv
import itertools
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import SLOTS_PER_DAY, SLOTS_PER_WEEK, CallConfig


class SeriesTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    start_slot: int
    values: tuple[float, ...]

    def __post_init__(self):
        if any(v < 0 for v in self.values):
            raise ValueError("call counts must be non-negative")


@dataclass(frozen=True)
class HWParams:
    alpha: float = 0.3
    beta: float = 0.05
    gamma: float = 0.2
    season_length: int = SLOTS_PER_WEEK

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.season_length < 2:
            raise ValueError("season_length must be >= 2")


@dataclass
class HWState:
    """Smoothed state after consuming a series.

    ``seasonals[i]`` holds the latest estimate for phase ``i`` (slot index mod
    season length, counting from the series start). ``last_index`` is the
    index of the last consumed observation.
    """

    level: float
    trend: float
    seasonals: np.ndarray
    last_index: int
    params: HWParams
    one_step_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def season_length(self) -> int:
        return len(self.seasonals)


def fit(series: Sequence[float] | TimeSeries, params: HWParams = HWParams()) -> HWState:
    """Fit additive triple exponential smoothing in error-correction form.

    Initialisation uses the first two seasons: the trend is the mean per-slot
    change between them, seasonals are first-season deviations from the
    season mean after removing that trend, and the level is the season mean
    carried forward to the last slot of the first season. With a flat trend
    this is the plain "season mean / deviations" start. Updates then run from
    the second season on, recording one-step-ahead errors.
    """
    y = np.asarray(series.values if isinstance(series, TimeSeries) else series, dtype=float)
    L = params.season_length
    if len(y) < 2 * L:
        raise SeriesTooShortError(f"need at least {2 * L} observations (2 seasons of {L}), got {len(y)}")
    a, b, g = params.alpha, params.beta, params.gamma

    first, second = y[:L], y[L : 2 * L]
    mean1 = first.mean()
    trend = float((second.mean() - mean1) / L)
    phase = np.arange(L) - (L - 1) / 2.0
    seasonals = first - mean1 - trend * phase
    level = float(mean1 + trend * (L - 1) / 2.0)

    errors = np.empty(len(y) - L)
    s = seasonals.copy()
    for t in range(L, len(y)):
        i = t % L
        pred = level + trend + s[i]
        errors[t - L] = y[t] - pred
        prev_level = level
        level = a * (y[t] - s[i]) + (1 - a) * (level + trend)
        trend = b * (level - prev_level) + (1 - b) * trend
        s[i] = g * (y[t] - level) + (1 - g) * s[i]
    return HWState(level, trend, s, len(y) - 1, params, errors)


def forecast(state: HWState, horizon: int) -> np.ndarray:
    h = np.arange(1, horizon + 1)
    idx = (state.last_index + h) % state.season_length
    return np.maximum(0.0, state.level + h * state.trend + state.seasonals[idx])


def forecast_next_day(state: HWState) -> np.ndarray:
    """48 slots ahead, clamped at zero."""
    return forecast(state, SLOTS_PER_DAY)


def grid_search(
    series: Sequence[float],
    season_length: int = SLOTS_PER_WEEK,
    grid: Iterable[float] = (0.1, 0.3, 0.5),
) -> HWParams:
    """Pick the (alpha, beta, gamma) with the lowest one-step SSE."""
    grid = tuple(grid)
    best, best_sse = None, math.inf
    for a, b, g in itertools.product(grid, grid, grid):
        p = HWParams(a, b, g, season_length)
        sse = float(np.sum(fit(series, p).one_step_errors ** 2))
        if sse < best_sse:
            best, best_sse = p, sse
    return best


def _fit_and_forecast(args):
    key, values, params = args
    state = fit(values, params)
    return key, forecast_next_day(state), state


def forecast_many(
    series: Mapping[CallConfig, Sequence[float]],
    params: HWParams = HWParams(),
    workers: int | None = None,
) -> dict[CallConfig, np.ndarray]:
    """Fit and forecast each config independently; ordering of the result is
    canonical regardless of worker scheduling.

    ``workers`` of None or 1 runs in-process.
    """
    jobs = [(k, np.asarray(series[k], dtype=float), params) for k in sorted(series)]
    if workers is None or workers <= 1:
        results = map(_fit_and_forecast, jobs)
        out = {k: f for k, f, _ in results}
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = {k: f for k, f, _ in pool.map(_fit_and_forecast, jobs, chunksize=8)}
    return {k: out[k] for k in sorted(out)}


def top_k_configs(demands: Mapping[CallConfig, float], k: int = 3000) -> tuple[list[CallConfig], float]:
    """Most popular configs by total calls (ties in canonical order) and the
    share of all calls they cover."""
    ranked = sorted(demands, key=lambda c: (-demands[c], c.sort_key()))
    chosen = ranked[:k]
    total = sum(demands.values())
    coverage = 1.0 if total == 0 else sum(demands[c] for c in chosen) / total
    return chosen, coverage


@dataclass(frozen=True)
class ConfigScore:
    mae: float
    rmse: float


@dataclass(frozen=True)
class AccuracyReport:
    per_config: Mapping[str, ConfigScore]
    mae_cdf: tuple[tuple[float, float], ...]
    rmse_cdf: tuple[tuple[float, float], ...]

    @property
    def median_mae(self) -> float:
        return float(np.median([s.mae for s in self.per_config.values()])) if self.per_config else 0.0

    @property
    def median_rmse(self) -> float:
        return float(np.median([s.rmse for s in self.per_config.values()])) if self.per_config else 0.0


def score(predicted: Sequence[float], actual: Sequence[float]) -> ConfigScore:
    """MAE and RMSE normalised to the peak of the actual series."""
    f = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if f.shape != a.shape:
        raise ValueError(f"length mismatch: forecast {f.shape} vs actual {a.shape}")
    peak = float(a.max()) if a.size else 0.0
    if peak == 0:
        if np.all(f == 0):
            return ConfigScore(0.0, 0.0)
        raise ValueError("actual series is all zero but forecast is not; normalised error undefined")
    err = f - a
    return ConfigScore(float(np.mean(np.abs(err)) / peak), float(math.sqrt(np.mean(err**2)) / peak))


def _cdf(values: Sequence[float]) -> tuple[tuple[float, float], ...]:
    v = sorted(values)
    n = len(v)
    return tuple((x, (i + 1) / n) for i, x in enumerate(v))


def accuracy_report(
    predicted: Mapping[CallConfig, Sequence[float]], actual: Mapping[CallConfig, Sequence[float]]
) -> AccuracyReport:
    scores = {}
    for cfg in sorted(predicted):
        if cfg in actual:
            try:
                scores[cfg.key()] = score(predicted[cfg], actual[cfg])
            except ValueError:
                continue
    return AccuracyReport(
        scores, _cdf([s.mae for s in scores.values()]), _cdf([s.rmse for s in scores.values()])
    )


# -- IO ------------------------------------------------------------------------


def read_series_csv(path: str | Path) -> dict[CallConfig, dict[int, float]]:
    """Long-format CSV with columns slot, config, calls."""
    out: dict[CallConfig, dict[int, float]] = defaultdict(dict)
    with open(path, newline="") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            out[CallConfig.parse(row["config"])][int(row["slot"])] = float(row["calls"])
    return dict(out)


def write_series_csv(path: str | Path, series: Mapping[CallConfig, Mapping[int, float]], comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot", "config", "calls"])
        for cfg in sorted(series):
            for slot in sorted(series[cfg]):
                w.writerow([slot, cfg.key(), series[cfg][slot]])


def dense(points: Mapping[int, float], start: int, stop: int) -> np.ndarray:
    return np.array([points.get(s, 0.0) for s in range(start, stop)], dtype=float)
