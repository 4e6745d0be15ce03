"""One-step and recursive multi-step forecasting, post-processing, horizon
evaluation, and naive reference baselines."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .dataset import Dataset
from .metrics import MetricsReport
from .model import PredictionModel
from .windows import SampleWindow


class Forecaster(Protocol):
    """Anything that can roll one normalized step forward."""

    history_len: int

    def predict_next(self, history: np.ndarray, poi_counts: np.ndarray,
                     tile: np.ndarray, seed: int) -> np.ndarray: ...


@dataclass(frozen=True)
class ForecastResult:
    trajectory: np.ndarray             # (steps, K) raw space, >= 0
    normalized: np.ndarray             # (steps, K) normalized space, pre-postprocess
    per_step_samples: np.ndarray | None
    seeds: tuple[int, ...]

    def __post_init__(self):
        if np.any(self.trajectory < 0) or not np.all(np.isfinite(self.trajectory)):
            raise ValueError("trajectory must be finite and non-negative")


def predict_one(model: PredictionModel, window: SampleWindow,
                samples: int | None = None, seed: int = 0) -> np.ndarray:
    """Denormalized next-row forecast (median over diffusion samples)."""
    if samples is not None:
        model.samples = samples
    normalized = model.predict_window(window, seed)
    return model.normalizer.invert(normalized[None])[0]


def predict_recursive(model: Forecaster, window: SampleWindow, steps: int,
                      context_series: list[tuple[np.ndarray, np.ndarray]],
                      seed: int = 0, normalizer=None) -> ForecastResult:
    """Roll the model forward `steps` hours, feeding each normalized
    prediction back into the sliding history window.

    context_series holds the per-step (poi_counts, tile) pairs; when shorter
    than `steps`, the last context is repeated with a warning. Step i uses
    derived seed `seed + i`.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not context_series:
        raise ValueError("need at least one context")
    if len(context_series) < steps:
        warnings.warn(
            f"context series has {len(context_series)} entries for {steps} steps; "
            "repeating the last context")
        context_series = list(context_series) + [context_series[-1]] * (steps - len(context_series))
    if normalizer is None:
        normalizer = model.normalizer

    history = np.array(window.history, dtype=np.float64)
    rows = []
    seeds = []
    for i in range(steps):
        poi, tile = context_series[i]
        step_seed = seed + i
        row = model.predict_next(history, poi, tile, step_seed)
        rows.append(row)
        seeds.append(step_seed)
        history = np.vstack([history[1:], row])
    normalized = np.asarray(rows)
    raw = normalizer.invert(normalized)
    return ForecastResult(trajectory=raw, normalized=normalized,
                          per_step_samples=None, seeds=tuple(seeds))


def postprocess(trajectory: np.ndarray) -> np.ndarray:
    """Clip at 0, then a centered 3-point moving average along the step
    axis; edges average over the available neighbors."""
    x = np.asarray(trajectory, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite trajectory")
    x = np.clip(x, 0.0, None)
    out = np.empty_like(x)
    n = x.shape[0]
    for i in range(n):
        lo, hi = max(0, i - 1), min(n, i + 2)
        out[i] = x[lo:hi].mean(axis=0)
    return out


@dataclass(frozen=True)
class HorizonReport:
    steps_list: tuple[int, ...]
    per_step_mse: dict[int, float]
    per_service_per_step: dict[int, list[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "steps_list": list(self.steps_list),
            "per_step_mse": {str(k): v for k, v in self.per_step_mse.items()},
            "per_service_per_step": {str(k): v for k, v in self.per_service_per_step.items()},
        }

    def to_csv(self) -> str:
        lines = ["step,service,mse"]
        for step in self.steps_list:
            for s, v in enumerate(self.per_service_per_step.get(step, []), start=1):
                lines.append(f"{step},{s},{v}")
        return "\n".join(lines) + "\n"


def evaluate_horizon(model: Forecaster, dataset: Dataset, steps_list: list[int],
                     windows_per_user: int = 4, seed: int = 0,
                     normalizer=None) -> HorizonReport:
    """Recursive multi-step evaluation in normalized space.

    Per-step MSE is computed on the raw (un-postprocessed) normalized
    predictions so that a perfect next-row oracle scores exactly zero;
    postprocessing belongs to emitted trajectories, not the metric path.
    """
    if normalizer is None:
        normalizer = model.normalizer
    steps_list = sorted(set(int(s) for s in steps_list))
    max_steps = max(steps_list)
    h_len = model.history_len

    sq_err: dict[int, list[np.ndarray]] = {s: [] for s in range(1, max_steps + 1)}
    rng = np.random.default_rng(seed)
    for u in dataset:
        normalized = normalizer.apply(u.traffic.values)
        m = u.num_hours
        max_start = m - max_steps
        if max_start <= h_len:
            raise ValueError(
                f"user {u.user_id}: series too short for {max_steps}-step evaluation")
        starts = sorted(rng.choice(np.arange(h_len, max_start),
                                   size=min(windows_per_user, max_start - h_len),
                                   replace=False).tolist())
        for t in starts:
            window = SampleWindow(
                user_id=u.user_id, history=normalized[t - h_len:t],
                target=normalized[t:t + 1], poi_at_target=u.poi.counts[t].astype(np.float64),
                tile_at_target=u.tiles.tiles[t], target_time=t)
            contexts = [(u.poi.counts[t + i].astype(np.float64), u.tiles.tiles[t + i])
                        for i in range(max_steps)]
            result = predict_recursive(model, window, max_steps, contexts,
                                       seed=seed + 1000 * t, normalizer=normalizer)
            truth = normalized[t:t + max_steps]
            for s in range(1, max_steps + 1):
                sq_err[s].append((result.normalized[s - 1] - truth[s - 1]) ** 2)

    per_step_mse = {}
    per_service = {}
    for s in steps_list:
        errs = np.asarray(sq_err[s])          # (windows, K)
        per_step_mse[s] = float(errs.mean())
        per_service[s] = errs.mean(axis=0).tolist()
    return HorizonReport(steps_list=tuple(steps_list), per_step_mse=per_step_mse,
                         per_service_per_step=per_service)


def seasonal_naive(history: np.ndarray, period: int = 24) -> np.ndarray:
    """The row observed `period` hours ago."""
    history = np.asarray(history)
    if history.shape[0] < period:
        raise ValueError(f"history length {history.shape[0]} < period {period}")
    return history[-period].copy()


class SeasonalNaiveForecaster:
    """Baseline adapter for the horizon harness."""

    def __init__(self, history_len: int, normalizer, period: int = 24):
        if history_len < period:
            raise ValueError("history_len must cover at least one period")
        self.history_len = history_len
        self.normalizer = normalizer
        self.period = period

    def predict_next(self, history, poi_counts, tile, seed):
        return seasonal_naive(history, self.period)


def ar_baseline_fit(history: np.ndarray, order: int) -> np.ndarray:
    """Per-service least-squares AR(order) coefficients, no intercept.

    Returns an (order, K) array; a near-singular design falls back to ridge
    with a fixed 1e-6 regularizer.
    """
    history = np.asarray(history, dtype=np.float64)
    h_len, k = history.shape
    if not 1 <= order < h_len:
        raise ValueError(f"need H_len > order >= 1, got H_len={h_len}, order={order}")
    coeffs = np.empty((order, k))
    for s in range(k):
        y = history[order:, s]
        x = np.column_stack([history[order - j - 1:h_len - j - 1, s] for j in range(order)])
        gram = x.T @ x
        try:
            coeffs[:, s] = np.linalg.solve(gram, x.T @ y)
        except np.linalg.LinAlgError:
            coeffs[:, s] = np.linalg.solve(gram + 1e-6 * np.eye(order), x.T @ y)
    return coeffs


def ar_baseline_predict(coeffs: np.ndarray, history: np.ndarray) -> np.ndarray:
    """One-step AR prediction from the most recent rows."""
    history = np.asarray(history, dtype=np.float64)
    order = coeffs.shape[0]
    lags = history[-order:][::-1]            # row 0 = most recent
    return np.einsum("jk,jk->k", coeffs, lags)
