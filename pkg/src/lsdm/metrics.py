"""Evaluation metrics: MSE, RMSE, MAE, cosine similarity, R^2."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


def cosine_loss(pred: np.ndarray, truth: np.ndarray) -> float:
    """1 - cosine similarity over all entries flattened; in [0, 2]."""
    p = np.asarray(pred, dtype=np.float64).ravel()
    q = np.asarray(truth, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    pn, qn = np.linalg.norm(p), np.linalg.norm(q)
    if pn == 0 or qn == 0:
        raise ValueError("cosine loss undefined for an all-zero argument")
    return float(1.0 - (p @ q) / (pn * qn))


def combined_loss(pred: np.ndarray, truth: np.ndarray, lam1: float, lam2: float) -> float:
    """lam1 * MSE + lam2 * cosine_loss."""
    if lam1 < 0 or lam2 < 0:
        raise ValueError("weights must be non-negative")
    p = np.asarray(pred, dtype=np.float64)
    q = np.asarray(truth, dtype=np.float64)
    mse = float(np.mean((p - q) ** 2))
    cos = cosine_loss(pred, truth) if lam2 > 0 else 0.0
    return lam1 * mse + lam2 * cos


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    rmse: float
    mae: float
    cs: float | None
    r2: float | None
    n: int
    flags: tuple[str, ...] = ()
    per_service: tuple["MetricsReport", ...] | None = None

    def to_dict(self) -> dict:
        d = {"mse": self.mse, "rmse": self.rmse, "mae": self.mae,
             "cs": self.cs, "r2": self.r2, "n": self.n, "flags": list(self.flags)}
        d["per_service"] = ([r.to_dict() for r in self.per_service]
                            if self.per_service is not None else None)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def compute_metrics(truth: np.ndarray, pred: np.ndarray) -> MetricsReport:
    """All five metrics over flattened (truth, pred).

    Undefined cases are flagged instead of returning NaN: r2 when the truth
    is constant (zero total sum of squares), cs when either vector is all
    zeros.
    """
    y = np.asarray(truth, dtype=np.float64).ravel()
    yhat = np.asarray(pred, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    if y.size < 1:
        raise ValueError("need at least one sample")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yhat))):
        raise ValueError("non-finite input")

    n = y.size
    err = y - yhat
    mse = float(np.mean(err ** 2))
    rmse = float(np.sqrt(mse))
    mae = float(np.mean(np.abs(err)))

    flags: list[str] = []
    yn, pn = np.linalg.norm(y), np.linalg.norm(yhat)
    if yn == 0 or pn == 0:
        cs, flag = None, "cs_undefined"
        flags.append(flag)
    else:
        cs = float((y @ yhat) / (yn * pn))

    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        r2 = None
        flags.append("r2_undefined")
    else:
        r2 = float(1.0 - np.sum(err ** 2) / ss_tot)

    return MetricsReport(mse=mse, rmse=rmse, mae=mae, cs=cs, r2=r2, n=n, flags=tuple(flags))


def per_service_metrics(truth: np.ndarray, pred: np.ndarray) -> MetricsReport:
    """Aggregate report with one sub-report per service column."""
    y = np.asarray(truth, dtype=np.float64)
    yhat = np.asarray(pred, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 2:
        raise ValueError(f"need matching (M, K) arrays, got {y.shape} and {yhat.shape}")
    columns = tuple(compute_metrics(y[:, k], yhat[:, k]) for k in range(y.shape[1]))
    overall = compute_metrics(y, yhat)
    return MetricsReport(mse=overall.mse, rmse=overall.rmse, mae=overall.mae,
                         cs=overall.cs, r2=overall.r2, n=overall.n,
                         flags=overall.flags, per_service=columns)
