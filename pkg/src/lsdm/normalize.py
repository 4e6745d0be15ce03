"""Per-service normalization in log1p space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset


@dataclass(frozen=True)
class Normalizer:
    """Standardization statistics over log1p(traffic), one triple per service.

    Services with zero variance are flagged constant and pass through as
    zeros in normalized space.
    """

    mean: np.ndarray          # (N,)
    std: np.ndarray           # (N,) > 0 where not constant
    is_constant: np.ndarray   # (N,) bool

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Map raw non-negative traffic to normalized space."""
        values = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite input to normalizer")
        if np.any(values < 0):
            raise ValueError("normalizer input must be non-negative")
        z = np.log1p(values)
        out = (z - self.mean) / self.std
        return np.where(self.is_constant, 0.0, out)

    def invert(self, values: np.ndarray) -> np.ndarray:
        """Map normalized values back to raw space, clipped at 0."""
        values = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite input to normalizer")
        z = np.where(self.is_constant, self.mean, values * self.std + self.mean)
        return np.clip(np.expm1(z), 0.0, None)


def fit_normalizer(dataset: Dataset) -> Normalizer:
    """Fit per-service mean/std of log1p(traffic) over all users and hours."""
    if len(dataset) == 0:
        raise ValueError("cannot fit a normalizer on an empty dataset")
    stacked = np.concatenate([u.traffic.values for u in dataset], axis=0)
    z = np.log1p(stacked)
    mean = z.mean(axis=0)
    std = z.std(axis=0)
    is_constant = std <= 1e-12
    return Normalizer(mean=mean, std=np.where(is_constant, 1.0, std), is_constant=is_constant)
