"""Sliding-window extraction of (history, target, context) training units."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .normalize import Normalizer


@dataclass(frozen=True)
class SampleWindow:
    """One training/inference unit: normalized history and target plus the
    POI counts and image tile at the first target hour."""

    user_id: str
    history: np.ndarray        # (H_len, N) normalized
    target: np.ndarray         # (horizon, N) normalized
    poi_at_target: np.ndarray  # (P,)
    tile_at_target: np.ndarray  # (h, w, c)
    target_time: int           # 0-based hour index of the first target row

    def __post_init__(self):
        if self.history.shape[0] < 1 or self.target.shape[0] < 1:
            raise ValueError("history and target must each span at least one hour")


def make_windows(dataset: Dataset, normalizer: Normalizer,
                 history_len: int, horizon: int = 1) -> list[SampleWindow]:
    """Enumerate every valid window of each user, ordered by (user, time).

    A target start t is valid when t >= history_len and t + horizon <= M,
    giving M - history_len - horizon + 1 windows per user.
    """
    if history_len < 1 or horizon < 1:
        raise ValueError("history_len and horizon must be >= 1")
    windows: list[SampleWindow] = []
    for u in dataset:
        normalized = normalizer.apply(u.traffic.values)
        m = u.num_hours
        for t in range(history_len, m - horizon + 1):
            windows.append(SampleWindow(
                user_id=u.user_id,
                history=normalized[t - history_len:t],
                target=normalized[t:t + horizon],
                poi_at_target=u.poi.counts[t].astype(np.float64),
                tile_at_target=u.tiles.tiles[t],
                target_time=t,
            ))
    if not windows:
        raise ValueError(
            f"history_len + horizon = {history_len + horizon} exceeds every user's series length"
        )
    return windows
