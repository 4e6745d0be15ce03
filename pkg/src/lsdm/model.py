"""Trained-model bundle tying towers, denoiser, normalizer, and schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .denoiser import Denoiser, DenoiserConfig, timestep_embedding_batch
from .diffusion import NoiseSchedule, sample
from .normalize import Normalizer
from .text import poi_to_text
from .towers import TowerParameters, encode_image, encode_text, fuse
from .windows import SampleWindow


class ConditionalDenoiser(nn.Module):
    """Adapter exposing the (x_t, t, condition) interface the diffusion ops
    expect. `condition` carries the raw flattened history followed by the
    environment embedding; the timestep embedding is computed per call so
    the same condition tensor serves every reverse step."""

    def __init__(self, denoiser: Denoiser, conditional: bool = True):
        super().__init__()
        self.denoiser = denoiser
        self.conditional = conditional

    def split_condition(self, condition: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        cfg = self.denoiser.config
        hist_width = cfg.history_len * cfg.services
        if condition.shape[-1] != hist_width + cfg.env_dim:
            raise ValueError(
                f"condition width {condition.shape[-1]} != "
                f"history ({hist_width}) + env ({cfg.env_dim})")
        history = condition[:, :hist_width].reshape(-1, cfg.history_len, cfg.services)
        env = condition[:, hist_width:]
        return history, env

    def forward(self, x_t: torch.Tensor, t: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        cfg = self.denoiser.config
        history, env = self.split_condition(condition)
        hist_emb = self.denoiser.history_encoder(history)
        t_emb = timestep_embedding_batch(t, cfg.timestep_dim).to(x_t.dtype)
        c = self.denoiser.assemble_condition(
            hist_emb, env if self.conditional else None, t_emb)
        return self.denoiser(x_t, t, c)


@dataclass
class PredictionModel:
    """Everything needed to forecast: the trained stacks plus data plumbing."""

    denoiser: Denoiser
    towers: TowerParameters | None
    normalizer: Normalizer
    schedule: NoiseSchedule
    fusion: tuple[float, float] = (0.5, 0.5)
    conditional: bool = True
    samples: int = 8
    trained: bool = False

    @property
    def config(self) -> DenoiserConfig:
        return self.denoiser.config

    @property
    def history_len(self) -> int:
        return self.config.history_len

    def env_vector(self, poi_counts: np.ndarray, tile: np.ndarray) -> np.ndarray:
        """Fused environment embedding z_env, or zeros when unconditional."""
        if not self.conditional or self.towers is None:
            return np.zeros(self.config.env_dim)
        z_image = encode_image(tile, self.towers)
        z_text = encode_text(poi_to_text(poi_counts), self.towers)
        return fuse(z_image, z_text, *self.fusion)

    def pack_condition(self, history: np.ndarray, env: np.ndarray) -> torch.Tensor:
        """(1, H_len*K + d_z) condition row for one window."""
        flat = np.concatenate([np.asarray(history, dtype=np.float64).ravel(),
                               np.asarray(env, dtype=np.float64)])
        return torch.as_tensor(flat, dtype=torch.float32).unsqueeze(0)

    def predict_next(self, history: np.ndarray, poi_counts: np.ndarray,
                     tile: np.ndarray, seed: int) -> np.ndarray:
        """Median of `samples` diffusion draws of the next row, normalized space."""
        if not self.trained:
            raise RuntimeError("model has not been trained")
        cfg = self.config
        if cfg.window_len != 1:
            raise ValueError("one-step prediction requires window_len = 1")
        if np.asarray(history).shape != (cfg.history_len, cfg.services):
            raise ValueError(
                f"history shape {np.asarray(history).shape} != "
                f"({cfg.history_len}, {cfg.services})")
        env = self.env_vector(poi_counts, tile)
        cond = self.pack_condition(history, env).repeat(self.samples, 1)
        wrapper = ConditionalDenoiser(self.denoiser, self.conditional)
        wrapper.eval()
        x0 = sample(wrapper, cond, self.schedule,
                    (self.samples, 1, cfg.services, 1), seed)
        draws = x0[:, 0, :, 0].numpy()          # (S, K)
        return np.median(draws, axis=0).astype(np.float64)

    def predict_window(self, window: SampleWindow, seed: int) -> np.ndarray:
        return self.predict_next(window.history, window.poi_at_target,
                                 window.tile_at_target, seed)
