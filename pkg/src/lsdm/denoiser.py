"""Conditional dual-axis transformer denoiser.

The denoiser sees a noisy traffic window as a (B, 1, K, L) tensor (K
services, L hours), projects it to an internal channel width, runs blocks
of time-axis and service-axis attention, and finishes with an AdaLN-
modulated final layer. Conditioning (history, environment, timestep) enters
only through the AdaLN shift/scale paths, which are zero-initialized so the
model ignores the condition at initialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


def timestep_embedding(t: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding: entry 2i = sin(t / 10000^(2i/dim)), 2i+1 = cos."""
    if dim % 2 != 0:
        raise ValueError("embedding dim must be even")
    if t < 0:
        raise ValueError("t must be >= 0")
    i = np.arange(dim // 2)
    angles = t / np.power(10000.0, 2.0 * i / dim)
    out = np.empty(dim)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


def timestep_embedding_batch(t: torch.Tensor, dim: int) -> torch.Tensor:
    if dim % 2 != 0:
        raise ValueError("embedding dim must be even")
    i = torch.arange(dim // 2, dtype=torch.float64)
    angles = t.double().unsqueeze(-1) / torch.pow(torch.tensor(10000.0, dtype=torch.float64),
                                                  2.0 * i / dim)
    out = torch.empty(t.shape[0], dim, dtype=torch.float64)
    out[:, 0::2] = torch.sin(angles)
    out[:, 1::2] = torch.cos(angles)
    return out


def _positional_encoding(length: int, dim: int, dtype, device) -> torch.Tensor:
    """Sinusoidal positions for the time axis, shape (length, dim)."""
    pe = torch.zeros(length, dim, dtype=dtype, device=device)
    pos = torch.arange(length, dtype=dtype, device=device).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=dtype, device=device)
                    * (-math.log(10000.0) / dim))
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div[: (dim + 1) // 2])
    return pe


@dataclass(frozen=True)
class DenoiserConfig:
    channel_width: int = 32
    num_heads: int = 4
    blocks: int = 2
    condition_dim: int = 128
    timestep_dim: int = 128
    services: int = 10
    window_len: int = 1
    history_len: int = 12
    history_dim: int = 64
    env_dim: int = 32

    def __post_init__(self):
        if self.channel_width % self.num_heads != 0:
            raise ValueError("channel_width must be divisible by num_heads")
        if self.timestep_dim % 2 != 0:
            raise ValueError("timestep_dim must be even")
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")


class _AttentionAxis(nn.Module):
    """Pre-norm residual self-attention over one axis, with optional
    AdaLN modulation of the normed input."""

    def __init__(self, channels: int, num_heads: int, cond_dim: int | None,
                 positional: bool):
        super().__init__()
        self.norm = nn.LayerNorm(channels, elementwise_affine=False)
        self.attn = nn.MultiheadAttention(channels, num_heads, batch_first=True)
        self.positional = positional
        if cond_dim is not None:
            self.modulation = nn.Linear(cond_dim, 2 * channels)
            nn.init.zeros_(self.modulation.weight)
            nn.init.zeros_(self.modulation.bias)
        else:
            self.modulation = None

    def forward(self, x: torch.Tensor, c: torch.Tensor | None) -> torch.Tensor:
        """x: (B', S, C) tokens along the attended axis."""
        h = self.norm(x)
        if self.modulation is not None and c is not None:
            shift, scale = self.modulation(c).chunk(2, dim=-1)
            h = h * (1.0 + scale.unsqueeze(1)) + shift.unsqueeze(1)
        if self.positional:
            h = h + _positional_encoding(x.shape[1], x.shape[2], x.dtype, x.device)
        out, _ = self.attn(h, h, h, need_weights=False)
        return x + out


class TwoAxisBlock(nn.Module):
    """Time attention over L per (b, k), then service attention over K per
    (b, l). The service axis carries no positional encoding, so the block is
    equivariant under permutations of the services."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        c = config.channel_width
        self.time_attn = _AttentionAxis(c, config.num_heads, config.condition_dim, positional=True)
        self.feature_attn = _AttentionAxis(c, config.num_heads, config.condition_dim, positional=False)

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        b, ch, k, length = x.shape
        # time axis: tokens along L, one sequence per (b, k)
        h = x.permute(0, 2, 3, 1).reshape(b * k, length, ch)
        h = self.time_attn(h, c.repeat_interleave(k, dim=0))
        x = h.reshape(b, k, length, ch).permute(0, 3, 1, 2)
        # service axis: tokens along K, one sequence per (b, l)
        h = x.permute(0, 3, 2, 1).reshape(b * length, k, ch)
        h = self.feature_attn(h, c.repeat_interleave(length, dim=0))
        return h.reshape(b, length, k, ch).permute(0, 3, 2, 1)


class FinalLayer(nn.Module):
    """Parallel time and service attention branches summed, then AdaLN
    modulation and a linear projection back to one channel."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        c = config.channel_width
        self.time_layer = _AttentionAxis(c, config.num_heads, None, positional=True)
        self.feature_layer = _AttentionAxis(c, config.num_heads, None, positional=False)
        self.norm = nn.LayerNorm(c, elementwise_affine=False)
        self.adaln = nn.Linear(config.condition_dim, 2 * c)
        nn.init.zeros_(self.adaln.weight)
        nn.init.zeros_(self.adaln.bias)
        self.linear = nn.Linear(c, 1)

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        b, ch, k, length = x.shape
        h = x.permute(0, 2, 3, 1).reshape(b * k, length, ch)
        x_time = self.time_layer(h, None).reshape(b, k, length, ch).permute(0, 3, 1, 2)
        h = x.permute(0, 3, 2, 1).reshape(b * length, k, ch)
        x_feature = self.feature_layer(h, None).reshape(b, length, k, ch).permute(0, 3, 2, 1)
        x = x_time + x_feature

        shift, scale = self.adaln(c).chunk(2, dim=-1)
        h = x.permute(0, 2, 3, 1)                      # (B, K, L, C)
        h = self.norm(h) * (1.0 + scale[:, None, None, :]) + shift[:, None, None, :]
        out = self.linear(h)                           # (B, K, L, 1)
        return out.permute(0, 3, 1, 2)


class HistoryEncoder(nn.Module):
    """Flatten -> linear -> GELU -> linear embedding of the history window."""

    def __init__(self, history_len: int, services: int, out_dim: int):
        super().__init__()
        self.history_len = history_len
        self.services = services
        self.net = nn.Sequential(
            nn.Linear(history_len * services, 2 * out_dim), nn.GELU(),
            nn.Linear(2 * out_dim, out_dim))

    def forward(self, history: torch.Tensor) -> torch.Tensor:
        if history.shape[-2:] != (self.history_len, self.services):
            raise ValueError(
                f"history shape {tuple(history.shape[-2:])} != "
                f"({self.history_len}, {self.services})")
        return self.net(history.flatten(-2))


class Denoiser(nn.Module):
    """Full noise-prediction stack: input projection, two-axis blocks, and
    the AdaLN final layer."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        self.input_proj = nn.Conv2d(1, config.channel_width, kernel_size=1)
        self.blocks = nn.ModuleList(TwoAxisBlock(config) for _ in range(config.blocks))
        self.final = FinalLayer(config)
        self.history_encoder = HistoryEncoder(
            config.history_len, config.services, config.history_dim)
        cond_in = config.history_dim + config.env_dim + config.timestep_dim
        self.condition_proj = nn.Linear(cond_in, config.condition_dim)

    def assemble_condition(self, history_emb: torch.Tensor, env: torch.Tensor | None,
                           t_emb: torch.Tensor) -> torch.Tensor:
        """Concatenate [history, environment, timestep] and project to H_c.

        env=None selects unconditional mode: the environment slot is
        zero-filled.
        """
        b = history_emb.shape[0]
        if env is None:
            env = torch.zeros(b, self.config.env_dim, dtype=history_emb.dtype,
                              device=history_emb.device)
        if env.shape != (b, self.config.env_dim):
            raise ValueError(f"env embedding shape {tuple(env.shape)} != ({b}, {self.config.env_dim})")
        if t_emb.shape != (b, self.config.timestep_dim):
            raise ValueError(f"t_emb shape {tuple(t_emb.shape)} != ({b}, {self.config.timestep_dim})")
        return self.condition_proj(torch.cat([history_emb, env, t_emb], dim=-1))

    def forward(self, x_t: torch.Tensor, t: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        if x_t.ndim != 4 or x_t.shape[1] != 1 or x_t.shape[2] != cfg.services \
                or x_t.shape[3] != cfg.window_len:
            raise ValueError(
                f"x_t shape {tuple(x_t.shape)} != (B, 1, {cfg.services}, {cfg.window_len})")
        if c.shape != (x_t.shape[0], cfg.condition_dim):
            raise ValueError(f"condition shape {tuple(c.shape)} != (B, {cfg.condition_dim})")
        del t  # the timestep reaches the stack through the condition vector
        x = self.input_proj(x_t)
        for block in self.blocks:
            x = block(x, c)
        return self.final(x, c)
