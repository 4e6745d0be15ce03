"""Noise schedule, forward/reverse diffusion, ancestral sampling, and the
training objective of the conditional denoising model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass(frozen=True)
class NoiseSchedule:
    """beta/alpha/alpha_bar/sigma tables, 1-indexed by diffusion step t."""

    T_diff: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.T_diff < 1:
            raise ValueError("T_diff must be >= 1")
        for name in ("beta", "alpha", "alpha_bar", "sigma"):
            arr = getattr(self, name)
            if arr.shape != (self.T_diff,):
                raise ValueError(f"{name} must have length T_diff")
        if np.any(self.beta <= 0) or np.any(self.beta >= 1):
            raise ValueError("beta entries must lie in (0, 1)")
        if self.T_diff > 1 and np.any(np.diff(self.alpha_bar) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if self.sigma[0] != 0.0:
            raise ValueError("sigma_1 must be 0")

    def _at(self, name: str, t: int) -> float:
        if not 1 <= t <= self.T_diff:
            raise IndexError(f"diffusion step {t} outside [1, {self.T_diff}]")
        return float(getattr(self, name)[t - 1])


def make_schedule(kind: str = "linear", T_diff: int = 50,
                  beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule, endpoints included."""
    if kind != "linear":
        raise ValueError(f"unknown schedule kind {kind!r}")
    if T_diff < 1:
        raise ValueError("T_diff must be >= 1")
    if not (0 < beta_min <= beta_max < 1):
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]")
    beta = np.linspace(beta_min, beta_max, T_diff)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sigma = np.sqrt(beta)
    sigma[0] = 0.0
    return NoiseSchedule(T_diff=T_diff, beta=beta, alpha=alpha, alpha_bar=alpha_bar, sigma=sigma)


def forward_step(x_prev, t: int, epsilon, schedule: NoiseSchedule):
    """One forward noising step: sqrt(a_t) x_{t-1} + sqrt(1 - a_t) eps."""
    a = schedule._at("alpha", t)
    return np.sqrt(a) * x_prev + np.sqrt(1.0 - a) * epsilon


def forward_jump(x0, t: int, epsilon, schedule: NoiseSchedule):
    """Closed-form jump to step t: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    ab = schedule._at("alpha_bar", t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * epsilon


def reverse_step(x_t, t: int, eps_hat, z, schedule: NoiseSchedule):
    """One reverse step with predicted noise eps_hat and fresh noise z.

    z must be zero (or None) at t = 1, where sigma_1 = 0.
    """
    a = schedule._at("alpha", t)
    ab = schedule._at("alpha_bar", t)
    s = schedule._at("sigma", t)
    mean = (x_t - (1.0 - a) / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(a)
    if z is None:
        return mean
    z_is_zero = bool((z == 0).all()) if hasattr(z, "all") else z == 0
    if t == 1 and not z_is_zero:
        raise ValueError("z must be zero at t = 1")
    return mean + s * z


def sample(denoiser, condition: torch.Tensor, schedule: NoiseSchedule,
           shape: tuple[int, ...], seed: int,
           x_init: torch.Tensor | None = None, deterministic: bool = False) -> torch.Tensor:
    """Ancestral sampling: start from seeded Gaussian noise and apply the
    reverse chain down to t = 1.

    denoiser(x_t, t, condition) -> predicted noise, called with a (B,)
    tensor of the current step. x_init overrides the initial noise and
    deterministic=True zeroes all reverse noise; both exist for oracle
    tests.
    """
    gen = torch.Generator().manual_seed(seed)
    if x_init is not None:
        x = x_init.clone()
    else:
        x = torch.randn(shape, generator=gen)
    with torch.no_grad():
        for t in range(schedule.T_diff, 0, -1):
            t_vec = torch.full((shape[0],), t, dtype=torch.long)
            eps_hat = denoiser(x, t_vec, condition)
            if eps_hat.shape != x.shape:
                raise ValueError(f"denoiser output shape {tuple(eps_hat.shape)} != {tuple(x.shape)}")
            if t == 1 or deterministic:
                z = None
            else:
                z = torch.randn(shape, generator=gen)
            x = reverse_step(x, t, eps_hat, z, schedule)
    return x


@dataclass
class DiffusionBatch:
    """One training batch: clean windows, condition vectors, steps, noise."""

    x0: torch.Tensor         # (B, 1, K, L)
    condition: torch.Tensor  # (B, H_c)
    t: torch.Tensor          # (B,) long in [1, T_diff]
    epsilon: torch.Tensor    # (B, 1, K, L)

    def __post_init__(self):
        if self.x0.shape != self.epsilon.shape or self.x0.ndim != 4:
            raise ValueError("x0 and epsilon must share a (B, 1, K, L) shape")
        if self.t.shape != (self.x0.shape[0],):
            raise ValueError("t must be a (B,) vector")


def _cosine_dissimilarity(pred: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    p = pred.flatten()
    q = truth.flatten()
    denom = (p.norm() * q.norm()).clamp_min(1e-12)
    return 1.0 - (p @ q) / denom


def training_loss(batch: DiffusionBatch, denoiser, schedule: NoiseSchedule,
                  lam0: float = 1.0, lam1: float = 1.0, lam2: float = 0.1,
                  ) -> tuple[torch.Tensor, dict[str, float]]:
    """Combined objective: noise-space MSE plus data-space MSE and cosine
    dissimilarity on the reconstructed clean window."""
    if lam0 < 0 or lam1 < 0 or lam2 < 0 or (lam0 == 0 and lam1 == 0 and lam2 == 0):
        raise ValueError("loss weights must be non-negative and not all zero")
    if torch.any(batch.t < 1) or torch.any(batch.t > schedule.T_diff):
        raise ValueError("batch steps outside schedule range")

    dtype = batch.x0.dtype
    ab = torch.as_tensor(schedule.alpha_bar, dtype=dtype)[batch.t - 1].view(-1, 1, 1, 1)
    x_t = torch.sqrt(ab) * batch.x0 + torch.sqrt(1.0 - ab) * batch.epsilon
    eps_hat = denoiser(x_t, batch.t, batch.condition)
    if eps_hat.shape != batch.x0.shape:
        raise ValueError(f"denoiser output shape {tuple(eps_hat.shape)} != {tuple(batch.x0.shape)}")
    x0_hat = (x_t - torch.sqrt(1.0 - ab) * eps_hat) / torch.sqrt(ab)

    mse = torch.nn.functional.mse_loss
    eps_term = mse(eps_hat, batch.epsilon)
    x0_term = mse(x0_hat, batch.x0)
    cos_term = _cosine_dissimilarity(x0_hat, batch.x0)
    loss = lam0 * eps_term + lam1 * x0_term + lam2 * cos_term
    diagnostics = {"eps_mse": eps_term.item(), "x0_mse": x0_term.item(),
                   "cos_loss": cos_term.item(), "total": loss.item()}
    return loss, diagnostics
