"""Training orchestration: contrastive stage, diffusion stage, and
checkpoint packing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .checkpoint import CheckpointState, require_arrays
from .config import RunConfig
from .dataset import Dataset, load_dataset
from .denoiser import Denoiser, DenoiserConfig
from .diffusion import DiffusionBatch, make_schedule, training_loss
from .model import ConditionalDenoiser, PredictionModel
from .normalize import Normalizer, fit_normalizer
from .synthetic import SyntheticConfig, generate_synthetic
from .text import poi_to_text
from .towers import ContrastiveConfig, TowerParameters, _pad_tokens, train_contrastive
from .windows import make_windows


class TrainingDivergedError(RuntimeError):
    def __init__(self, message: str, state: CheckpointState):
        super().__init__(message)
        self.state = state


@dataclass
class TrainResult:
    model: PredictionModel
    state: CheckpointState
    diffusion_log: list[float]
    contrastive_log: list[float]


def build_dataset(config: RunConfig) -> Dataset:
    data = config.data
    if data.synthetic is not None:
        syn = SyntheticConfig(num_users=data.synthetic.num_users,
                              weeks=data.synthetic.weeks,
                              noise_level=data.synthetic.noise_level,
                              seed=data.synthetic.seed)
        return generate_synthetic(syn)
    return load_dataset(data.manifest)


def denoiser_config(config: RunConfig) -> DenoiserConfig:
    m = config.model
    return DenoiserConfig(
        channel_width=m.channel_width, num_heads=m.num_heads, blocks=m.blocks,
        condition_dim=m.condition_dim, timestep_dim=m.timestep_dim,
        services=10, window_len=m.window_len, history_len=m.history_len,
        history_dim=m.history_dim, env_dim=m.env_dim)


def _dataset_pairs(dataset: Dataset, n_pairs: int, seed: int):
    """(tile, description) pairs sampled uniformly over (user, hour)."""
    rng = np.random.default_rng(seed)
    slots = [(ui, t) for ui, u in enumerate(dataset.users) for t in range(u.num_hours)]
    idx = rng.choice(len(slots), size=min(n_pairs, len(slots)), replace=False)
    pairs = []
    for i in sorted(idx.tolist()):
        ui, t = slots[i]
        u = dataset.users[ui]
        pairs.append((u.tiles.tiles[t], poi_to_text(u.poi.counts[t])))
    return pairs


def _env_vectors(windows, towers: TowerParameters, fusion: tuple[float, float]) -> np.ndarray:
    """Fused environment embeddings for every window, batched."""
    tiles = torch.as_tensor(np.stack([w.tile_at_target for w in windows]), dtype=torch.float32)
    descriptions = [poi_to_text(w.poi_at_target.astype(np.int64)) for w in windows]
    ids, mask = _pad_tokens(descriptions)
    alpha, beta = fusion
    with torch.no_grad():
        z_image = towers.image_tower(tiles)
        z_text = towers.text_tower(ids, mask)
    return (alpha * z_image + beta * z_text).numpy().astype(np.float64)


def pack_checkpoint(model: PredictionModel, config: RunConfig, step: int) -> CheckpointState:
    arrays: dict[str, np.ndarray] = {}
    for name, tensor in model.denoiser.state_dict().items():
        arrays[f"denoiser/{name}"] = tensor.numpy()
    if model.towers is not None:
        for name, tensor in model.towers.state_dict().items():
            arrays[f"towers/{name}"] = tensor.numpy()
    arrays["normalizer/mean"] = model.normalizer.mean
    arrays["normalizer/std"] = model.normalizer.std
    arrays["normalizer/is_constant"] = model.normalizer.is_constant.astype(np.float32)
    return CheckpointState(config=config.to_dict(), arrays=arrays, step=step,
                           seed=config.training.seed)


def model_from_checkpoint(state: CheckpointState, tile_shape=(8, 8, 3)) -> PredictionModel:
    from .config import config_from_dict

    config = config_from_dict(state.config)
    cfg = denoiser_config(config)
    denoiser = Denoiser(cfg)
    prefix = "denoiser/"
    names = [prefix + n for n in denoiser.state_dict()]
    require_arrays(state, names + ["normalizer/mean", "normalizer/std", "normalizer/is_constant"])
    denoiser.load_state_dict({
        n: torch.as_tensor(state.arrays[prefix + n]).reshape(p.shape)
        for n, p in denoiser.state_dict().items()})
    denoiser.eval()

    towers = None
    if any(k.startswith("towers/") for k in state.arrays):
        towers = TowerParameters(tile_shape, embed_dim=config.model.env_dim)
        require_arrays(state, ["towers/" + n for n in towers.state_dict()])
        towers.load_state_dict({
            n: torch.as_tensor(state.arrays["towers/" + n]).reshape(p.shape)
            for n, p in towers.state_dict().items()})
        towers.eval()

    normalizer = Normalizer(
        mean=state.arrays["normalizer/mean"].astype(np.float64),
        std=state.arrays["normalizer/std"].astype(np.float64),
        is_constant=state.arrays["normalizer/is_constant"] > 0.5)
    schedule = make_schedule(config.model.schedule.kind, config.model.schedule.T_diff,
                             config.model.schedule.beta_min, config.model.schedule.beta_max)
    return PredictionModel(
        denoiser=denoiser, towers=towers, normalizer=normalizer, schedule=schedule,
        fusion=(config.model.fusion_alpha, config.model.fusion_beta),
        conditional=config.model.conditional, samples=config.evaluation.samples,
        trained=True)


def train(config: RunConfig, dataset: Dataset | None = None) -> TrainResult:
    """Two-stage training: contrastive towers first, then the diffusion
    denoiser with the towers frozen. Fully seeded and deterministic on one
    platform."""
    if dataset is None:
        dataset = build_dataset(config)
    normalizer = fit_normalizer(dataset)
    cfg = denoiser_config(config)
    windows = make_windows(dataset, normalizer, cfg.history_len, cfg.window_len)
    tr = config.training

    contrastive_log: list[float] = []
    towers = None
    if config.model.conditional and tr.contrastive_epochs > 0:
        pairs = _dataset_pairs(dataset, tr.contrastive_pairs, tr.seed + 1)
        towers, contrastive_log = train_contrastive(
            pairs,
            ContrastiveConfig(embed_dim=config.model.env_dim,
                              epochs=tr.contrastive_epochs,
                              batch_size=tr.contrastive_batch_size,
                              learning_rate=tr.learning_rate, seed=tr.seed),
            tile_shape=dataset.tile_shape)

    fusion = (config.model.fusion_alpha, config.model.fusion_beta)
    if towers is not None:
        env = _env_vectors(windows, towers, fusion)
    else:
        env = np.zeros((len(windows), cfg.env_dim))

    x0_all = torch.as_tensor(
        np.stack([w.target.T[None] for w in windows]), dtype=torch.float32)  # (W, 1, K, L)
    cond_all = torch.as_tensor(
        np.concatenate([np.stack([w.history.ravel() for w in windows]), env], axis=1),
        dtype=torch.float32)

    torch.manual_seed(tr.seed)
    denoiser = Denoiser(cfg)
    wrapper = ConditionalDenoiser(denoiser, config.model.conditional)
    schedule = make_schedule(config.model.schedule.kind, config.model.schedule.T_diff,
                             config.model.schedule.beta_min, config.model.schedule.beta_max)
    opt = torch.optim.Adam(denoiser.parameters(), lr=tr.learning_rate)
    lr_sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=tr.epochs)
    noise_gen = torch.Generator().manual_seed(tr.seed + 2)
    rng = np.random.default_rng(tr.seed + 3)

    model = PredictionModel(denoiser=denoiser, towers=towers, normalizer=normalizer,
                            schedule=schedule, fusion=fusion,
                            conditional=config.model.conditional,
                            samples=config.evaluation.samples)
    diffusion_log: list[float] = []
    step = 0
    n = len(windows)
    history_width = cfg.history_len * cfg.services
    for _ in range(tr.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, tr.batch_size):
            idx = torch.as_tensor(order[start:start + tr.batch_size])
            b = len(idx)
            t = torch.as_tensor(rng.integers(1, schedule.T_diff + 1, size=b))
            epsilon = torch.randn(x0_all[idx].shape, generator=noise_gen)
            cond = cond_all[idx]
            if tr.history_dropout > 0.0:
                # Randomly blank the history slice so the denoiser cannot
                # lean on it exclusively; the environment embedding (which
                # stays visible) must then carry the station-level signal.
                keep = torch.as_tensor(
                    rng.random(b) >= tr.history_dropout, dtype=cond.dtype)
                cond = cond.clone()
                cond[:, :history_width] *= keep[:, None]
            batch = DiffusionBatch(x0=x0_all[idx], condition=cond,
                                   t=t, epsilon=epsilon)
            loss, _ = training_loss(batch, wrapper, schedule,
                                    config.model.lambda0, config.model.lambda1,
                                    config.model.lambda2)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at step {step}",
                    pack_checkpoint(model, config, step))
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(loss.item())
            step += 1
        lr_sched.step()
        diffusion_log.append(float(np.mean(epoch_losses)))

    denoiser.eval()
    model.trained = True
    return TrainResult(model=model, state=pack_checkpoint(model, config, step),
                       diffusion_log=diffusion_log, contrastive_log=contrastive_log)
