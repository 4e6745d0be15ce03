"""Dual-tower contrastive environment encoder.

A small image tower (MLP over the flattened tile) and text tower (embedding
table + mean pooling + MLP) trained with a bidirectional InfoNCE objective,
plus the weighted fusion that produces the environment embedding fed to the
diffusion model. A provider hook lets externally computed embeddings stand
in for the internal towers.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .text import VOCAB_SIZE, TextDescription


class ImageTower(nn.Module):
    def __init__(self, tile_shape: tuple[int, int, int], embed_dim: int, hidden_mult: int = 4):
        super().__init__()
        self.tile_shape = tuple(tile_shape)
        in_dim = int(np.prod(tile_shape))
        hidden = hidden_mult * embed_dim
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden), nn.GELU(), nn.Linear(hidden, embed_dim))

    def forward(self, tiles: torch.Tensor) -> torch.Tensor:
        z = self.net(tiles.flatten(1))
        return z / z.norm(dim=-1, keepdim=True).clamp_min(1e-12)


class TextTower(nn.Module):
    def __init__(self, embed_dim: int, hidden_mult: int = 4, vocab_size: int = VOCAB_SIZE):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, embed_dim)
        # used in place of pooled token embeddings for empty sequences
        self.null_embedding = nn.Parameter(torch.randn(embed_dim) * 0.02)
        hidden = hidden_mult * embed_dim
        self.net = nn.Sequential(
            nn.Linear(embed_dim, hidden), nn.GELU(), nn.Linear(hidden, embed_dim))

    def forward(self, token_ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """token_ids: (B, T) padded with 0; mask: (B, T) booleans for real tokens."""
        emb = self.embedding(token_ids) * mask.unsqueeze(-1)
        lengths = mask.sum(dim=1, keepdim=True)
        pooled = emb.sum(dim=1) / lengths.clamp_min(1)
        pooled = torch.where(lengths > 0, pooled, self.null_embedding.expand_as(pooled))
        z = self.net(pooled)
        return z / z.norm(dim=-1, keepdim=True).clamp_min(1e-12)


class TowerParameters(nn.Module):
    """Both towers plus the learnable temperature (kept in log space)."""

    def __init__(self, tile_shape: tuple[int, int, int], embed_dim: int = 32,
                 hidden_mult: int = 4):
        super().__init__()
        self.embed_dim = embed_dim
        self.image_tower = ImageTower(tile_shape, embed_dim, hidden_mult)
        self.text_tower = TextTower(embed_dim, hidden_mult)
        # logit scale 1/tau, initialized at the CLIP value ln(1/0.07)
        self.log_inv_tau = nn.Parameter(torch.tensor(float(np.log(1.0 / 0.07))))

    @property
    def temperature(self) -> float:
        return float(torch.exp(-self.log_inv_tau.detach()))


def _pad_tokens(descriptions: list[TextDescription]) -> tuple[torch.Tensor, torch.Tensor]:
    max_len = max((len(d.token_ids) for d in descriptions), default=0)
    max_len = max(max_len, 1)
    ids = torch.zeros(len(descriptions), max_len, dtype=torch.long)
    mask = torch.zeros(len(descriptions), max_len)
    for i, d in enumerate(descriptions):
        for j, tid in enumerate(d.token_ids):
            ids[i, j] = tid
            mask[i, j] = 1.0
    return ids, mask


def encode_image(tile: np.ndarray, params: TowerParameters) -> np.ndarray:
    """Unit-normalized image embedding of one tile."""
    tile = np.asarray(tile, dtype=np.float64)
    if tile.shape != params.image_tower.tile_shape:
        raise ValueError(f"tile shape {tile.shape} != configured {params.image_tower.tile_shape}")
    if not np.all(np.isfinite(tile)):
        raise ValueError("non-finite tile entry")
    with torch.no_grad():
        z = params.image_tower(torch.as_tensor(tile, dtype=torch.float32).unsqueeze(0))
    return z.squeeze(0).numpy().astype(np.float64)


def encode_text(description: TextDescription, params: TowerParameters) -> np.ndarray:
    """Unit-normalized text embedding of one description."""
    ids, mask = _pad_tokens([description])
    if not description.token_ids:
        mask = torch.zeros_like(mask)
    with torch.no_grad():
        z = params.text_tower(ids, mask)
    return z.squeeze(0).numpy().astype(np.float64)


def info_nce(z_images, z_texts, tau: float) -> float:
    """Bidirectional InfoNCE over matched batches of unit embeddings.

    Sum of the image->text and text->image cross-entropy terms, each
    averaged over the batch.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    zi = torch.as_tensor(np.asarray(z_images), dtype=torch.float64)
    zt = torch.as_tensor(np.asarray(z_texts), dtype=torch.float64)
    if zi.shape != zt.shape or zi.ndim != 2:
        raise ValueError(f"batch shapes must match, got {tuple(zi.shape)} and {tuple(zt.shape)}")
    return float(_info_nce_torch(zi, zt, torch.tensor(1.0 / tau, dtype=torch.float64)))


def _info_nce_torch(zi: torch.Tensor, zt: torch.Tensor, inv_tau: torch.Tensor) -> torch.Tensor:
    logits = zi @ zt.t() * inv_tau
    labels = torch.arange(zi.shape[0], device=zi.device)
    return (nn.functional.cross_entropy(logits, labels)
            + nn.functional.cross_entropy(logits.t(), labels))


def fuse(z_image: np.ndarray, z_text: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Weighted combination alpha*z_image + beta*z_text."""
    if alpha < 0 or beta < 0:
        raise ValueError("fusion weights must be non-negative")
    if alpha == 0 and beta == 0:
        warnings.warn("both fusion weights are zero; environment embedding is all zeros")
    return alpha * np.asarray(z_image, dtype=np.float64) + beta * np.asarray(z_text, dtype=np.float64)


@dataclass(frozen=True)
class EnvEmbedding:
    z_image: np.ndarray
    z_text: np.ndarray
    z_env: np.ndarray
    alpha: float
    beta: float


@dataclass(frozen=True)
class ContrastiveConfig:
    embed_dim: int = 32
    hidden_mult: int = 4
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0


def train_contrastive(pairs: list[tuple[np.ndarray, TextDescription]],
                      config: ContrastiveConfig,
                      tile_shape: tuple[int, int, int]) -> tuple[TowerParameters, list[float]]:
    """Fit the towers on (tile, description) pairs; returns (params, per-epoch loss)."""
    if len(pairs) < 2:
        raise ValueError("need at least 2 contrastive pairs")
    if config.batch_size < 2:
        raise ValueError("contrastive batch size must be >= 2")
    if len(pairs) < config.batch_size:
        raise ValueError(f"fewer pairs ({len(pairs)}) than batch size ({config.batch_size})")

    torch.manual_seed(config.seed)
    params = TowerParameters(tile_shape, config.embed_dim, config.hidden_mult)
    opt = torch.optim.Adam(params.parameters(), lr=config.learning_rate)

    tiles = torch.as_tensor(
        np.stack([np.asarray(t, dtype=np.float32) for t, _ in pairs]), dtype=torch.float32)
    ids, mask = _pad_tokens([d for _, d in pairs])

    rng = np.random.default_rng(config.seed)
    log: list[float] = []
    n = len(pairs)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n - config.batch_size + 1, config.batch_size):
            idx = torch.as_tensor(order[start:start + config.batch_size])
            zi = params.image_tower(tiles[idx])
            zt = params.text_tower(ids[idx], mask[idx])
            loss = _info_nce_torch(zi, zt, torch.exp(params.log_inv_tau))
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(loss.item())
        log.append(float(np.mean(epoch_losses)))
    params.eval()
    return params, log


def embed_context(poi_counts: np.ndarray, tile: np.ndarray, params: TowerParameters,
                  fusion: tuple[float, float] = (0.5, 0.5),
                  provider_vectors: tuple[np.ndarray, np.ndarray] | None = None,
                  top_k: int = 3) -> EnvEmbedding:
    """Environment embedding for one (POI counts, tile) context.

    When provider_vectors is given, the externally computed (z_image,
    z_text) pair is used in place of the internal towers.
    """
    from .text import poi_to_text

    alpha, beta = fusion
    if provider_vectors is not None:
        z_image, z_text = (np.asarray(v, dtype=np.float64) for v in provider_vectors)
        for v in (z_image, z_text):
            if v.shape != (params.embed_dim,):
                raise ValueError(f"provider vector shape {v.shape} != ({params.embed_dim},)")
    else:
        z_image = encode_image(tile, params)
        z_text = encode_text(poi_to_text(poi_counts, top_k=top_k), params)
    return EnvEmbedding(z_image=z_image, z_text=z_text,
                        z_env=fuse(z_image, z_text, alpha, beta), alpha=alpha, beta=beta)


class EmbeddingProvider:
    """Precomputed embeddings: a JSON index over a float32 binary blob.

    The blob is a sequence of d_z-vectors; each (user_id, t) entry points at
    the image vector, with the text vector immediately following it.
    """

    def __init__(self, embed_dim: int, entries: dict[str, int], blob: np.ndarray):
        self.embed_dim = embed_dim
        self.entries = entries
        self.blob = blob

    @staticmethod
    def _key(user_id: str, t: int) -> str:
        return f"{user_id}:{t}"

    def lookup(self, user_id: str, t: int) -> tuple[np.ndarray, np.ndarray]:
        off = self.entries[self._key(user_id, t)]
        return (self.blob[off].astype(np.float64), self.blob[off + 1].astype(np.float64))

    @classmethod
    def load(cls, index_path: str | Path) -> "EmbeddingProvider":
        index_path = Path(index_path)
        index = json.loads(index_path.read_text())
        blob_path = index_path.parent / index["blob"]
        embed_dim = int(index["embed_dim"])
        raw = np.frombuffer(blob_path.read_bytes(), dtype="<f4")
        return cls(embed_dim, index["entries"], raw.reshape(-1, embed_dim))

    @classmethod
    def write(cls, index_path: str | Path,
              vectors: dict[tuple[str, int], tuple[np.ndarray, np.ndarray]],
              embed_dim: int) -> None:
        index_path = Path(index_path)
        blob_name = index_path.stem + ".bin"
        entries: dict[str, int] = {}
        rows = []
        for (user_id, t) in sorted(vectors):
            z_image, z_text = vectors[(user_id, t)]
            entries[cls._key(user_id, t)] = len(rows)
            rows.append(np.asarray(z_image, dtype="<f4"))
            rows.append(np.asarray(z_text, dtype="<f4"))
        blob = np.stack(rows) if rows else np.zeros((0, embed_dim), dtype="<f4")
        (index_path.parent / blob_name).write_bytes(blob.tobytes())
        index_path.write_text(json.dumps(
            {"version": 1, "embed_dim": embed_dim, "blob": blob_name, "entries": entries},
            indent=2, sort_keys=True))
