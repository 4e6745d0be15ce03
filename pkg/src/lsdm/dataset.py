"""Dataset model and file ingestion.

A dataset is a collection of aligned per-user triples: an hourly traffic
matrix (M x N services), a POI count series (M x P categories), and a series
of M image-feature tiles. On-disk layout is a JSON manifest referencing one
traffic CSV, one POI CSV, and one binary tile file per user.
"""

from __future__ import annotations

import csv
import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalogs import NUM_POI_CATEGORIES, NUM_SERVICES

TILE_MAGIC = b"LSDT"
DEFAULT_TILE_SHAPE = (8, 8, 3)


class DataValidationError(ValueError):
    """Raised when an input file violates the dataset contracts."""


@dataclass(frozen=True)
class TrafficMatrix:
    user_id: str
    start_time: np.datetime64
    values: np.ndarray  # (M, N) non-negative float64

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] != NUM_SERVICES:
            raise DataValidationError(f"traffic matrix must be (M, {NUM_SERVICES}), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataValidationError(f"user {self.user_id}: non-finite traffic value")
        if np.any(v < 0):
            raise DataValidationError(f"user {self.user_id}: negative traffic value")

    @property
    def num_hours(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class PoiSeries:
    user_id: str
    counts: np.ndarray  # (M, P) non-negative int64

    def __post_init__(self):
        c = self.counts
        if c.ndim != 2 or c.shape[1] != NUM_POI_CATEGORIES:
            raise DataValidationError(f"POI series must be (M, {NUM_POI_CATEGORIES}), got {c.shape}")
        if np.any(c < 0):
            raise DataValidationError(f"user {self.user_id}: negative POI count")


@dataclass(frozen=True)
class ImageFeatureSeries:
    user_id: str
    tiles: np.ndarray  # (M, h, w, c) finite float32

    def __post_init__(self):
        t = self.tiles
        if t.ndim != 4:
            raise DataValidationError(f"tiles must be (M, h, w, c), got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise DataValidationError(f"user {self.user_id}: non-finite tile entry")

    @property
    def tile_shape(self) -> tuple[int, int, int]:
        return self.tiles.shape[1:]


@dataclass(frozen=True)
class UserRecord:
    traffic: TrafficMatrix
    poi: PoiSeries
    tiles: ImageFeatureSeries

    def __post_init__(self):
        m = self.traffic.num_hours
        if self.poi.counts.shape[0] != m:
            raise DataValidationError(
                f"user {self.traffic.user_id}: POI rows ({self.poi.counts.shape[0]}) "
                f"misaligned with traffic rows ({m})"
            )
        if self.tiles.tiles.shape[0] != m:
            raise DataValidationError(
                f"user {self.traffic.user_id}: tile count ({self.tiles.tiles.shape[0]}) "
                f"misaligned with traffic rows ({m})"
            )
        ids = {self.traffic.user_id, self.poi.user_id, self.tiles.user_id}
        if len(ids) != 1:
            raise DataValidationError(f"mismatched user ids in record: {sorted(ids)}")

    @property
    def user_id(self) -> str:
        return self.traffic.user_id

    @property
    def num_hours(self) -> int:
        return self.traffic.num_hours


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of aligned user records, sorted by user id."""

    users: tuple[UserRecord, ...]
    tile_shape: tuple[int, int, int] = DEFAULT_TILE_SHAPE

    def __post_init__(self):
        for u in self.users:
            if u.tiles.tile_shape != tuple(self.tile_shape):
                raise DataValidationError(
                    f"user {u.user_id}: tile shape {u.tiles.tile_shape} "
                    f"!= dataset tile shape {tuple(self.tile_shape)}"
                )

    def __len__(self) -> int:
        return len(self.users)

    def __iter__(self):
        return iter(self.users)

    def user(self, user_id: str) -> UserRecord:
        for u in self.users:
            if u.user_id == user_id:
                return u
        raise KeyError(f"unknown user id {user_id!r}")


def _num_workers() -> int:
    raw = os.environ.get("LSDM_NUM_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"LSDM_NUM_WORKERS must be an integer >= 1, got {raw!r}")
    if n < 1:
        raise ValueError(f"LSDM_NUM_WORKERS must be >= 1, got {n}")
    return n


def read_matrix_csv(path: Path, expected_cols: int, kind: str,
                    integer: bool = False) -> tuple[str, np.ndarray]:
    """Read a "user_id,t,v1..vk" CSV into (user_id, (M, k) array).

    Rows must be a contiguous 0-based hour index. Values must be
    non-negative, and integers when `integer` is set.
    """
    rows: list[list[float]] = []
    user_id: str | None = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != expected_cols + 2:
            raise DataValidationError(f"{path}: malformed {kind} header: {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != expected_cols + 2:
                raise DataValidationError(f"{path}:{lineno}: expected {expected_cols + 2} fields, got {len(row)}")
            uid, t_str, *vals = row
            if user_id is None:
                user_id = uid
            elif uid != user_id:
                raise DataValidationError(f"{path}:{lineno}: mixed user ids {user_id!r} and {uid!r}")
            try:
                t = int(t_str)
                parsed = [float(v) for v in vals]
            except ValueError as exc:
                raise DataValidationError(f"{path}:{lineno}: malformed row: {exc}") from None
            if t != len(rows):
                raise DataValidationError(f"{path}:{lineno}: hour index {t}, expected {len(rows)}")
            for j, v in enumerate(parsed):
                if not np.isfinite(v) or v < 0:
                    raise DataValidationError(f"{path}:{lineno}: column {j + 1} has invalid value {v}")
                if integer and v != int(v):
                    raise DataValidationError(f"{path}:{lineno}: column {j + 1} is not an integer: {v}")
            rows.append(parsed)
    if user_id is None or not rows:
        raise DataValidationError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=np.int64 if integer else np.float64)
    return user_id, arr


def write_matrix_csv(path: Path, user_id: str, values: np.ndarray, prefix: str) -> None:
    k = values.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "t"] + [f"{prefix}{i + 1}" for i in range(k)])
        for t, row in enumerate(values):
            writer.writerow([user_id, t] + [format(v) for v in row.tolist()])


def read_tiles(path: Path) -> np.ndarray:
    """Read a tile file: 16-byte header (magic, M, h*w*c, padding) + float32 payload.

    Returns a flat (M, h*w*c) float32 array; the caller reshapes to the
    manifest tile shape.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != TILE_MAGIC:
        raise DataValidationError(f"{path}: bad tile file header")
    m, flat = struct.unpack("<II", raw[4:12])
    if raw[12:16] != b"\x00\x00\x00\x00":
        raise DataValidationError(f"{path}: bad tile header padding")
    expected = 16 + 4 * m * flat
    if len(raw) != expected:
        raise DataValidationError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=16)
    return data.reshape(m, flat)


def write_tiles(path: Path, tiles: np.ndarray) -> None:
    m = tiles.shape[0]
    flat = int(np.prod(tiles.shape[1:]))
    payload = np.ascontiguousarray(tiles, dtype="<f4").reshape(m, flat)
    with open(path, "wb") as fh:
        fh.write(TILE_MAGIC)
        fh.write(struct.pack("<II", m, flat))
        fh.write(b"\x00\x00\x00\x00")
        fh.write(payload.tobytes())


def _load_user(entry: dict, root: Path, tile_shape: tuple[int, int, int]) -> UserRecord:
    for key in ("user_id", "traffic_csv", "poi_csv", "tiles_bin"):
        if key not in entry:
            raise DataValidationError(f"manifest user entry missing key {key!r}")
    for key in ("traffic_csv", "poi_csv", "tiles_bin"):
        p = root / entry[key]
        if not p.exists():
            raise FileNotFoundError(f"missing file referenced by manifest: {p}")

    uid_t, traffic = read_matrix_csv(root / entry["traffic_csv"], NUM_SERVICES, "traffic")
    uid_p, poi = read_matrix_csv(root / entry["poi_csv"], NUM_POI_CATEGORIES, "POI", integer=True)
    flat_tiles = read_tiles(root / entry["tiles_bin"])
    uid = entry["user_id"]
    if uid_t != uid or uid_p != uid:
        raise DataValidationError(f"user id mismatch: manifest {uid!r}, traffic {uid_t!r}, poi {uid_p!r}")

    h, w, c = tile_shape
    if flat_tiles.shape[1] != h * w * c:
        raise DataValidationError(
            f"user {uid}: tile payload width {flat_tiles.shape[1]} != h*w*c = {h * w * c}"
        )
    tiles = flat_tiles.reshape(-1, h, w, c)
    return UserRecord(
        traffic=TrafficMatrix(uid, np.datetime64("2024-01-01T00", "h"), traffic),
        poi=PoiSeries(uid, poi),
        tiles=ImageFeatureSeries(uid, tiles),
    )


def load_dataset(manifest_path: str | Path) -> Dataset:
    """Load an aligned dataset from a JSON manifest."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("version") != 1:
        raise DataValidationError(f"unsupported manifest version: {manifest.get('version')!r}")
    if manifest.get("services", NUM_SERVICES) != NUM_SERVICES:
        raise DataValidationError("manifest services count must be 10")
    if manifest.get("poi_categories", NUM_POI_CATEGORIES) != NUM_POI_CATEGORIES:
        raise DataValidationError("manifest poi_categories count must be 17")
    tile_shape = tuple(manifest.get("tile_shape", DEFAULT_TILE_SHAPE))
    if len(tile_shape) != 3:
        raise DataValidationError(f"tile_shape must have 3 entries, got {tile_shape}")

    root = manifest_path.parent
    entries = sorted(manifest["users"], key=lambda e: str(e.get("user_id", "")))
    workers = _num_workers()
    if workers == 1 or len(entries) <= 1:
        users = [_load_user(e, root, tile_shape) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            users = list(pool.map(lambda e: _load_user(e, root, tile_shape), entries))
    return Dataset(users=tuple(users), tile_shape=tile_shape)


def save_dataset(dataset: Dataset, out_dir: str | Path) -> Path:
    """Write a dataset in the manifest layout; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for u in dataset.users:
        traffic_name = f"{u.user_id}_traffic.csv"
        poi_name = f"{u.user_id}_poi.csv"
        tiles_name = f"{u.user_id}_tiles.bin"
        write_matrix_csv(out_dir / traffic_name, u.user_id, u.traffic.values, "s")
        write_matrix_csv(out_dir / poi_name, u.user_id, u.poi.counts, "p")
        write_tiles(out_dir / tiles_name, u.tiles.tiles)
        entries.append({
            "user_id": u.user_id,
            "traffic_csv": traffic_name,
            "poi_csv": poi_name,
            "tiles_bin": tiles_name,
        })
    manifest = {
        "version": 1,
        "users": entries,
        "hours_per_week": 168,
        "services": NUM_SERVICES,
        "poi_categories": NUM_POI_CATEGORIES,
        "tile_shape": list(dataset.tile_shape),
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest_path
