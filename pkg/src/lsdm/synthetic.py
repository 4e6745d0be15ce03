"""Synthetic traffic generator with known conditional structure.

Each synthetic user gets a location profile (a POI composition) which fixes
three things: a mild tilt of the Dirichlet draw of per-service traffic
preferences, an overall activity level (volume), and the POI counts / image
tile that describe the location. Traffic is volume times preference times a
shared diurnal curve with multiplicative noise whose hourly shock is mostly
common across services. The environment (POI counts, tile) is therefore
genuinely informative about the traffic level, which is what the
conditional model is supposed to exploit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .catalogs import NUM_POI_CATEGORIES, NUM_SERVICES
from .dataset import (DEFAULT_TILE_SHAPE, Dataset, ImageFeatureSeries,
                      PoiSeries, TrafficMatrix, UserRecord)
from .text import TextDescription, poi_to_text

TRAFFIC_SCALE = 5000.0

# Fraction of the multiplicative noise variance carried by an hourly shock
# shared across services (busy-hour effect); the rest is per-service. Kept
# high so the shock barely averages out across services: a station's volume
# level cannot be read off a short history window much more precisely than
# one hour's shared shock, which is what the environment encoder pays for.
NOISE_CORRELATION = 0.95

# Rows: services 1..10, columns: POI categories 1..17. Encodes which kinds
# of places boost which services (e.g. residential areas stream more).
_POI_TO_SERVICE = np.zeros((NUM_SERVICES, NUM_POI_CATEGORIES))
_POI_TO_SERVICE[0, [2, 10, 3]] = [3.0, 2.0, 1.0]    # Utilities <- Business, Government
_POI_TO_SERVICE[1, [7, 8]] = [2.5, 1.0]             # Games <- Residence, Entertainment
_POI_TO_SERVICE[2, [7, 8, 5]] = [3.0, 2.0, 1.0]     # Entertainment <- Residence, Entertainment
_POI_TO_SERVICE[3, [2, 10]] = [2.0, 2.0]            # News <- Business, Government
_POI_TO_SERVICE[4, [2, 13, 12]] = [2.0, 1.5, 1.5]   # Social <- Business, Restaurant, Shopping
_POI_TO_SERVICE[5, [4, 1, 9]] = [3.0, 2.0, 2.0]     # Travel <- Transport, Hotel, Scenic
_POI_TO_SERVICE[6, [3, 13, 12]] = [2.0, 2.0, 2.0]   # Lifestyle <- Life Service, Restaurant
_POI_TO_SERVICE[7, [4, 9, 15]] = [3.0, 1.5, 1.0]    # Navigation <- Transport, Scenic
_POI_TO_SERVICE[8, [7, 4, 6]] = [2.0, 1.5, 1.0]     # Music <- Residence, Transport, Sports
_POI_TO_SERVICE[9, [9, 5, 8]] = [2.0, 1.5, 1.5]     # Photo & Video <- Scenic, Culture

# POI-composition weights determining a location's overall activity level:
# office-heavy areas carry more traffic per user than transit corridors.
_VOLUME_WEIGHTS = np.zeros(NUM_POI_CATEGORIES)
_VOLUME_WEIGHTS[2] = 0.50    # Business Building
_VOLUME_WEIGHTS[8] = 0.15    # Entertainment
_VOLUME_WEIGHTS[7] = -0.15   # Residence
_VOLUME_WEIGHTS[4] = -0.55   # Transport Hub

# POI-composition weights (in hours) shifting the daily peak earlier:
# office- and transit-heavy areas are busiest around midday and the commute,
# residential areas in the evening. The realized shift for a location is
# rounded to whole hours.
_PEAK_SHIFT_WEIGHTS = np.zeros(NUM_POI_CATEGORIES)
_PEAK_SHIFT_WEIGHTS[2] = -15.0   # Business Building
_PEAK_SHIFT_WEIGHTS[4] = -11.0   # Transport Hub
_PEAK_SHIFT_WEIGHTS[8] = -8.0    # Entertainment


def _default_poi_profiles() -> dict[str, np.ndarray]:
    def vec(**kw):
        v = np.full(NUM_POI_CATEGORIES, 0.5)
        for idx, count in kw.items():
            v[int(idx[1:]) - 1] = count
        return v

    return {
        # p8=Residence, p3=Business, p5=Transport Hub, p9=Entertainment,
        # p13=Shopping, p14=Restaurant (1-based catalog ids)
        "residence": vec(p8=20, p14=4, p13=3, p15=2),
        "business": vec(p3=18, p11=5, p14=6, p13=4),
        "entertainment_district": vec(p9=15, p14=8, p13=8, p6=4),
        "transport": vec(p5=16, p2=6, p10=4, p16=3),
    }


def _default_diurnal() -> np.ndarray:
    """Per-service 24-hour activity curves: one shared daily rhythm with a
    small per-service phase offset around the evening peak."""
    hours = np.arange(24)
    profiles = np.empty((NUM_SERVICES, 24))
    amplitude = 0.45
    for s in range(NUM_SERVICES):
        peak = 19 + (s % 3) - 1          # evening peaks at 18, 19 or 20
        profiles[s] = np.exp(amplitude * np.cos(2 * np.pi * (hours - peak) / 24))
    return profiles


@dataclass(frozen=True)
class SyntheticConfig:
    num_users: int = 16
    weeks: int = 2
    dirichlet_concentration: np.ndarray = field(
        default_factory=lambda: np.full(NUM_SERVICES, 1000.0))
    diurnal_profiles: np.ndarray = field(default_factory=_default_diurnal)
    poi_profile_library: dict[str, np.ndarray] = field(default_factory=_default_poi_profiles)
    noise_level: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.num_users < 1 or self.weeks < 1:
            raise ValueError("num_users and weeks must be >= 1")
        conc = np.asarray(self.dirichlet_concentration, dtype=np.float64)
        if conc.shape != (NUM_SERVICES,) or np.any(conc <= 0):
            raise ValueError("dirichlet_concentration must be a positive N-vector")
        diurnal = np.asarray(self.diurnal_profiles, dtype=np.float64)
        if diurnal.shape != (NUM_SERVICES, 24) or np.any(diurnal < 0):
            raise ValueError("diurnal_profiles must be a non-negative (N, 24) array")
        if not self.poi_profile_library:
            raise ValueError("poi_profile_library must not be empty")
        for name, vec in self.poi_profile_library.items():
            v = np.asarray(vec, dtype=np.float64)
            if v.shape != (NUM_POI_CATEGORIES,) or np.any(v < 0):
                raise ValueError(f"profile {name!r} must be a non-negative P-vector")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")


def service_tilt(poi_profile: np.ndarray) -> np.ndarray:
    """Map a POI composition to a positive service-preference tilt (sums to 1).

    The raw POI-to-service affinities only nudge the mix away from uniform,
    so the location shifts service preferences mildly instead of dominating
    them.
    """
    comp = np.asarray(poi_profile, dtype=np.float64)
    comp = comp / comp.sum()
    affinity = _POI_TO_SERVICE @ comp + 0.02
    affinity = affinity / affinity.sum()
    tilt = 1.0 + 0.12 * (NUM_SERVICES * affinity - 1.0)
    return tilt / tilt.sum()


def volume_factor(poi_profile: np.ndarray) -> float:
    """Overall activity multiplier of a location, derived from its POIs."""
    comp = np.asarray(poi_profile, dtype=np.float64)
    comp = comp / comp.sum()
    return float(np.exp(_VOLUME_WEIGHTS @ comp))


def peak_shift(poi_profile: np.ndarray) -> int:
    """Whole-hour shift of a location's daily peak, derived from its POIs.

    Zero for residential areas (evening peak); negative (earlier peak) for
    business, transport and entertainment areas.
    """
    comp = np.asarray(poi_profile, dtype=np.float64)
    comp = comp / comp.sum()
    return int(np.rint(_PEAK_SHIFT_WEIGHTS @ comp))


def _tile_renderer() -> np.ndarray:
    # Fixed projection from POI-count space to tile space, independent of
    # the config seed so the tile "appearance" of a location is stable.
    rng = np.random.default_rng(714)
    flat = int(np.prod(DEFAULT_TILE_SHAPE))
    return rng.normal(0.0, 1.0, size=(flat, NUM_POI_CATEGORIES))


_TILE_PROJECTION = _tile_renderer()


def render_tile(poi_counts: np.ndarray) -> np.ndarray:
    """Deterministic tile rendering of a POI count (or composition) vector."""
    comp = np.asarray(poi_counts, dtype=np.float64)
    total = comp.sum()
    if total > 0:
        comp = comp / total
    return (_TILE_PROJECTION @ comp).reshape(DEFAULT_TILE_SHAPE)


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Generate a dataset deterministically from the config (seed included)."""
    rng = np.random.default_rng(config.seed)
    m = config.weeks * 168
    profile_names = sorted(config.poi_profile_library)
    users = []
    for i in range(config.num_users):
        uid = f"user_{i:04d}"
        profile_name = profile_names[rng.integers(len(profile_names))]
        poi_profile = np.asarray(config.poi_profile_library[profile_name], dtype=np.float64)

        tilt = service_tilt(poi_profile)
        alpha = np.asarray(config.dirichlet_concentration, dtype=np.float64) * tilt
        p_u = rng.dirichlet(alpha)
        scale = TRAFFIC_SCALE * volume_factor(poi_profile)

        # Location-dependent daily rhythm: the per-service curves are shared,
        # but the whole day is rotated so e.g. office areas peak at midday.
        hours = (np.arange(m) - peak_shift(poi_profile)) % 24
        diurnal = config.diurnal_profiles[:, hours].T          # (m, N)
        shared = rng.standard_normal((m, 1))                   # hourly shock
        own = rng.standard_normal((m, NUM_SERVICES))
        g = np.sqrt(NOISE_CORRELATION) * shared + np.sqrt(1 - NOISE_CORRELATION) * own
        traffic = scale * p_u * diurnal * (1.0 + config.noise_level * g)
        traffic = np.clip(traffic, 0.0, None)

        # The location itself is static: one POI census per user, repeated
        # hourly; tiles are a rendering of those counts plus sensor noise.
        census = rng.poisson(poi_profile).astype(np.int64)
        counts = np.tile(census, (m, 1))

        base = render_tile(census if census.sum() > 0 else poi_profile)
        tiles = base[None] + 0.05 * rng.standard_normal((m,) + DEFAULT_TILE_SHAPE)
        tiles = tiles.astype(np.float32)

        users.append(UserRecord(
            traffic=TrafficMatrix(uid, np.datetime64("2024-01-01T00", "h"), traffic),
            poi=PoiSeries(uid, counts),
            tiles=ImageFeatureSeries(uid, tiles),
        ))
    return Dataset(users=tuple(users), tile_shape=DEFAULT_TILE_SHAPE)


def generate_contrastive_pairs(
        n_pairs: int, seed: int,
        profile_library: dict[str, np.ndarray] | None = None,
) -> list[tuple[np.ndarray, TextDescription]]:
    """(tile, description) pairs for contrastive training and evaluation.

    Each pair is built from a fresh POI census drawn around a random mixture
    of library profiles, so both the tile and the text carry pair-specific
    information rather than only the coarse profile identity.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    library = profile_library if profile_library is not None else _default_poi_profiles()
    profiles = [np.asarray(library[k], dtype=np.float64) for k in sorted(library)]
    pairs: list[tuple[np.ndarray, TextDescription]] = []
    for _ in range(n_pairs):
        weights = rng.dirichlet(np.full(len(profiles), 0.8))
        mean = sum(w * p for w, p in zip(weights, profiles))
        census = rng.poisson(mean).astype(np.int64)
        tile = render_tile(census if census.sum() > 0 else mean)
        tile = tile + 0.05 * rng.standard_normal(tile.shape)
        pairs.append((tile.astype(np.float32), poi_to_text(census, top_k=5)))
    return pairs
