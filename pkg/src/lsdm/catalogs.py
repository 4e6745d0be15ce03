"""Service and POI category catalogs."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ServiceCatalog:
    """Ordered catalog of the app/service categories traffic is split over."""

    entries: tuple[tuple[int, str, str], ...]

    def __post_init__(self):
        if len(self.entries) != 10:
            raise ValueError(f"service catalog must have 10 entries, got {len(self.entries)}")
        ids = [e[0] for e in self.entries]
        if ids != list(range(1, 11)):
            raise ValueError("service ids must be 1..10 in order")
        names = [e[1] for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("service names must be unique")

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [e[1] for e in self.entries]


@dataclass(frozen=True)
class PoiCatalog:
    """Ordered catalog of point-of-interest categories."""

    entries: tuple[tuple[int, str], ...]

    def __post_init__(self):
        if len(self.entries) != 17:
            raise ValueError(f"POI catalog must have 17 entries, got {len(self.entries)}")
        ids = [e[0] for e in self.entries]
        if ids != list(range(1, 18)):
            raise ValueError("POI ids must be 1..17 in order")

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [e[1] for e in self.entries]


DEFAULT_SERVICES = ServiceCatalog(entries=(
    (1, "Utilities", "General utilities for daily use"),
    (2, "Games", "Gaming applications"),
    (3, "Entertainment", "Streaming platforms, video apps"),
    (4, "News", "News applications for current affairs"),
    (5, "Social Networking", "Apps for social interactions"),
    (6, "Travel", "Travel planning and booking applications"),
    (7, "Lifestyle", "Lifestyle-related apps"),
    (8, "Navigation", "Navigation and GPS tools"),
    (9, "Music", "Music streaming platforms"),
    (10, "Photo & Video", "Photography and video editing apps"),
))

DEFAULT_POIS = PoiCatalog(entries=(
    (1, "Medical Care"),
    (2, "Hotel"),
    (3, "Business"),
    (4, "Life Service"),
    (5, "Transport Hub"),
    (6, "Culture"),
    (7, "Sports"),
    (8, "Residence"),
    (9, "Entertainment"),
    (10, "Scenic Spot"),
    (11, "Government"),
    (12, "Factory"),
    (13, "Shopping"),
    (14, "Restaurant"),
    (15, "Education"),
    (16, "Landmark"),
    (17, "Other"),
))

NUM_SERVICES = DEFAULT_SERVICES.size
NUM_POI_CATEGORIES = DEFAULT_POIS.size
HOURS_PER_WEEK = 168
