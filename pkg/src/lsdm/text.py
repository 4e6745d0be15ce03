"""POI counts to deterministic textual descriptions over a closed vocabulary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalogs import DEFAULT_POIS, PoiCatalog

# Count buckets keep the vocabulary closed: the token for a count depends
# only on which bucket it falls in.
_BUCKETS = [(0, 0, "<cnt:0>"), (1, 2, "<cnt:1-2>"), (3, 5, "<cnt:3-5>"),
            (6, 10, "<cnt:6-10>"), (11, None, "<cnt:11+>")]

_GLUE = ["area", "with", "no", "recorded", "points", "of", "interest"]


def _poi_token(name: str) -> str:
    return name.lower().replace(" & ", "_").replace(" ", "_")


def build_vocabulary(catalog: PoiCatalog = DEFAULT_POIS) -> dict[str, int]:
    tokens = list(_GLUE) + [b[2] for b in _BUCKETS] + [_poi_token(n) for n in catalog.names]
    return {tok: i for i, tok in enumerate(tokens)}


VOCABULARY = build_vocabulary()
VOCAB_SIZE = len(VOCABULARY)


def count_bucket_token(count: int) -> str:
    for lo, hi, tok in _BUCKETS:
        if count >= lo and (hi is None or count <= hi):
            return tok
    raise ValueError(f"negative count {count}")


@dataclass(frozen=True)
class TextDescription:
    text: str
    token_ids: tuple[int, ...]

    def __post_init__(self):
        for tid in self.token_ids:
            if not 0 <= tid < VOCAB_SIZE:
                raise ValueError(f"token id {tid} outside vocabulary")


def poi_to_text(counts: np.ndarray, catalog: PoiCatalog = DEFAULT_POIS,
                top_k: int = 3) -> TextDescription:
    """Render the top_k nonzero POI categories by count as a fixed template.

    Ordering is by descending count with ties broken by ascending catalog
    id, so the output is a pure function of the counts.
    """
    counts = np.asarray(counts)
    if counts.shape != (catalog.size,):
        raise ValueError(f"counts must have length {catalog.size}, got {counts.shape}")
    if np.any(counts < 0):
        raise ValueError("POI counts must be non-negative")
    if not 1 <= top_k <= catalog.size:
        raise ValueError(f"top_k must be in [1, {catalog.size}]")

    ranked = sorted(
        ((int(c), cid, name) for (cid, name), c in zip(catalog.entries, counts)),
        key=lambda item: (-item[0], item[1]),
    )
    picked = [(c, name) for c, _, name in ranked[:top_k] if c > 0]

    if not picked:
        text = "area with no recorded points of interest"
        tokens = ["area", "with", "no", "recorded", "points", "of", "interest"]
    else:
        parts = [f"{c} {name.lower()}" for c, name in picked]
        text = f"area with {', '.join(parts)} points of interest"
        tokens = ["area", "with"]
        for c, name in picked:
            tokens.append(count_bucket_token(c))
            tokens.append(_poi_token(name))
        tokens += ["points", "of", "interest"]

    return TextDescription(text=text, token_ids=tuple(VOCABULARY[t] for t in tokens))
