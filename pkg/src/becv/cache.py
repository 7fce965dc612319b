"""Plan-driven reuse of per-reference artifacts.

Two stores cooperate. The reference store (always on) holds what decoding
fundamentally needs: the scale-0 propagated feature, the reconstruction,
and the decoded motion pair of every frame that later frames reference.
The feature cache (toggleable) memoizes artifacts derived from those:
downsampled features and attention key/value embeddings. Disabling it only
forces recomputation; outputs never change.

Lifetimes come straight from the plan: each key's use count is the exact
number of fetches the pipeline will issue, so the last fetch evicts the
entry and nothing survives the sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CodecError
from .gop import GopPlan

KINDS = ("feature", "key", "value")
SIDES = ("encoder", "decoder")


@dataclass(frozen=True)
class CacheKey:
    time: int
    kind: str
    scale: int
    side: str


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    stores: int = 0
    evictions: int = 0
    peak_entries: int = 0

    @property
    def lookups(self) -> int:
        return self.hits + self.misses


def plan_lifetimes(plan: GopPlan) -> dict[int, int]:
    """Frames referencing each frame after its own decode (0 = never cached)."""
    uses = {t: 0 for t in range(plan.frame_count)}
    for sched in plan.schedules:
        for r in sched.reference_set():
            uses[r] += 1
    return uses


def _slot_counts(plan: GopPlan) -> tuple[dict[int, int], dict[int, int]]:
    primary: dict[int, int] = {}
    extended: dict[int, int] = {}
    for sched in plan.schedules:
        if sched.is_intra:
            continue
        for r in (sched.ref_back, sched.ref_fwd):
            primary[r] = primary.get(r, 0) + 1
        for r in sched.extended_refs():
            extended[r] = extended.get(r, 0) + 1
    return primary, extended


def cache_use_counts(plan: GopPlan, side: str) -> dict[CacheKey, int]:
    """Exact fetch counts per cache key for one pipeline side.

    The encoder touches reference data twice per frame (analysis contexts
    plus the simulated decode), the decoder once. Key/value producers each
    pull the feature of their scale once, and the scale-2 feature producer
    pulls scale 1 once; those nested fetches are part of the budget.
    """
    if side not in SIDES:
        raise CodecError(f"unknown cache side {side!r}")
    rounds = 2 if side == "encoder" else 1
    primary, extended = _slot_counts(plan)
    uses: dict[CacheKey, int] = {}
    for r in range(plan.frame_count):
        sp = primary.get(r, 0)
        se = extended.get(r, 0)
        if sp + se == 0:
            continue
        uses[CacheKey(r, "feature", 1, side)] = rounds * (sp + se) + 3
        uses[CacheKey(r, "feature", 2, side)] = rounds * (sp + se) + 2
        if sp:
            uses[CacheKey(r, "key", 0, side)] = rounds * sp
            uses[CacheKey(r, "value", 0, side)] = rounds * sp
        for scale in (1, 2):
            uses[CacheKey(r, "key", scale, side)] = rounds * (sp + se)
            uses[CacheKey(r, "value", scale, side)] = rounds * (sp + se)
    return uses


class FeatureCache:
    """Memoizer with exact plan-derived use counts.

    On a miss the producer runs; the result is stored only if more uses
    remain. Every fetch decrements the key's budget and the entry is
    evicted the moment it hits zero, so stores always equal evictions by
    sequence end.
    """

    def __init__(self, uses: dict[CacheKey, int], enabled: bool = True):
        self._uses = dict(uses)
        self._store: dict[CacheKey, np.ndarray] = {}
        self.enabled = enabled
        self.stats = CacheStats()

    def fetch(self, key: CacheKey, producer: Callable[[], np.ndarray]) -> np.ndarray:
        if not self.enabled:
            self.stats.misses += 1
            return producer()
        remaining = self._uses.get(key, 0)
        if key in self._store:
            self.stats.hits += 1
            value = self._store[key]
        else:
            self.stats.misses += 1
            value = producer()
            if remaining > 1:
                self._store[key] = value
                self.stats.stores += 1
                self.stats.peak_entries = max(self.stats.peak_entries, len(self._store))
        remaining -= 1
        self._uses[key] = remaining
        if remaining <= 0 and key in self._store:
            del self._store[key]
            self.stats.evictions += 1
        return value

    @property
    def live_entries(self) -> int:
        return len(self._store)


@dataclass
class ReferenceEntry:
    feature: np.ndarray                 # propagated scale-0 feature
    recon: np.ndarray                   # clipped reconstruction (padded dims)
    flow_back: np.ndarray | None = None  # decoded motion toward the back reference
    flow_fwd: np.ndarray | None = None


@dataclass
class ReferenceStore:
    """Decoded-reference buffer with frame-level lifetimes."""

    uses: dict[int, int]
    entries: dict[int, ReferenceEntry] = field(default_factory=dict)

    @classmethod
    def for_plan(cls, plan: GopPlan) -> "ReferenceStore":
        counts: dict[int, int] = {}
        for sched in plan.schedules:
            for r in set(sched.reference_set()):
                counts[r] = counts.get(r, 0) + 1
        return cls(uses=counts)

    def get(self, t: int, scale_hint: int = 0) -> ReferenceEntry:
        try:
            return self.entries[t]
        except KeyError:
            raise CodecError(
                f"reference frame {t} not available (scale {scale_hint}); plan violated"
            ) from None

    def put(self, t: int, entry: ReferenceEntry) -> None:
        if self.uses.get(t, 0) > 0:
            self.entries[t] = entry

    def release(self, referenced: tuple[int, ...]) -> None:
        for r in set(referenced):
            left = self.uses.get(r, 0) - 1
            self.uses[r] = left
            if left <= 0:
                self.entries.pop(r, None)

    @property
    def live_entries(self) -> int:
        return len(self.entries)
