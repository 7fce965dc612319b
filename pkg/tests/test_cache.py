import numpy as np
import pytest

from becv import params as P
from becv.cache import (
    CacheKey,
    FeatureCache,
    ReferenceStore,
    cache_use_counts,
    plan_lifetimes,
)
from becv.errors import CodecError
from becv.gop import build_plan
from becv.pipeline import SequenceJob, encode_sequence


class TestPlanLifetimes:
    def test_ip8_frame0_reference_census(self):
        plan = build_plan(8, 9)
        uses = plan_lifetimes(plan)
        referencing = [s.t for s in plan.schedules if 0 in s.reference_set()]
        # primaries of 1, 2, 4; extended for 3 (back span 3-1-2) and for
        # 5 and 6, whose back-primary intervals reach the intra anchor
        assert referencing == [1, 2, 3, 4, 5, 6]
        assert uses[0] == 6

    def test_last_coded_frame_never_cached(self):
        plan = build_plan(8, 9)
        uses = plan_lifetimes(plan)
        last = plan.coding_order[-1]
        assert uses[last] == 0

    def test_counts_sum_to_total_reference_set_sizes(self):
        for ip, n in ((2, 7), (8, 9), (8, 13), (16, 33)):
            plan = build_plan(ip, n)
            uses = plan_lifetimes(plan)
            total = sum(len(s.reference_set()) for s in plan.schedules)
            assert sum(uses.values()) == total


class TestFeatureCache:
    def test_miss_then_hit(self):
        key = CacheKey(0, "feature", 1, "encoder")
        cache = FeatureCache({key: 3})
        calls = []

        def producer():
            calls.append(1)
            return np.ones(3)

        cache.fetch(key, producer)
        cache.fetch(key, producer)
        assert cache.stats.misses == 1 and cache.stats.hits == 1
        assert len(calls) == 1

    def test_single_use_never_stored(self):
        key = CacheKey(0, "key", 0, "decoder")
        cache = FeatureCache({key: 1})
        cache.fetch(key, lambda: np.zeros(2))
        assert cache.stats.stores == 0
        assert cache.live_entries == 0

    def test_eviction_at_zero_budget(self):
        key = CacheKey(0, "value", 2, "encoder")
        cache = FeatureCache({key: 2})
        cache.fetch(key, lambda: np.zeros(2))
        assert cache.live_entries == 1
        cache.fetch(key, lambda: np.zeros(2))
        assert cache.live_entries == 0
        assert cache.stats.evictions == cache.stats.stores == 1

    def test_disabled_cache_always_recomputes(self):
        key = CacheKey(0, "feature", 1, "encoder")
        cache = FeatureCache({key: 5}, enabled=False)
        calls = []
        for _ in range(4):
            cache.fetch(key, lambda: calls.append(1) or np.zeros(1))
        assert len(calls) == 4
        assert cache.stats.hits == 0
        assert cache.live_entries == 0

    def test_producer_failure_leaves_cache_consistent(self):
        key = CacheKey(0, "feature", 1, "encoder")
        cache = FeatureCache({key: 3})

        def boom():
            raise RuntimeError("producer failed")

        with pytest.raises(RuntimeError):
            cache.fetch(key, boom)
        out = cache.fetch(key, lambda: np.full(2, 7.0))
        assert (out == 7.0).all()


class TestReferenceStore:
    def test_missing_reference_reported(self):
        store = ReferenceStore.for_plan(build_plan(8, 9))
        with pytest.raises(CodecError):
            store.get(4)

    def test_release_evicts_after_last_use(self):
        plan = build_plan(2, 3)
        store = ReferenceStore.for_plan(plan)
        from becv.cache import ReferenceEntry

        store.put(0, ReferenceEntry(np.zeros(1), np.zeros(1)))
        assert store.live_entries == 1
        store.release((0,))  # only frame 1 references frame 0
        assert store.live_entries == 0


@pytest.fixture(scope="module")
def run():
    ps = P.generate_seeded(3)
    frames = np.random.default_rng(0).uniform(0, 1, (9, 3, 16, 16)).astype(np.float32)
    stats = {}
    stream, _ = encode_sequence(
        SequenceJob(frames=frames, intra_period=8, qp=1), ps, stats_out=stats
    )
    return ps, frames, stream, stats


class TestPipelineCacheBehavior:
    def test_no_leak_and_exact_budget(self, run):
        _, _, _, stats = run
        c = stats["cache"]
        assert stats["cache_live"] == 0
        assert c.evictions == c.stores
        assert c.hits > 0

    def test_peak_entries_bound(self, run):
        _, _, _, stats = run
        # at most 4 concurrently live reference frames x 8 derived artifacts
        assert stats["cache"].peak_entries <= 4 * 3 * 3

    def test_planned_budget_is_exactly_consumed(self, run):
        ps, frames, _, stats = run
        plan = build_plan(8, 9)
        budget = sum(cache_use_counts(plan, "encoder").values())
        c = stats["cache"]
        assert c.hits + c.misses == budget

    def test_cache_off_identical_stream(self, run):
        ps, frames, stream, _ = run
        off, _ = encode_sequence(
            SequenceJob(frames=frames, intra_period=8, qp=1, cache_enabled=False), ps
        )
        assert off == stream
