import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from augcap.composer import (
    AugmentationPlan,
    PlanParams,
    assign_order,
    execute_plan,
    execute_plan_unpadded,
    sample_plan,
)
from augcap.dsp import CombineKind, CombineSpec, TransformKind, TransformSpec
from augcap.errors import CorpusTooSmall, MissingSource
from augcap.preprocess import SourceClipMeta

from conftest import SR, tone

CONCAT = CombineSpec(CombineKind.CONCATENATE)


def mix(snr=-3.0, frac=0.25):
    return CombineSpec(CombineKind.MIX, snr_db=snr, offset_fraction=frac)


def corpus(n=8):
    return [SourceClipMeta(f"s{i}", "x.wav", (f"label {i}",), 0.0, 2.0 + i) for i in range(n)]


def loader_for(durations):
    clips = {f"s{i}": tone(200 + 50 * i, d) for i, d in enumerate(durations)}
    return clips.__getitem__


def plan(sources, combines=(), transforms=None, seed=1):
    n = len(sources)
    return AugmentationPlan(seed, tuple(sources), tuple(f"sound {s}" for s in sources),
                            transforms or ((),) * n, tuple(combines))


class TestAssignOrder:
    def test_single(self):
        assert assign_order([]) == [0]

    def test_mixed(self):
        assert assign_order([CONCAT, mix(), CONCAT]) == [0, 1, 1, 2]

    def test_all_mix(self):
        assert assign_order([mix(), mix()]) == [0, 0, 0]

    @given(st.lists(st.booleans(), max_size=4))
    def test_invariant(self, is_mix):
        orders = assign_order([mix() if m else CONCAT for m in is_mix])
        assert orders[0] == 0
        for prev, cur, m in zip(orders, orders[1:], is_mix):
            assert cur == prev + (0 if m else 1)
        assert max(orders) == is_mix.count(False)


class TestSamplePlan:
    def test_degenerate_probabilities(self, rng):
        for _ in range(50):
            p = sample_plan(rng, corpus(), PlanParams(p_t=0.0, p_c=0.0))
            assert all(not ts for ts in p.per_clip_transforms)
            assert all(c.kind is CombineKind.CONCATENATE for c in p.combines)
            assert list(p.orders) == list(range(p.n))

    def test_all_mix(self, rng):
        plans = [sample_plan(rng, corpus(), PlanParams(p_t=0.0, p_c=1.0)) for _ in range(60)]
        three = [p for p in plans if p.n == 3]
        assert three
        assert all(p.orders == (0, 0, 0) for p in three)

    def test_distinct_sources(self, rng):
        for _ in range(100):
            p = sample_plan(rng, corpus(5))
            assert len(set(p.source_ids)) == p.n

    def test_corpus_too_small(self, rng):
        with pytest.raises(CorpusTooSmall):
            sample_plan(rng, corpus(4))

    def test_reproducible(self):
        a = sample_plan(np.random.default_rng(99), corpus())
        b = sample_plan(np.random.default_rng(99), corpus())
        assert a.to_json() == b.to_json()
        assert a.hash() == b.hash()

    def test_statistics(self):
        rng = np.random.default_rng(0)
        plans = [sample_plan(rng, corpus()) for _ in range(20000)]
        junctions = [c.kind is CombineKind.MIX for p in plans for c in p.combines]
        pairs = sum(p.n for p in plans) * 4
        applied = sum(len(ts) for p in plans for ts in p.per_clip_transforms)
        ns = np.bincount([p.n for p in plans], minlength=6)[1:] / len(plans)
        assert np.mean(junctions) == pytest.approx(0.2, abs=0.015)
        assert applied / pairs == pytest.approx(0.3, abs=0.01)
        np.testing.assert_allclose(ns, 0.2, atol=0.015)

    def test_json_round_trip(self, rng):
        for _ in range(30):
            p = sample_plan(rng, corpus())
            assert AugmentationPlan.from_dict(p.to_dict()) == p
            assert AugmentationPlan.from_dict(p.to_dict()).to_json() == p.to_json()


class TestPlanValidation:
    def test_orders_must_match(self):
        with pytest.raises(ValueError):
            AugmentationPlan(1, ("a", "b"), ("a", "b"), ((), ()), (CONCAT,), (0, 0))

    def test_one_transform_per_kind(self):
        t = TransformSpec(TransformKind.VOLUME, 0.7)
        with pytest.raises(ValueError):
            plan(["s0"], transforms=((t, t),))

    def test_size_limits(self):
        with pytest.raises(ValueError):
            plan([f"s{i}" for i in range(6)], [CONCAT] * 5)


class TestExecutePlan:
    def test_single_clip_identity(self):
        out, desc = execute_plan(plan(["s0"]), loader_for([4.0]))
        assert len(out) == 160000
        np.testing.assert_array_equal(out.samples[:64000], tone(200, 4.0).samples)
        assert not out.samples[64000:].any()
        assert len(desc) == 1 and desc[0].order == 0 and desc[0].description == ()

    def test_concatenation_length(self):
        p = plan(["s0", "s1"], [CONCAT])
        raw = execute_plan_unpadded(p, loader_for([3.0, 4.0]))
        assert raw.duration_seconds == 7.5
        assert p.orders == (0, 1)

    def test_mix_background(self):
        p = plan(["s0", "s1"], [mix(-3.0)])
        _, desc = execute_plan(p, loader_for([3.0, 2.0]))
        assert [d.order for d in desc] == [0, 0]
        assert "background" in desc[1].description
        assert "background" not in desc[0].description

    def test_keywords_follow_transform_order(self):
        ts = (TransformSpec(TransformKind.SPEED, 1.1), TransformSpec(TransformKind.VOLUME, 0.6))
        p = plan(["s0", "s1"], [mix()], transforms=((), ts))
        assert p.descriptors()[1].description == ("background", "loud", "fast")

    def test_missing_source(self):
        with pytest.raises(MissingSource):
            execute_plan(plan(["nope"]), loader_for([1.0]))

    def test_deterministic_with_duration(self):
        ts = (TransformSpec(TransformKind.DURATION, 0.5),)
        p = plan(["s0", "s1"], [mix(2.0, 0.6)], transforms=(ts, ts), seed=42)
        a, _ = execute_plan(p, loader_for([3.0, 2.5]))
        b, _ = execute_plan(p, loader_for([3.0, 2.5]))
        assert np.array_equal(a.samples, b.samples)

    def test_long_result_truncated(self):
        p = plan(["s0", "s1", "s2"], [CONCAT, CONCAT])
        out, _ = execute_plan(p, loader_for([5.0, 5.0, 5.0]))
        assert len(out) == 160000

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_output_is_ten_seconds(self, seed):
        rng = np.random.default_rng(seed)
        p = sample_plan(rng, corpus(8), PlanParams(p_t=0.5, p_c=0.5))
        out, desc = execute_plan(p, loader_for([2.0 + 0.5 * i for i in range(8)]))
        assert len(out) == 160000 and out.sample_rate == SR
        assert len(desc) == p.n
        orders = sorted({d.order for d in desc})
        assert orders == list(range(len(orders)))
        assert max(orders) == sum(c.kind is CombineKind.CONCATENATE for c in p.combines)
