import itertools
import time

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from config.settings import FieldMode
from src.core.channel import (
    CoherencePattern,
    EqualityRequirement,
    LinkId,
    NoSupersymbolFound,
    SupersymbolPlan,
    block_index,
    coherence_ratio_patterns,
    find_supersymbol,
    realize_partition,
    sample_realization,
    staggered_patterns,
    synchronized_plan,
    trial_seed,
)

A, B = LinkId(0, 0), LinkId(0, 1)
STAGGER_TEMPLATE = EqualityRequirement(2, {A: ((0,), (1,)), B: ((0, 1),)})


class TestBlockIndex:
    def test_aligned_blocks(self):
        p = CoherencePattern(A, 2, 0)
        assert [block_index(p, t) for t in range(4)] == [0, 0, 1, 1]

    def test_offset_blocks(self):
        p = CoherencePattern(A, 2, 1)
        assert [block_index(p, t) for t in range(5)] == [0, 1, 1, 2, 2]

    def test_unit_coherence_is_per_slot(self):
        p = CoherencePattern(A, 1, 0)
        assert [block_index(p, t) for t in range(5)] == list(range(5))

    def test_negative_slot(self):
        with pytest.raises(ValueError):
            block_index(CoherencePattern(A, 2), -1)

    def test_offset_must_be_below_coherence_length(self):
        with pytest.raises(ValueError):
            CoherencePattern(A, 2, 2)


class TestFindSupersymbol:
    def test_staggered_pair(self):
        patterns = [CoherencePattern(A, 2, 0), CoherencePattern(B, 2, 1)]
        plan = find_supersymbol(patterns, STAGGER_TEMPLATE, search_horizon=8)
        assert plan.slots == (1, 2)
        assert plan.partition(A) == ((0,), (1,))
        assert plan.partition(B) == ((0, 1),)

    def test_coherence_ratio_pair(self):
        patterns = coherence_ratio_patterns(A, B, 2)
        plan = find_supersymbol(patterns, STAGGER_TEMPLATE, search_horizon=8)
        assert plan.slots == (1, 2)

    def test_identical_patterns_cannot_stagger(self):
        patterns = [CoherencePattern(A, 2, 0), CoherencePattern(B, 2, 0)]
        with pytest.raises(NoSupersymbolFound):
            find_supersymbol(patterns, STAGGER_TEMPLATE, search_horizon=8)

    def test_three_slot_template(self):
        req = EqualityRequirement(3, {A: ((0,), (1, 2)), B: ((0, 1), (2,))})
        plan = find_supersymbol(staggered_patterns({A: 0, B: 1}), req)
        assert plan.slots == (1, 2, 3)

    def test_interleaving_allowed(self):
        # A 每个时隙都变，B 在 T=4 内恒定
        req = EqualityRequirement(2, {A: ((0,), (1,)), B: ((0, 1),)})
        patterns = [CoherencePattern(A, 1, 0), CoherencePattern(B, 4, 0)]
        plan = find_supersymbol(patterns, req)
        assert plan.satisfies(req, patterns)

    def test_missing_pattern(self):
        with pytest.raises(ValueError):
            find_supersymbol([CoherencePattern(A, 2, 0)], STAGGER_TEMPLATE)

    def test_horizon_shorter_than_supersymbol(self):
        with pytest.raises(ValueError):
            find_supersymbol(staggered_patterns({A: 0, B: 1}), STAGGER_TEMPLATE, search_horizon=1)

    def test_empty_requirement_takes_first_slots(self):
        plan = find_supersymbol([], EqualityRequirement(2, {}))
        assert plan.slots == (0, 1)

    def test_long_coherence_without_staggering_fails_fast(self):
        req = EqualityRequirement(3, {A: ((0,), (1, 2)), B: ((0, 1), (2,))})
        started = time.perf_counter()
        with pytest.raises(NoSupersymbolFound):
            find_supersymbol(coherence_ratio_patterns(A, B, 50), req)
        assert time.perf_counter() - started < 2.0

    def test_long_staggered_coherence(self):
        req = EqualityRequirement(3, {A: ((0,), (1, 2)), B: ((0, 1), (2,))})
        started = time.perf_counter()
        plan = find_supersymbol(staggered_patterns({A: 0, B: 25}, coherence_length=50), req)
        assert time.perf_counter() - started < 2.0
        assert plan.slots == (49, 50, 75)

    @settings(max_examples=60, deadline=None)
    @given(
        t_a=st.integers(1, 4), t_b=st.integers(1, 4),
        off_a=st.integers(0, 3), off_b=st.integers(0, 3),
        horizon=st.integers(3, 14),
    )
    def test_agrees_with_exhaustive_search(self, t_a, t_b, off_a, off_b, horizon):
        assume(off_a < t_a and off_b < t_b)
        req = EqualityRequirement(3, {A: ((0,), (1, 2)), B: ((0, 1), (2,))})
        patterns = [CoherencePattern(A, t_a, off_a), CoherencePattern(B, t_b, off_b)]
        valid = [
            s for s in itertools.combinations(range(horizon), 3)
            if SupersymbolPlan.realize(patterns, s).satisfies(req, patterns)
        ]
        if not valid:
            with pytest.raises(NoSupersymbolFound):
                find_supersymbol(patterns, req, horizon)
            return
        expected = min(valid, key=lambda s: (s[-1] - s[0], s))
        assert find_supersymbol(patterns, req, horizon).slots == expected

    @settings(max_examples=60, deadline=None)
    @given(
        t_a=st.integers(1, 4), t_b=st.integers(1, 4),
        off_a=st.integers(0, 3), off_b=st.integers(0, 3),
        template=st.sampled_from([
            (((0,), (1,)), ((0, 1),)),
            (((0, 1),), ((0,), (1,))),
            (((0,), (1, 2)), ((0, 1), (2,))),
        ]),
    )
    def test_found_plan_matches_template(self, t_a, t_b, off_a, off_b, template):
        assume(off_a < t_a and off_b < t_b)
        length = 1 + max(pos for cls in template[0] for pos in cls)
        req = EqualityRequirement(length, {A: template[0], B: template[1]})
        patterns = [CoherencePattern(A, t_a, off_a), CoherencePattern(B, t_b, off_b)]
        try:
            plan = find_supersymbol(patterns, req)
        except NoSupersymbolFound:
            return
        assert plan.satisfies(req, patterns)
        for p in patterns:
            blocks = [block_index(p, t) for t in plan.slots]
            for cls in req.templates[p.link]:
                assert len({blocks[pos] for pos in cls}) == 1


def test_realize_partition_groups_shared_blocks():
    assert realize_partition(CoherencePattern(A, 2, 0), (1, 2, 3)) == ((0,), (1, 2))


def test_synchronized_plan_loses_staggering():
    plan = synchronized_plan(STAGGER_TEMPLATE, [A, B])
    assert plan.slots == (1, 2)
    assert plan.partition(B) == ((0,), (1,))


def test_plan_rejects_unsorted_slots():
    with pytest.raises(ValueError):
        SupersymbolPlan((2, 1))


def test_link_round_trip_text():
    assert LinkId.parse(str(LinkId(1, 3))) == LinkId(1, 3)


class TestSampleRealization:
    plan = SupersymbolPlan((1, 2), {A: ((0,), (1,)), B: ((0, 1),)})
    dims = {A: (1, 2), B: (1, 2), LinkId(1, 1): (1, 1)}

    def test_class_slots_bitwise_equal(self):
        r = sample_realization(self.plan, self.dims, rng_seed=42)
        assert np.array_equal(r.at(B, 0), r.at(B, 1))

    def test_different_classes_differ(self):
        r = sample_realization(self.plan, self.dims, rng_seed=42)
        assert not np.array_equal(r.at(A, 0), r.at(A, 1))

    def test_unconstrained_link_is_fresh_per_slot(self):
        r = sample_realization(self.plan, self.dims, rng_seed=42)
        assert not np.array_equal(r.at(LinkId(1, 1), 0), r.at(LinkId(1, 1), 1))

    def test_seed_determinism(self):
        a = sample_realization(self.plan, self.dims, rng_seed=42)
        b = sample_realization(self.plan, self.dims, rng_seed=42)
        for link in a.links:
            assert np.array_equal(a.gains[link], b.gains[link])

    def test_perturbation_shares_class_draws(self):
        base = sample_realization(self.plan, self.dims, rng_seed=9)
        noisy = sample_realization(self.plan, self.dims, epsilon=1e-6, rng_seed=9)
        assert not np.array_equal(noisy.at(B, 0), noisy.at(B, 1))
        assert np.max(np.abs(noisy.gains[B] - base.gains[B])) < 1e-4

    @pytest.mark.parametrize("field", [FieldMode.COMPLEX, FieldMode.REAL])
    def test_perturbation_spread_matches_epsilon(self, field):
        plan = SupersymbolPlan((0, 1), {A: ((0, 1),)})
        dims = {A: (100, 50)}
        eps = 1e-3
        base = sample_realization(plan, dims, rng_seed=17, field=field)
        noisy = sample_realization(plan, dims, epsilon=eps, rng_seed=17, field=field)
        diff = noisy.gains[A] - base.gains[A]
        assert diff.size == 10_000
        assert np.std(diff) == pytest.approx(eps, rel=0.1)

    def test_real_field(self):
        r = sample_realization(self.plan, self.dims, rng_seed=1, field=FieldMode.REAL)
        assert r.gains[A].dtype == np.float64

    def test_complex_unit_variance(self):
        plan = SupersymbolPlan((0,), {})
        r = sample_realization(plan, {A: (200, 200)}, rng_seed=3)
        assert np.mean(np.abs(r.gains[A]) ** 2) == pytest.approx(1.0, abs=0.02)

    def test_negative_epsilon(self):
        with pytest.raises(ValueError):
            sample_realization(self.plan, self.dims, epsilon=-1.0)

    def test_gains_are_read_only(self):
        r = sample_realization(self.plan, self.dims, rng_seed=2)
        with pytest.raises(ValueError):
            r.gains[A][0, 0, 0] = 0


def test_trial_seeds_are_stable_and_distinct():
    assert trial_seed(2009, 5) == trial_seed(2009, 5)
    assert len({trial_seed(2009, i) for i in range(100)}) == 100
