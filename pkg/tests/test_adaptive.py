"""Online skeleton updating: losses, Hedge, FTL, and the mixture."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binom

from midtrial.adaptive import (
    CandidateSet,
    IntervalOutcome,
    WeightState,
    adjacent_candidate,
    clamp_candidate,
    combined_skeleton,
    ftl_select,
    hedge_update,
    log_loss,
    mixture_posterior,
    mixture_skeleton,
)


class TestLogLoss:
    def test_half_probability(self):
        assert log_loss(0.5, IntervalOutcome(2, 1)) == pytest.approx(
            2 * math.log(2), abs=1e-12
        )

    def test_empty_interval_is_free(self):
        for p in (0.01, 0.5, 0.99):
            assert log_loss(p, IntervalOutcome(0, 0)) == 0.0

    def test_no_events(self):
        assert log_loss(0.2, IntervalOutcome(3, 0)) == pytest.approx(
            -3 * math.log(0.8), abs=1e-12
        )

    def test_contradiction_saturates(self):
        assert log_loss(1.0, IntervalOutcome(3, 0)) == 1e12
        assert log_loss(0.0, IntervalOutcome(3, 3)) == 1e12
        # compatible boundary outcomes cost nothing
        assert log_loss(1.0, IntervalOutcome(3, 3)) == 0.0


class TestHedge:
    def test_worked_update(self):
        cands = CandidateSet.hedge_pair(0.2, 0.4)
        state = hedge_update(WeightState.uniform(2), cands, IntervalOutcome(3, 0))
        assert state.weights[0] == pytest.approx(0.7032967, abs=1e-4)
        assert state.weights[1] == pytest.approx(0.2967033, abs=1e-4)
        assert state.cumulative_losses[0] == pytest.approx(0.6694306, abs=1e-6)
        assert state.cumulative_losses[1] == pytest.approx(1.5324769, abs=1e-6)
        assert state.t == 1
        assert combined_skeleton(state, cands) == pytest.approx(0.2593407, abs=1e-4)

    def test_equal_candidates_keep_weights(self):
        cands = CandidateSet.hedge_pair(0.25, 0.25)
        state = hedge_update(
            WeightState(weights=(0.8, 0.2), cumulative_losses=(0.0, 0.0)),
            cands,
            IntervalOutcome(6, 2),
        )
        assert state.weights == pytest.approx((0.8, 0.2), abs=1e-12)

    def test_empty_interval_keeps_weights(self):
        cands = CandidateSet.hedge_pair(0.1, 0.4)
        before = WeightState(weights=(0.3, 0.7), cumulative_losses=(1.0, 2.0))
        after = hedge_update(before, cands, IntervalOutcome(0, 0))
        assert after.weights == pytest.approx(before.weights, abs=1e-12)
        assert after.cumulative_losses == before.cumulative_losses
        assert after.t == before.t + 1

    @given(
        w0=st.floats(0.01, 0.99),
        r0=st.floats(0.05, 0.95),
        r1=st.floats(0.05, 0.95),
        n=st.integers(0, 12),
        data=st.data(),
    )
    def test_equals_bayes_posterior(self, w0, r0, r1, n, data):
        y = data.draw(st.integers(0, n))
        state = WeightState(weights=(w0, 1 - w0), cumulative_losses=(0.0, 0.0))
        cands = CandidateSet.hedge_pair(r0, r1)
        got = hedge_update(state, cands, IntervalOutcome(n, y))
        lik = [binom.pmf(y, n, v) for v in cands.values]
        post0 = w0 * lik[0] / (w0 * lik[0] + (1 - w0) * lik[1])
        assert got.weights[0] == pytest.approx(post0, abs=1e-10)

    def test_long_streak_stays_finite(self):
        cands = CandidateSet.hedge_pair(0.05, 0.95)
        state = WeightState.uniform(2)
        for _ in range(300):
            state = hedge_update(state, cands, IntervalOutcome(3, 3))
        assert sum(state.weights) == pytest.approx(1.0, abs=1e-12)
        assert state.weights[1] > 0.999

    def test_weight_conservation(self):
        rng = np.random.default_rng(11)
        state = WeightState.uniform(2)
        cands = CandidateSet.hedge_pair(0.15, 0.45)
        for _ in range(50):
            n = int(rng.integers(0, 7))
            y = int(rng.integers(0, n + 1))
            state = hedge_update(state, cands, IntervalOutcome(n, y))
            assert abs(sum(state.weights) - 1.0) <= 1e-12
            assert all(w > 0 for w in state.weights)


class TestFtl:
    def test_no_history_prefers_previous(self):
        cands = CandidateSet.hedge_pair(0.2, 0.4)
        assert ftl_select(WeightState.uniform(2), cands) == cands.values[0]

    def test_follows_smaller_cumulative_loss(self):
        cands = CandidateSet.hedge_pair(0.2, 0.4)
        state = hedge_update(WeightState.uniform(2), cands, IntervalOutcome(3, 0))
        assert ftl_select(state, cands) == cands.values[0]
        state = WeightState(weights=(0.5, 0.5), cumulative_losses=(2.0, 1.3))
        assert ftl_select(state, cands) == cands.values[1]

    def test_exact_tie_prefers_previous(self):
        cands = CandidateSet.hedge_pair(0.3, 0.6)
        state = WeightState(weights=(0.4, 0.6), cumulative_losses=(1.5, 1.5))
        assert ftl_select(state, cands) == cands.values[0]


class TestMixture:
    def test_worked_posterior(self):
        cands = CandidateSet.mixture_triplet(0.1, 0.2, 0.3)
        state = mixture_posterior(
            WeightState.uniform(3), cands, IntervalOutcome(6, 1)
        )
        assert state.weights[0] == pytest.approx(0.3374, abs=1e-4)
        assert state.weights[1] == pytest.approx(0.3745, abs=1e-4)
        assert state.weights[2] == pytest.approx(0.2881, abs=1e-4)
        assert mixture_skeleton(state, cands, "blend") == pytest.approx(
            0.1951, abs=1e-4
        )
        assert mixture_skeleton(state, cands, "map") == cands.values[1]

    def test_identical_candidates_keep_prior(self):
        cands = CandidateSet(labels=("a", "b", "c"), values=(0.2, 0.2, 0.2))
        prior = WeightState(weights=(0.5, 0.3, 0.2), cumulative_losses=(0.0,) * 3)
        post = mixture_posterior(prior, cands, IntervalOutcome(6, 2))
        assert post.weights == pytest.approx(prior.weights, abs=1e-12)

    def test_empty_interval_keeps_prior(self):
        cands = CandidateSet.mixture_triplet(0.1, 0.2, 0.3)
        prior = WeightState(weights=(0.2, 0.5, 0.3), cumulative_losses=(0.0,) * 3)
        post = mixture_posterior(prior, cands, IntervalOutcome(0, 0))
        assert post.weights == pytest.approx(prior.weights, abs=1e-12)

    def test_underflow_flags_and_keeps_weights(self):
        cands = CandidateSet.mixture_triplet(0.0, 0.0, 0.0)  # clamped to 1e-6
        prior = WeightState.uniform(3)
        post = mixture_posterior(prior, cands, IntervalOutcome(60, 60))
        assert post.weights == prior.weights
        assert "mixture_evidence_underflow" in post.flags

    def test_order_equivariance(self):
        vals = (0.12, 0.27, 0.44)
        weights = (0.5, 0.2, 0.3)
        out = IntervalOutcome(5, 2)
        base = mixture_posterior(
            WeightState(weights=weights, cumulative_losses=(0.0,) * 3),
            CandidateSet(labels=("x", "y", "z"), values=vals),
            out,
        )
        perm = (2, 0, 1)
        permuted = mixture_posterior(
            WeightState(
                weights=tuple(weights[i] for i in perm),
                cumulative_losses=(0.0,) * 3,
            ),
            CandidateSet(
                labels=("z", "x", "y"), values=tuple(vals[i] for i in perm)
            ),
            out,
        )
        for slot, orig in enumerate(perm):
            assert permuted.weights[slot] == pytest.approx(
                base.weights[orig], abs=1e-12
            )

    def test_repeated_evidence_dominates(self):
        # candidate closest to the empirical rate takes all the weight
        cands = CandidateSet.mixture_triplet(0.1, 0.32, 0.7)
        state = WeightState.uniform(3)
        for _ in range(50):
            state = mixture_posterior(state, cands, IntervalOutcome(3, 1))
        assert state.weights[1] > 0.99

    def test_blend_stays_in_hull(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            vals = tuple(sorted(rng.uniform(0.02, 0.98, 3)))
            cands = CandidateSet(labels=("a", "b", "c"), values=vals)
            state = WeightState.uniform(3)
            n = int(rng.integers(0, 8))
            y = int(rng.integers(0, n + 1))
            state = mixture_posterior(state, cands, IntervalOutcome(n, y))
            blend = mixture_skeleton(state, cands, "blend")
            assert vals[0] - 1e-12 <= blend <= vals[2] + 1e-12

    def test_degenerate_weight_returns_that_candidate(self):
        cands = CandidateSet.mixture_triplet(0.1, 0.2, 0.3)
        state = WeightState(
            weights=(1.0 - 2e-13, 1e-13, 1e-13), cumulative_losses=(0.0,) * 3
        )
        assert mixture_skeleton(state, cands, "map") == cands.values[0]
        assert mixture_skeleton(state, cands, "blend") == pytest.approx(
            cands.values[0], abs=1e-10
        )

    def test_map_tie_takes_smallest_index(self):
        cands = CandidateSet.mixture_triplet(0.15, 0.25, 0.35)
        state = WeightState.uniform(3)
        assert mixture_skeleton(state, cands, "map") == cands.values[0]

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            mixture_skeleton(WeightState.uniform(3), CandidateSet.mixture_triplet(0.1, 0.2, 0.3), "mean")


class TestCandidates:
    def test_clamping(self):
        assert clamp_candidate(0.0) == 1e-6
        assert clamp_candidate(1.0) == 1 - 1e-6
        assert clamp_candidate(0.37) == 0.37

    def test_adjacent_proportions(self):
        assert adjacent_candidate(2, 6) == pytest.approx(1 / 3)
        assert adjacent_candidate(0, 6) == pytest.approx(1 / 14)
        assert adjacent_candidate(6, 6) == pytest.approx(13 / 14)
        assert adjacent_candidate(0, 0) == pytest.approx(0.5)

    def test_validation(self):
        with pytest.raises(ValueError):
            CandidateSet(labels=("a",), values=(0.2, 0.3))
        with pytest.raises(ValueError):
            WeightState(weights=(0.6, 0.6), cumulative_losses=(0.0, 0.0))
        with pytest.raises(ValueError):
            IntervalOutcome(2, 3)
