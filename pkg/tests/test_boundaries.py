"""Closed-form boundary and hypothesis-prior checks.

Expected values were frozen from an independent 50-digit evaluation of
the closed forms (mpmath script kept in tests/oracles.py where reused).
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from midtrial.boundaries import (
    EfficacyTargets,
    HypothesisPrior,
    PriorStrength,
    ToxicityTargets,
    boin_boundaries,
    boinet_boundaries,
    iboin_boundaries,
    iboin_hypothesis_prior,
    iboinet_boundaries,
    iboinet_hypothesis_prior,
)

BOIN_DEFAULT = ToxicityTargets(phi1=0.30, phi2=0.18, phi3=0.42)
ET_DEFAULT_TOX = ToxicityTargets(phi1=0.30, phi2=0.03, phi3=0.42)
ET_DEFAULT_EFF = EfficacyTargets(delta1=0.5, delta2=0.3)


class TestBoinBoundaries:
    def test_default_targets(self):
        b = boin_boundaries(BOIN_DEFAULT)
        assert b.lambda_e == pytest.approx(0.2364907, abs=1e-4)
        assert b.lambda_d == pytest.approx(0.3585195, abs=1e-4)

    def test_target_020(self):
        b = boin_boundaries(ToxicityTargets(0.20, 0.12, 0.28))
        assert b.lambda_e == pytest.approx(0.1572423, abs=1e-4)
        assert b.lambda_d == pytest.approx(0.2384624, abs=1e-4)

    def test_narrow_hypotheses_collapse_to_target(self):
        for eps in (1e-3, 1e-5, 1e-7):
            b = boin_boundaries(ToxicityTargets(0.30, 0.30 - eps, 0.30 + eps))
            assert b.lambda_e == pytest.approx(0.30, abs=10 * eps)
            assert b.lambda_d == pytest.approx(0.30, abs=10 * eps)

    def test_invalid_ordering_rejected(self):
        with pytest.raises(ValueError):
            ToxicityTargets(0.30, 0.40, 0.42)
        with pytest.raises(ValueError):
            ToxicityTargets(0.30, 0.18, 0.25)

    @given(
        phi1=st.floats(0.1, 0.5),
        lo=st.floats(0.05, 0.95),
        hi=st.floats(0.05, 0.95),
    )
    def test_boundaries_bracket_target(self, phi1, lo, hi):
        targets = ToxicityTargets(phi1, phi1 * (1 - 0.9 * lo), phi1 + (1 - phi1) * 0.9 * hi)
        b = boin_boundaries(targets)
        assert b.lambda_e < phi1 < b.lambda_d


class TestIboinPrior:
    def test_zero_strength_is_uniform(self):
        pr = iboin_hypothesis_prior(PriorStrength(s=0, r=0.7), BOIN_DEFAULT)
        assert pr.pi == pytest.approx((1 / 3, 1 / 3, 1 / 3), abs=1e-15)

    def test_skeleton_at_target_stays_uniform(self):
        # sum(phi_k) = 3*phi1 here, so both x-terms reduce to 1/3
        pr = iboin_hypothesis_prior(PriorStrength(s=1, r=0.3), BOIN_DEFAULT)
        assert pr.pi == pytest.approx((1 / 3, 1 / 3, 1 / 3), abs=1e-12)

    def test_s1_r04_example(self):
        pr = iboin_hypothesis_prior(PriorStrength(s=1, r=0.4), BOIN_DEFAULT)
        assert pr.pi[0] == pytest.approx(0.3333333, abs=1e-5)
        assert pr.pi[1] == pytest.approx(0.3142857, abs=1e-5)
        assert pr.pi[2] == pytest.approx(0.3523810, abs=1e-5)

    def test_invalid_skeleton_rejected(self):
        with pytest.raises(ValueError):
            PriorStrength(s=2, r=0.0)
        with pytest.raises(ValueError):
            PriorStrength(s=2, r=1.0)

    @given(
        s=st.integers(0, 12),
        r=st.floats(0.05, 0.95),
    )
    def test_normalization_and_positivity(self, s, r):
        pr = iboin_hypothesis_prior(PriorStrength(s=s, r=r), BOIN_DEFAULT)
        assert abs(sum(pr.pi) - 1.0) <= 1e-12
        assert all(p > 0 for p in pr.pi)

    @given(s=st.integers(0, 10), r=st.floats(0.05, 0.95))
    def test_phi2_phi3_permutation_symmetry(self, s, r):
        # swapping the sub- and over-target hypotheses permutes entries 2 and 3
        strength = PriorStrength(s=s, r=r)
        base = iboin_hypothesis_prior(strength, BOIN_DEFAULT)
        phis = np.array(BOIN_DEFAULT.phis)
        swapped = _raw_mixture(phis[[0, 2, 1]], s, r)
        assert swapped[0] == pytest.approx(base.pi[0], abs=1e-12)
        assert swapped[1] == pytest.approx(base.pi[2], abs=1e-12)
        assert swapped[2] == pytest.approx(base.pi[1], abs=1e-12)


def _raw_mixture(hyps, s, r):
    """Brute-force reference for the binomial hypothesis mixture."""
    out = []
    for h in hyps:
        tot = 0.0
        for x in range(s + 1):
            w = h**x * (1 - h) ** (s - x) / sum(
                hp**x * (1 - hp) ** (s - x) for hp in hyps
            )
            tot += w * math.comb(s, x) * r**x * (1 - r) ** (s - x)
        out.append(tot)
    return out


class TestIboinBoundaries:
    def test_uniform_prior_reduces_to_boin(self):
        base = boin_boundaries(BOIN_DEFAULT)
        for n in range(1, 13):
            b = iboin_boundaries(HypothesisPrior.uniform3(), n, BOIN_DEFAULT)
            assert b.lambda_e == pytest.approx(base.lambda_e, abs=1e-12)
            assert b.lambda_d == pytest.approx(base.lambda_d, abs=1e-12)

    def test_informative_example_n3(self):
        pr = iboin_hypothesis_prior(PriorStrength(s=1, r=0.4), BOIN_DEFAULT)
        b = iboin_boundaries(pr, 3, BOIN_DEFAULT)
        assert b.lambda_e == pytest.approx(0.2071752, abs=1e-6)
        assert b.lambda_d == pytest.approx(0.3232050, abs=1e-6)

    def test_large_n_converges_to_boin(self):
        pr = iboin_hypothesis_prior(PriorStrength(s=1, r=0.4), BOIN_DEFAULT)
        b = iboin_boundaries(pr, 300, BOIN_DEFAULT)
        base = boin_boundaries(BOIN_DEFAULT)
        assert b.lambda_e == pytest.approx(base.lambda_e, abs=1e-3)
        assert b.lambda_d == pytest.approx(base.lambda_d, abs=1e-3)

    def test_n_zero_rejected(self):
        with pytest.raises(ValueError):
            iboin_boundaries(HypothesisPrior.uniform3(), 0, BOIN_DEFAULT)

    def test_ordering_over_grid(self):
        # lambda*_e < lambda*_d for the default targets across the borrowing grid
        for r in np.arange(0.05, 0.96, 0.1):
            for s in range(0, 13):
                pr = iboin_hypothesis_prior(PriorStrength(s=s, r=float(r)), BOIN_DEFAULT)
                for n in range(1, 13):
                    b = iboin_boundaries(pr, n, BOIN_DEFAULT)
                    assert b.lambda_e < b.lambda_d

    def test_information_decay_monotone(self):
        pr = iboin_hypothesis_prior(PriorStrength(s=6, r=0.15), BOIN_DEFAULT)
        base = boin_boundaries(BOIN_DEFAULT)
        gaps = [
            abs(iboin_boundaries(pr, n, BOIN_DEFAULT).lambda_e - base.lambda_e)
            for n in range(1, 13)
        ]
        assert all(a >= b for a, b in zip(gaps, gaps[1:]))


class TestIboinetPrior:
    def test_zero_strength_uniform_sixths(self):
        pr = iboinet_hypothesis_prior(
            PriorStrength(s=0, r=0.3, v=0.5), ET_DEFAULT_TOX, ET_DEFAULT_EFF
        )
        assert pr.flat() == pytest.approx((1 / 6,) * 6, abs=1e-15)

    def test_row_sums_match_toxicity_margin(self):
        pr = iboinet_hypothesis_prior(
            PriorStrength(s=1, r=0.3, v=0.5), ET_DEFAULT_TOX, ET_DEFAULT_EFF
        )
        tox_margin = iboin_hypothesis_prior(PriorStrength(s=1, r=0.3), ET_DEFAULT_TOX)
        for k in range(3):
            assert pr.pi[k][0] + pr.pi[k][1] == pytest.approx(tox_margin.pi[k], abs=1e-12)

    def test_matches_brute_force_double_sum(self):
        s, r, v = 2, 0.25, 0.4
        pr = iboinet_hypothesis_prior(
            PriorStrength(s=s, r=r, v=v), ET_DEFAULT_TOX, ET_DEFAULT_EFF
        )
        phis, deltas = ET_DEFAULT_TOX.phis, ET_DEFAULT_EFF.deltas
        for k in range(3):
            for m in range(2):
                tot = 0.0
                for x in range(s + 1):
                    for y in range(s + 1):
                        w1 = phis[k] ** x * (1 - phis[k]) ** (s - x) / sum(
                            p**x * (1 - p) ** (s - x) for p in phis
                        )
                        w2 = deltas[m] ** y * (1 - deltas[m]) ** (s - y) / sum(
                            d**y * (1 - d) ** (s - y) for d in deltas
                        )
                        tot += (
                            w1
                            * w2
                            * math.comb(s, x)
                            * r**x
                            * (1 - r) ** (s - x)
                            * math.comb(s, y)
                            * v**y
                            * (1 - v) ** (s - y)
                        )
                assert pr.pi[k][m] == pytest.approx(tot, abs=1e-12)

    def test_missing_v_rejected(self):
        with pytest.raises(ValueError):
            iboinet_hypothesis_prior(
                PriorStrength(s=1, r=0.3), ET_DEFAULT_TOX, ET_DEFAULT_EFF
            )


class TestEtBoundaries:
    def test_default_targets(self):
        b = boinet_boundaries(ET_DEFAULT_TOX, ET_DEFAULT_EFF)
        assert b.lambda1 == pytest.approx(0.1240930, abs=1e-4)
        assert b.lambda2 == pytest.approx(0.3585195, abs=1e-4)
        assert b.eta == pytest.approx(0.3971121, abs=1e-4)

    def test_eta_collapses_to_delta1(self):
        for eps in (1e-3, 1e-6):
            b = boinet_boundaries(
                ET_DEFAULT_TOX, EfficacyTargets(delta1=0.5, delta2=0.5 - eps)
            )
            assert b.eta == pytest.approx(0.5, abs=10 * eps)

    def test_equals_uniform_informative_at_n1(self):
        b1 = boinet_boundaries(ET_DEFAULT_TOX, ET_DEFAULT_EFF)
        b2 = iboinet_boundaries(HypothesisPrior.uniform6(), 1, ET_DEFAULT_TOX, ET_DEFAULT_EFF)
        assert (b1.lambda1, b1.lambda2, b1.eta) == (b2.lambda1, b2.lambda2, b2.eta)

    def test_informative_converges_with_n(self):
        pr = iboinet_hypothesis_prior(
            PriorStrength(s=2, r=0.25, v=0.4), ET_DEFAULT_TOX, ET_DEFAULT_EFF
        )
        base = boinet_boundaries(ET_DEFAULT_TOX, ET_DEFAULT_EFF)
        b = iboinet_boundaries(pr, 10_000, ET_DEFAULT_TOX, ET_DEFAULT_EFF)
        assert b.lambda1 == pytest.approx(base.lambda1, abs=1e-3)
        assert b.lambda2 == pytest.approx(base.lambda2, abs=1e-3)
        assert b.eta == pytest.approx(base.eta, abs=1e-3)

    def test_informative_matches_direct_evaluation(self):
        pr = iboinet_hypothesis_prior(
            PriorStrength(s=2, r=0.25, v=0.4), ET_DEFAULT_TOX, ET_DEFAULT_EFF
        )
        n = 3
        got = iboinet_boundaries(pr, n, ET_DEFAULT_TOX, ET_DEFAULT_EFF)
        p = pr.pi
        phi1, phi2, phi3 = ET_DEFAULT_TOX.phis
        d1, d2 = ET_DEFAULT_EFF.deltas
        lam1 = (
            math.log((1 - phi2) / (1 - phi1))
            + math.log((p[1][0] + p[1][1]) / (p[0][0] + p[0][1])) / n
        ) / math.log(phi1 * (1 - phi2) / (phi2 * (1 - phi1)))
        lam2 = (
            math.log((1 - phi1) / (1 - phi3))
            + math.log((p[0][0] + p[0][1]) / (p[2][0] + p[2][1])) / n
        ) / math.log(phi3 * (1 - phi1) / (phi1 * (1 - phi3)))
        eta = (
            math.log((1 - d2) / (1 - d1))
            + math.log((p[0][1] + p[1][1] + p[2][1]) / (p[0][0] + p[1][0] + p[2][0])) / n
        ) / math.log(d1 * (1 - d2) / (d2 * (1 - d1)))
        assert got.lambda1 == pytest.approx(lam1, abs=1e-6)
        assert got.lambda2 == pytest.approx(lam2, abs=1e-6)
        assert got.eta == pytest.approx(eta, abs=1e-6)
