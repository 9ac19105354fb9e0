"""Model-based skeleton construction against independent oracles.

The BLRM oracle re-integrates the posterior on a much finer and wider
grid with its own code path; the fractional polynomial oracle solves
the same box-constrained likelihood with scipy's L-BFGS-B from several
starts.  Neither reuses module internals.
"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize
from scipy.special import expit, logit
from scipy.stats import beta as beta_dist

from midtrial.skeleton import (
    POWER_SET,
    BlrmHyper,
    DoseData,
    DoseGrid,
    adjust_ess,
    compute_bundle,
    efficacy_skeleton,
    ess_from_moments,
    fit_blrm,
    fit_fp_mle,
    fp_basis,
    round_half_up,
    select_fp_powers,
    toxicity_skeleton,
)

# Dose history accumulated before the worked insertion of 2100 mg
PRE_GRID = DoseGrid(doses=(300.0, 900.0, 1500.0, 2400.0), d_ref=2400.0)
PRE_DATA = DoseData(n=(3, 3, 6, 6), t=(0, 0, 1, 3))
HYPER = BlrmHyper(mu_alpha=float(logit(0.3)))

POST_GRID = PRE_GRID.insert(2100.0)
POST_DATA = DoseData(n=(3, 3, 6, 0, 6), t=(0, 0, 1, 0, 3), u=(0, 0, 0, 0, 3))


def oracle_blrm_moments(doses, d_ref, ns, ts, hyper, dose_eval, nodes=1601, span=8.0):
    """Posterior mean/variance of p_T(dose_eval) on a fine, wide grid."""
    a = hyper.mu_alpha + hyper.sigma_alpha * np.linspace(-span, span, nodes)
    lb = hyper.mu_beta + hyper.sigma_beta * np.linspace(-span, span, nodes)
    aa, bb = np.meshgrid(a, np.exp(lb), indexing="ij")
    log_post = (
        -0.5 * ((aa - hyper.mu_alpha) / hyper.sigma_alpha) ** 2
        - 0.5 * ((np.log(bb) - hyper.mu_beta) / hyper.sigma_beta) ** 2
    )
    for d, n, t in zip(doses, ns, ts):
        if n == 0:
            continue
        eta = aa + bb * math.log(d / d_ref)
        log_post += -t * np.logaddexp(0.0, -eta) - (n - t) * np.logaddexp(0.0, eta)
    w = np.exp(log_post - log_post.max())
    w /= w.sum()
    with np.errstate(over="ignore"):
        p = 1.0 / (1.0 + np.exp(-(aa + bb * math.log(dose_eval / d_ref))))
    mu = float((w * p).sum())
    var = float((w * p**2).sum() - mu**2)
    return mu, var, float((w * aa).sum()), float((w * bb).sum())


def oracle_basis(d_std, k1, k2):
    ld = np.log(d_std)
    if k1 == 0:
        f1 = ld
    else:
        f1 = np.power(d_std, k1)
    if k1 == 0 and k2 == 0:
        f2 = ld**2
    elif k1 == k2 and k1 != 0:
        f2 = np.power(d_std, k1) * ld
    elif k2 == 0:
        f2 = ld
    else:
        f2 = np.power(d_std, k2)
    return f1, f2


def oracle_fp_deviance(grid, data, k1, k2):
    """Box-constrained MLE deviance via L-BFGS-B, best of several starts."""
    rows, ns, us = [], [], []
    for d, n, u in zip(grid.doses, data.n, data.u):
        if n == 0:
            continue
        f1, f2 = oracle_basis(d / grid.d_bar, k1, k2)
        rows.append((1.0, f1, f2))
        ns.append(float(n))
        us.append(float(u))
    x_mat, ns, us = np.array(rows), np.array(ns), np.array(us)

    def nll(theta):
        eta = x_mat @ theta
        return float(us @ np.logaddexp(0, -eta) + (ns - us) @ np.logaddexp(0, eta))

    starts = [
        np.zeros(3),
        np.array([-1.0, 1.0, 0.0]),
        np.array([1.0, -1.0, 1.0]),
        np.array([0.5, 2.0, -2.0]),
        np.array([float(logit(np.clip(us.sum() / ns.sum(), 0.02, 0.98))), 0.0, 0.0]),
    ]
    best = math.inf
    for x0 in starts:
        res = minimize(
            nll,
            x0,
            method="L-BFGS-B",
            bounds=[(-20.0, 20.0)] * 3,
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 5000},
        )
        best = min(best, float(res.fun))
    ll_sat = sum(
        (u * math.log(u / n) if u > 0 else 0.0)
        + ((n - u) * math.log(1 - u / n) if u < n else 0.0)
        for n, u in zip(ns, us)
    )
    return max(2.0 * (best + ll_sat), 0.0)


class TestBlrm:
    def test_fixed_case_matches_dense_oracle(self):
        post = fit_blrm(PRE_GRID, PRE_DATA, HYPER)
        r, mu, var = toxicity_skeleton(post, PRE_GRID, 2100.0)
        o_mu, o_var, o_ah, o_bh = oracle_blrm_moments(
            PRE_GRID.doses, 2400.0, PRE_DATA.n, PRE_DATA.t, HYPER, 2100.0
        )
        assert mu == pytest.approx(o_mu, abs=1e-3)
        assert var == pytest.approx(o_var, abs=1e-3)
        assert post.alpha_hat == pytest.approx(o_ah, abs=1e-3)
        assert post.beta_hat == pytest.approx(o_bh, abs=1e-3)

        # the new dose's mean sits between the fitted means of its neighbors
        fitted = {
            d: float((post.weights * post.curve(d, PRE_GRID.d_ref)).sum())
            for d in (1500.0, 2400.0)
        }
        for d in fitted:
            o = oracle_blrm_moments(
                PRE_GRID.doses, 2400.0, PRE_DATA.n, PRE_DATA.t, HYPER, d
            )[0]
            assert fitted[d] == pytest.approx(o, abs=1e-3)
        assert fitted[1500.0] < mu < fitted[2400.0]

    def test_all_toxic_data_raises_posterior_above_prior(self):
        data = DoseData(n=(3, 3, 3, 3), t=(3, 3, 3, 3))
        post = fit_blrm(PRE_GRID, data, HYPER)
        for d in PRE_GRID.doses:
            prior_mu = float(
                (_prior_weights(HYPER) * post.curve(d, PRE_GRID.d_ref)).sum()
            )
            post_mu = float((post.weights * post.curve(d, PRE_GRID.d_ref)).sum())
            assert post_mu > prior_mu

    def test_posterior_mean_curve_nondecreasing(self):
        post = fit_blrm(PRE_GRID, PRE_DATA, HYPER)
        ds = np.linspace(100.0, 3000.0, 40)
        mus = [float((post.weights * post.curve(d, PRE_GRID.d_ref)).sum()) for d in ds]
        assert all(a <= b + 1e-12 for a, b in zip(mus, mus[1:]))

    def test_zero_count_dose_leaves_posterior_unchanged(self):
        post = fit_blrm(PRE_GRID, PRE_DATA, HYPER)
        grid5 = PRE_GRID.insert(2100.0)
        data5 = DoseData(n=(3, 3, 6, 0, 6), t=(0, 0, 1, 0, 3))
        post5 = fit_blrm(grid5, data5, HYPER)
        np.testing.assert_array_equal(post.weights, post5.weights)

    def test_quadrature_refinement_is_stable(self):
        coarse = fit_blrm(PRE_GRID, PRE_DATA, HYPER, nodes=201)
        fine = fit_blrm(PRE_GRID, PRE_DATA, HYPER, nodes=402)
        _, mu_c, v_c = toxicity_skeleton(coarse, PRE_GRID, 2100.0)
        _, mu_f, v_f = toxicity_skeleton(fine, PRE_GRID, 2100.0)
        assert abs(mu_c - mu_f) < 1e-3
        assert abs(v_c - v_f) < 1e-3

    def test_degenerate_limit_is_plug_in(self):
        # sharp priors pin (alpha, beta) so the skeleton is the plug-in value
        hyper = BlrmHyper(mu_alpha=-1.0, sigma_alpha=1e-6, mu_beta=0.5, sigma_beta=1e-6)
        post = fit_blrm(PRE_GRID, DoseData(n=(1, 0, 0, 0), t=(0, 0, 0, 0)), hyper)
        r, mu, var = toxicity_skeleton(post, PRE_GRID, 2100.0)
        want = float(expit(-1.0 + math.exp(0.5) * math.log(2100.0 / 2400.0)))
        assert r == pytest.approx(want, abs=1e-5)
        assert mu == pytest.approx(want, abs=1e-5)

    def test_d_star_at_reference_uses_intercept_only(self):
        post = fit_blrm(PRE_GRID, PRE_DATA, HYPER)
        r, _, _ = toxicity_skeleton(post, PRE_GRID, PRE_GRID.d_ref)
        assert r == pytest.approx(float(expit(post.alpha_hat)), abs=1e-12)

    def test_no_data_rejected(self):
        with pytest.raises(ValueError, match="no data"):
            fit_blrm(PRE_GRID, DoseData(n=(0, 0, 0, 0), t=(0, 0, 0, 0)), HYPER)

    def test_nonfinite_hyper_rejected(self):
        with pytest.raises(ValueError):
            BlrmHyper(mu_alpha=math.nan)
        with pytest.raises(ValueError):
            BlrmHyper(mu_alpha=0.0, sigma_alpha=0.0)


def _prior_weights(hyper, nodes=201):
    a = np.linspace(-6.0, 6.0, nodes)
    w = np.exp(-0.5 * a[:, None] ** 2 - 0.5 * a[None, :] ** 2)
    return w / w.sum()


class TestFpBasis:
    def test_unit_dose(self):
        for k1 in POWER_SET:
            for k2 in POWER_SET:
                f1, f2 = fp_basis(1.0, k1, k2)
                assert f1 == (0.0 if k1 == 0 else 1.0)
                has_log = k1 == k2 or k2 == 0
                assert f2 == (0.0 if has_log else 1.0)

    def test_repeated_zero_power(self):
        f1, f2 = fp_basis(2.0, 0.0, 0.0)
        assert f1 == pytest.approx(0.6931472, abs=1e-6)
        assert f2 == pytest.approx(0.4804530, abs=1e-6)

    def test_repeated_negative_power(self):
        f1, f2 = fp_basis(0.5, -1.0, -1.0)
        assert f1 == pytest.approx(2.0, abs=1e-12)
        assert f2 == pytest.approx(-1.3862944, abs=1e-6)

    def test_nonpositive_dose_rejected(self):
        with pytest.raises(ValueError):
            fp_basis(0.0, 1.0, 2.0)


class TestFpMle:
    def test_interpolatable_proportions_reach_zero_deviance(self):
        grid = DoseGrid(doses=(50.0, 100.0, 200.0), d_ref=200.0)
        data = DoseData(n=(10, 10, 10), t=(0, 0, 0), u=(2, 5, 7))
        fit = fit_fp_mle(grid, data, 1.0, 2.0)
        assert fit.deviance < 1e-6

    def test_matches_constrained_optimizer_oracle(self):
        grid = DoseGrid(doses=(50.0, 100.0, 200.0), d_ref=200.0)
        data = DoseData(n=(4, 4, 4), t=(0, 0, 0), u=(0, 2, 4))
        for k1, k2 in [(1.0, 2.0), (0.0, 0.0), (-2.0, 0.5), (-1.0, -1.0)]:
            fit = fit_fp_mle(grid, data, k1, k2)
            want = oracle_fp_deviance(grid, data, k1, k2)
            assert fit.deviance == pytest.approx(want, abs=1e-4)

    def test_single_informative_dose_interpolates(self):
        grid = DoseGrid(doses=(100.0, 200.0, 300.0), d_ref=300.0)
        data = DoseData(n=(0, 5, 0), t=(0, 0, 0), u=(0, 2, 0))
        fit = fit_fp_mle(grid, data, 1.0, 2.0)
        assert fit.deviance < 1e-6

    def test_all_zero_responses(self):
        data = DoseData(n=POST_DATA.n, t=POST_DATA.t, u=(0, 0, 0, 0, 0))
        fit = fit_fp_mle(POST_GRID, data, 1.0, 2.0)
        assert fit.deviance < 1e-6
        x = np.array(
            [fp_basis(d / POST_GRID.d_bar, 1.0, 2.0) for d in POST_GRID.doses]
        )
        p = expit(fit.alpha + x @ np.array([fit.beta1, fit.beta2]))
        assert np.all(p < 1e-4)

    def test_coefficients_respect_clamp(self):
        grid = DoseGrid(doses=(100.0, 400.0), d_ref=400.0)
        data = DoseData(n=(6, 6), t=(0, 0), u=(0, 6))
        fit = fit_fp_mle(grid, data, 1.0, 2.0)
        assert max(abs(fit.alpha), abs(fit.beta1), abs(fit.beta2)) <= 20.0


class TestFpSelection:
    def test_fixed_case_matches_enumeration_oracle(self):
        fit = select_fp_powers(POST_GRID, POST_DATA)
        devs = {
            (k1, k2): oracle_fp_deviance(POST_GRID, POST_DATA, k1, k2)
            for i, k1 in enumerate(POWER_SET)
            for k2 in POWER_SET[i:]
        }
        best = min(devs.values())
        assert fit.deviance == pytest.approx(best, abs=1e-4)
        # the selected pair's own oracle deviance is also minimal
        assert devs[(fit.k1, fit.k2)] == pytest.approx(best, abs=1e-4)

    def test_selected_deviance_is_exhaustive_minimum(self):
        grid = DoseGrid(doses=(100.0, 300.0, 700.0, 1200.0), d_ref=1200.0)
        data = DoseData(n=(6, 9, 9, 6), t=(0, 0, 0, 0), u=(1, 4, 6, 2))
        best = select_fp_powers(grid, data)
        for i, k1 in enumerate(POWER_SET):
            for k2 in POWER_SET[i:]:
                assert best.deviance <= fit_fp_mle(grid, data, k1, k2).deviance + 1e-10

    def test_total_ties_prefer_small_simple_powers(self):
        # two informative doses: every pair interpolates, deviance ties at 0
        grid = DoseGrid(doses=(100.0, 200.0), d_ref=200.0)
        data = DoseData(n=(8, 8), t=(0, 0), u=(2, 6))
        fit = select_fp_powers(grid, data)
        assert (fit.k1, fit.k2) == (0.0, 0.0)
        assert fit.deviance < 1e-10

    def test_generated_from_known_pair_recovers_low_deviance(self):
        grid = DoseGrid(doses=(100.0, 200.0, 400.0, 800.0, 1600.0), d_ref=1600.0)
        theta = np.array([-0.5, 1.2, -0.4])
        n = 400
        us = []
        for d in grid.doses:
            f1, f2 = fp_basis(d / grid.d_bar, 1.0, 2.0)
            p = float(expit(theta @ np.array([1.0, f1, f2])))
            us.append(round(p * n))
        data = DoseData(n=(n,) * 5, t=(0,) * 5, u=tuple(us))
        best = select_fp_powers(grid, data)
        direct = fit_fp_mle(grid, data, 1.0, 2.0)
        assert best.deviance <= direct.deviance + 1e-10


class TestEfficacySkeleton:
    def test_fixed_case_within_monte_carlo_error_of_large_run(self):
        fit = select_fp_powers(POST_GRID, POST_DATA)
        v, mu, var, flags = efficacy_skeleton(fit, POST_GRID, POST_DATA, 2100.0)
        assert v == mu

        # oracle: same Gaussian, independent assembly, winsorized only by size
        x_mat, ns, us = [], [], []
        for d, n, u in zip(POST_GRID.doses, POST_DATA.n, POST_DATA.u):
            if n == 0:
                continue
            f1, f2 = oracle_basis(d / POST_GRID.d_bar, fit.k1, fit.k2)
            x_mat.append((1.0, f1, f2))
            ns.append(n)
            us.append(u)
        x_mat, ns, us = np.array(x_mat), np.array(ns), np.array(us)
        p = expit(x_mat @ fit.coef)
        h = x_mat.T @ (x_mat * (ns * p * (1 - p))[:, None]) + np.eye(3) / 4.0
        cov = np.linalg.inv(h)
        rng = np.random.default_rng(77)
        draws = rng.multivariate_normal(fit.coef, cov, size=1_000_000)
        f1, f2 = oracle_basis(2100.0 / POST_GRID.d_bar, fit.k1, fit.k2)
        samp = expit(draws @ np.array([1.0, f1, f2]))
        se_mu = samp.std() / math.sqrt(4096)
        assert mu == pytest.approx(float(samp.mean()), abs=2 * se_mu)
        m4 = float(((samp - samp.mean()) ** 4).mean())
        se_var = math.sqrt((m4 - samp.var() ** 2) / 4096)
        assert var == pytest.approx(float(samp.var()), abs=2 * se_var)

    def test_sharp_posterior_hits_floor_and_plug_in(self):
        grid = DoseGrid(doses=(100.0, 200.0, 400.0), d_ref=400.0)
        n = 10**8
        data = DoseData(n=(n, n, n), t=(0, 0, 0), u=(n // 2, n // 2, n // 2))
        fit = fit_fp_mle(grid, data, 1.0, 2.0)
        v, mu, var, _ = efficacy_skeleton(fit, grid, data, 200.0)
        assert var == 1e-8
        assert mu == pytest.approx(0.5, abs=1e-3)

    def test_consistency_at_half(self):
        grid = DoseGrid(doses=(100.0, 200.0, 400.0), d_ref=400.0)
        data = DoseData(n=(2000, 2000, 2000), t=(0, 0, 0), u=(1000, 1000, 1000))
        fit = select_fp_powers(grid, data)
        v, mu, var, _ = efficacy_skeleton(fit, grid, data, 200.0)
        assert mu == pytest.approx(0.5, abs=0.01)


class TestEss:
    def test_uniform_is_beta_one_one(self):
        assert ess_from_moments(0.5, 1 / 12) == pytest.approx(2.0, abs=1e-12)

    def test_worked_value(self):
        assert ess_from_moments(0.2, 0.016) == pytest.approx(9.0, abs=1e-9)

    def test_bernoulli_variance_clamps_to_zero(self):
        assert ess_from_moments(0.3, 0.21) == 0.0

    @given(a=st.floats(0.2, 25.0), b=st.floats(0.2, 25.0))
    def test_beta_round_trip(self, a, b):
        # mu(1-mu)/var - 1 recovers a+b exactly for a Beta(a, b)
        mu = beta_dist.mean(a, b)
        var = beta_dist.var(a, b)
        assert ess_from_moments(float(mu), float(var)) == pytest.approx(
            a + b, rel=1e-9
        )

    def test_adjust_examples(self):
        assert adjust_ess(9.0, 1.0, 6) == 6.0
        assert adjust_ess(9.0, 0.5, 6) == 4.5
        assert round_half_up(4.5) == 5
        assert adjust_ess(0.0, 0.7, 12) == 0.0

    @given(
        ess=st.floats(0.0, 50.0),
        g1=st.floats(0.05, 1.0),
        g2=st.floats(0.05, 1.0),
        cap=st.integers(0, 12),
    )
    def test_bounds_and_gamma_monotonicity(self, ess, g1, g2, cap):
        lo, hi = sorted((g1, g2))
        assert 0.0 <= adjust_ess(ess, lo, cap) <= cap
        assert adjust_ess(ess, lo, cap) <= adjust_ess(ess, hi, cap)


class TestBundle:
    def test_fixed_case_bundle(self):
        bundle = compute_bundle(
            POST_GRID, POST_DATA, HYPER, include_efficacy=True
        )
        assert 0 < bundle.r < 1
        assert 0 < bundle.v < 1
        assert bundle.ess_t <= max(POST_DATA.n)
        assert bundle.ess_e <= max(POST_DATA.n)
        assert bundle.s_t == round_half_up(bundle.ess_t)
        # same arguments come back from the cache as the same object
        again = compute_bundle(POST_GRID, POST_DATA, HYPER, include_efficacy=True)
        assert again is bundle

    def test_toxicity_only_bundle_has_no_efficacy_fields(self):
        bundle = compute_bundle(POST_GRID, DoseData(n=POST_DATA.n, t=POST_DATA.t), HYPER)
        assert bundle.v is None and bundle.ess_e is None

    def test_requires_inserted_dose(self):
        with pytest.raises(ValueError):
            compute_bundle(PRE_GRID, PRE_DATA, HYPER)

    def test_gamma_scales_down(self):
        full = compute_bundle(POST_GRID, POST_DATA, HYPER)
        half = compute_bundle(POST_GRID, POST_DATA, HYPER, gamma_t=0.5)
        assert half.ess_t == pytest.approx(
            min(0.5 * ess_from_moments(full.mu_t, full.v_t), max(POST_DATA.n)), abs=1e-12
        )


class TestDoseGrid:
    def test_insert_keeps_order_and_marks_index(self):
        g = PRE_GRID.insert(2100.0)
        assert g.doses == (300.0, 900.0, 1500.0, 2100.0, 2400.0)
        assert g.inserted_index == 3
        assert g.d_bar == pytest.approx(1440.0)

    def test_duplicate_insert_rejected(self):
        with pytest.raises(ValueError):
            PRE_GRID.insert(900.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            DoseGrid(doses=(300.0, 300.0), d_ref=300.0)
        with pytest.raises(ValueError):
            DoseData(n=(3,), t=(4,))
