"""Data-driven skeleton construction for an inserted dose.

The toxicity skeleton comes from a Bayesian logistic regression of DLT
counts on log standardized dose, integrated over a deterministic tensor
grid.  The efficacy skeleton comes from a second-degree fractional
polynomial logistic model selected by binomial deviance, with posterior
moments from a Laplace approximation around the maximum likelihood fit.
Posterior moments are converted to effective sample sizes through a Beta
moment match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import expit, log_expit, logit

# Candidate powers for the fractional polynomial bases, in canonical order.
POWER_SET = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)

# Fixed seed for the efficacy posterior draws so repeated fits agree bitwise.
EFFICACY_DRAW_SEED = 8191


@dataclass(frozen=True)
class DoseGrid:
    """Planned dose amounts with the scaling constants used by the models.

    Parameters
    ----------
    doses : tuple of float
        Strictly increasing dose amounts, in mg.
    d_ref : float
        Reference dose for the toxicity model, usually the dose at which
        the MTD was anticipated.
    inserted_index : int, optional
        Position of the mid-trial inserted dose within ``doses``, if any.
    """

    doses: tuple[float, ...]
    d_ref: float
    inserted_index: int | None = None

    def __post_init__(self):
        if len(self.doses) == 0:
            raise ValueError("dose grid is empty")
        if any(d <= 0 for d in self.doses):
            raise ValueError("doses must be positive")
        if any(a >= b for a, b in zip(self.doses, self.doses[1:])):
            raise ValueError("doses must be strictly increasing")
        if self.d_ref <= 0 or not math.isfinite(self.d_ref):
            raise ValueError("d_ref must be positive and finite")
        if self.inserted_index is not None and not (
            0 <= self.inserted_index < len(self.doses)
        ):
            raise ValueError("inserted_index out of range")

    @property
    def d_bar(self) -> float:
        """Average of all planned doses, the standardization constant."""
        return sum(self.doses) / len(self.doses)

    def insert(self, d_star: float) -> DoseGrid:
        """Return a new grid with ``d_star`` added in sorted position."""
        if d_star in self.doses:
            raise ValueError("dose already planned")
        doses = sorted(self.doses + (d_star,))
        return DoseGrid(tuple(doses), self.d_ref, doses.index(d_star))


@dataclass(frozen=True)
class DoseData:
    """Per-dose counts: patients treated, DLTs, and responses."""

    n: tuple[int, ...]
    t: tuple[int, ...]
    u: tuple[int, ...] | None = None

    def __post_init__(self):
        if len(self.t) != len(self.n):
            raise ValueError("t and n lengths differ")
        if any(tj < 0 or tj > nj for tj, nj in zip(self.t, self.n)):
            raise ValueError("need 0 <= t <= n at every dose")
        if self.u is not None:
            if len(self.u) != len(self.n):
                raise ValueError("u and n lengths differ")
            if any(uj < 0 or uj > nj for uj, nj in zip(self.u, self.n)):
                raise ValueError("need 0 <= u <= n at every dose")


@dataclass(frozen=True)
class BlrmHyper:
    """Prior hyperparameters for the toxicity regression.

    alpha ~ Normal(mu_alpha, sigma_alpha^2), log beta ~ Normal(mu_beta,
    sigma_beta^2).  The default intercept prior centers the curve at the
    toxicity target when evaluated at the reference dose.
    """

    mu_alpha: float
    sigma_alpha: float = 2.0
    mu_beta: float = 0.0
    sigma_beta: float = 1.0

    def __post_init__(self):
        vals = (self.mu_alpha, self.sigma_alpha, self.mu_beta, self.sigma_beta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("hyperparameters must be finite")
        if self.sigma_alpha <= 0 or self.sigma_beta <= 0:
            raise ValueError("prior scales must be positive")

    @classmethod
    def for_target(cls, phi1: float) -> BlrmHyper:
        return cls(mu_alpha=float(logit(phi1)))


@dataclass(frozen=True)
class BlrmPosterior:
    """Joint posterior of (alpha, log beta) on a tensor grid.

    ``weights[i, j]`` is the normalized posterior mass at
    ``(alpha[i], log_beta[j])``.
    """

    alpha: np.ndarray
    log_beta: np.ndarray
    weights: np.ndarray
    hyper: BlrmHyper

    @property
    def alpha_hat(self) -> float:
        return float(self.weights.sum(axis=1) @ self.alpha)

    @property
    def beta_hat(self) -> float:
        return float(self.weights.sum(axis=0) @ np.exp(self.log_beta))

    def curve(self, dose: float, d_ref: float) -> np.ndarray:
        """Node-wise fitted toxicity probability at ``dose``."""
        x = math.log(dose / d_ref)
        return expit(self.alpha[:, None] + np.exp(self.log_beta)[None, :] * x)


@dataclass(frozen=True)
class FpFit:
    """A fitted fractional polynomial efficacy model."""

    k1: float
    k2: float
    alpha: float
    beta1: float
    beta2: float
    deviance: float
    converged: bool = True

    @property
    def coef(self) -> np.ndarray:
        return np.array([self.alpha, self.beta1, self.beta2])


@dataclass(frozen=True)
class SkeletonBundle:
    """Skeletons, posterior moments, and effective sample sizes for d*.

    ``ess_t``/``ess_e`` carry the scaled and capped values; ``s_t``/``s_e``
    are their half-up-rounded integer forms used as prior strengths.
    Efficacy fields stay None when only toxicity was requested.
    """

    r: float
    mu_t: float
    v_t: float
    ess_t: float
    s_t: int
    alpha_hat: float
    beta_hat: float
    v: float | None = None
    mu_e: float | None = None
    v_e: float | None = None
    ess_e: float | None = None
    s_e: int | None = None
    fp_powers: tuple[float, float] | None = None
    flags: tuple[str, ...] = ()


def fit_blrm(
    grid: DoseGrid, data: DoseData, hyper: BlrmHyper, nodes: int = 201
) -> BlrmPosterior:
    """Fit the toxicity regression by tensor-grid quadrature.

    The grid spans six prior standard deviations around the prior means
    in each coordinate of (alpha, log beta); uniform spacing makes the
    normalized node weights a valid quadrature rule for posterior
    expectations.

    Parameters
    ----------
    grid, data : DoseGrid, DoseData
        Doses and per-dose (n, t) counts; doses with n = 0 carry no
        likelihood and are skipped.
    hyper : BlrmHyper
        Prior location and scale for intercept and log slope.
    nodes : int
        Grid resolution per axis.

    Returns
    -------
    BlrmPosterior
    """
    if len(data.n) != len(grid.doses):
        raise ValueError("data length does not match dose grid")
    if all(nj == 0 for nj in data.n):
        raise ValueError("no data")
    alpha = hyper.mu_alpha + hyper.sigma_alpha * np.linspace(-6.0, 6.0, nodes)
    log_beta = hyper.mu_beta + hyper.sigma_beta * np.linspace(-6.0, 6.0, nodes)
    beta = np.exp(log_beta)

    log_w = (
        -0.5 * ((alpha[:, None] - hyper.mu_alpha) / hyper.sigma_alpha) ** 2
        - 0.5 * ((log_beta[None, :] - hyper.mu_beta) / hyper.sigma_beta) ** 2
    )
    for dose, nj, tj in zip(grid.doses, data.n, data.t):
        if nj == 0:
            continue
        eta = alpha[:, None] + beta[None, :] * math.log(dose / grid.d_ref)
        log_w = log_w + tj * log_expit(eta) + (nj - tj) * log_expit(-eta)
    log_w -= log_w.max()
    w = np.exp(log_w)
    w /= w.sum()
    return BlrmPosterior(alpha=alpha, log_beta=log_beta, weights=w, hyper=hyper)


def toxicity_skeleton(
    post: BlrmPosterior, grid: DoseGrid, d_star: float
) -> tuple[float, float, float]:
    """Toxicity skeleton and posterior moments of p_T at the new dose.

    Returns the plug-in skeleton r evaluated at the posterior means of
    (alpha, beta) together with the exact quadrature mean and variance
    of p_T(d*).
    """
    if d_star <= 0:
        raise ValueError("d_star must be positive")
    r = float(expit(post.alpha_hat + post.beta_hat * math.log(d_star / grid.d_ref)))
    p = post.curve(d_star, grid.d_ref)
    mu = float((post.weights * p).sum())
    var = float((post.weights * (p - mu) ** 2).sum())
    return r, mu, var


def fp_basis(d_std: float, k1: float, k2: float) -> tuple[float, float]:
    """Evaluate the two fractional polynomial basis functions.

    Repeated powers introduce a log factor; a zero power means the log
    itself.  ``d_std`` is the dose divided by the average planned dose.
    """
    if d_std <= 0:
        raise ValueError("standardized dose must be positive")
    ld = math.log(d_std)
    f1 = ld if k1 == 0 else d_std**k1
    if k1 == k2 == 0:
        f2 = ld * ld
    elif k1 == k2:
        f2 = d_std**k1 * ld
    elif k2 == 0:
        f2 = ld
    else:
        f2 = d_std**k2
    return f1, f2


def _fp_design(grid: DoseGrid, data: DoseData, k1: float, k2: float):
    """Design matrix and counts restricted to doses with patients."""
    rows, ns, us = [], [], []
    for dose, nj, uj in zip(grid.doses, data.n, data.u):
        if nj == 0:
            continue
        f1, f2 = fp_basis(dose / grid.d_bar, k1, k2)
        rows.append((1.0, f1, f2))
        ns.append(nj)
        us.append(uj)
    return np.array(rows), np.array(ns, dtype=float), np.array(us, dtype=float)


def _binom_loglik(theta, x_mat, ns, us) -> float:
    eta = x_mat @ theta
    return float(us @ log_expit(eta) + (ns - us) @ log_expit(-eta))


def _saturated_loglik(ns, us) -> float:
    # 0 * log 0 := 0 at the boundary proportions
    ll = 0.0
    for nj, uj in zip(ns, us):
        if 0 < uj:
            ll += uj * math.log(uj / nj)
        if uj < nj:
            ll += (nj - uj) * math.log(1 - uj / nj)
    return ll


_COEF_BOUND = 20.0


def fit_fp_mle(grid: DoseGrid, data: DoseData, k1: float, k2: float) -> FpFit:
    """Maximum likelihood fit of one fractional polynomial model.

    Newton iterations with step-halving run until the gradient norm
    drops below 1e-8 (at most 200 steps); coefficients are clamped to
    |coef| <= 20 so separated data cannot diverge.  A fit that never
    meets the gradient tolerance is returned with ``converged=False``
    rather than raising.
    """
    if data.u is None:
        raise ValueError("efficacy counts missing")
    x_mat, ns, us = _fp_design(grid, data, k1, k2)
    if len(ns) == 0:
        raise ValueError("no data")

    def clamped_grad(theta, g):
        # gradient components pointing out of an active clamp don't count
        out = g.copy()
        out[(theta >= _COEF_BOUND) & (g > 0)] = 0.0
        out[(theta <= -_COEF_BOUND) & (g < 0)] = 0.0
        return out

    theta = np.zeros(3)
    ll = _binom_loglik(theta, x_mat, ns, us)
    converged = False
    for _ in range(200):
        p = expit(x_mat @ theta)
        g = x_mat.T @ (us - ns * p)
        gproj = clamped_grad(theta, g)
        if float(np.linalg.norm(gproj)) < 1e-8:
            converged = True
            break
        w = ns * p * (1 - p)
        h = x_mat.T @ (x_mat * w[:, None])
        # Newton on the coordinates not pinned at an active clamp, damping
        # the step until it improves; separation leaves the full Hessian
        # near-singular, where the undamped direction is useless
        idx = np.flatnonzero(
            ~(((theta >= _COEF_BOUND) & (g > 0)) | ((theta <= -_COEF_BOUND) & (g < 0)))
        )
        hf, gf = h[np.ix_(idx, idx)], g[idx]
        found = None
        lam = 0.0
        for _ in range(60):
            hd = hf + lam * np.eye(len(idx)) if lam > 0 else hf
            try:
                step = np.linalg.solve(hd, gf)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(hd, gf, rcond=None)[0]
            if not np.all(np.isfinite(step)):
                step = np.linalg.lstsq(hd, gf, rcond=None)[0]
            cand = theta.copy()
            cand[idx] = np.clip(cand[idx] + step, -_COEF_BOUND, _COEF_BOUND)
            cand_ll = _binom_loglik(cand, x_mat, ns, us)
            if cand_ll > ll:
                found = (cand, cand_ll)
                break
            lam = max(8.0 * lam, 1e-10 * (1.0 + float(np.trace(hf))))
        if found is None:
            break
        theta, ll = found

    if not converged:
        p = expit(x_mat @ theta)
        g = x_mat.T @ (us - ns * p)
        converged = float(np.linalg.norm(clamped_grad(theta, g))) < 1e-8

    deviance = max(-2.0 * (ll - _saturated_loglik(ns, us)), 0.0)
    return FpFit(
        k1=k1,
        k2=k2,
        alpha=float(theta[0]),
        beta1=float(theta[1]),
        beta2=float(theta[2]),
        deviance=deviance,
        converged=converged,
    )


def select_fp_powers(grid: DoseGrid, data: DoseData) -> FpFit:
    """Fit all 28 unordered power pairs and keep the smallest deviance.

    Deviance ties within 1e-10 go to the pair with the smaller
    |k1| + |k2|, then to the lexicographically smaller pair.
    """
    best = None
    for i, k1 in enumerate(POWER_SET):
        for k2 in POWER_SET[i:]:
            fit = fit_fp_mle(grid, data, k1, k2)
            if best is None:
                best = fit
                continue
            if fit.deviance < best.deviance - 1e-10:
                best = fit
            elif abs(fit.deviance - best.deviance) <= 1e-10:
                old = (abs(best.k1) + abs(best.k2), (best.k1, best.k2))
                new = (abs(fit.k1) + abs(fit.k2), (fit.k1, fit.k2))
                if new < old:
                    best = fit
    return best


def efficacy_skeleton(
    fit: FpFit,
    grid: DoseGrid,
    data: DoseData,
    d_star: float,
    prior_sd: float = 2.0,
    draws: int = 4096,
    seed: int = EFFICACY_DRAW_SEED,
) -> tuple[float, float, float, tuple[str, ...]]:
    """Efficacy skeleton and posterior moments of p_E at the new dose.

    A Gaussian approximation centered at the MLE, with curvature from
    the observed information plus independent Normal(0, prior_sd^2)
    coefficient priors, is sampled with a fixed seed and mapped through
    the inverse logit at d*.  Returns (v, mu_E, v_E, flags) with
    v = mu_E and v_E floored at 1e-8.
    """
    if d_star <= 0:
        raise ValueError("d_star must be positive")
    x_mat, ns, us = _fp_design(grid, data, fit.k1, fit.k2)
    p = expit(x_mat @ fit.coef)
    w = ns * p * (1 - p)
    h = x_mat.T @ (x_mat * w[:, None]) + np.eye(3) / prior_sd**2
    flags: tuple[str, ...] = ()
    try:
        chol = np.linalg.cholesky(np.linalg.inv(h))
    except np.linalg.LinAlgError:
        h = h + 1e-6 * np.eye(3)
        chol = np.linalg.cholesky(np.linalg.inv(h))
        flags = ("efficacy_ridged",)

    rng = np.random.default_rng(seed)
    thetas = fit.coef + rng.standard_normal((draws, 3)) @ chol.T
    f1, f2 = fp_basis(d_star / grid.d_bar, fit.k1, fit.k2)
    samples = expit(thetas @ np.array([1.0, f1, f2]))
    mu = float(samples.mean())
    var = max(float(samples.var()), 1e-8)
    return mu, mu, var, flags


def ess_from_moments(mu: float, var: float) -> float:
    """Beta moment-matched prior size: mu(1-mu)/var - 1, floored at 0."""
    if not 0 < mu < 1:
        raise ValueError("mean must be inside (0, 1)")
    if var <= 0:
        raise ValueError("variance must be positive")
    return max(mu * (1 - mu) / var - 1.0, 0.0)


def adjust_ess(ess: float, gamma: float, cap: float) -> float:
    """Scale by gamma and truncate to [0, cap]."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if cap < 0:
        raise ValueError("cap must be nonnegative")
    return max(min(gamma * ess, cap), 0.0)


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves away from zero upward."""
    return int(math.floor(x + 0.5))


@lru_cache(maxsize=65536)
def compute_bundle(
    grid: DoseGrid,
    data: DoseData,
    hyper: BlrmHyper,
    gamma_t: float = 1.0,
    gamma_e: float = 1.0,
    include_efficacy: bool = False,
    nodes: int = 201,
) -> SkeletonBundle:
    """Build the full skeleton bundle for the inserted dose.

    ``grid`` must already contain the inserted dose; its slot in
    ``data`` holds whatever has been observed there (zero at insertion
    time).  The ESS cap is the largest per-dose sample size among the
    doses used in estimation.

    Results are memoized on the (grid, data, hyperparameter) value, so
    repeated refits inside large simulations cost one fit each.
    """
    if grid.inserted_index is None:
        raise ValueError("grid has no inserted dose")
    d_star = grid.doses[grid.inserted_index]
    cap = max(data.n)

    post = fit_blrm(grid, data, hyper, nodes=nodes)
    r, mu_t, v_t = toxicity_skeleton(post, grid, d_star)
    ess_t = adjust_ess(ess_from_moments(mu_t, v_t), gamma_t, cap)
    flags: tuple[str, ...] = ()

    if not include_efficacy:
        return SkeletonBundle(
            r=r,
            mu_t=mu_t,
            v_t=v_t,
            ess_t=ess_t,
            s_t=round_half_up(ess_t),
            alpha_hat=post.alpha_hat,
            beta_hat=post.beta_hat,
            flags=flags,
        )

    fit = select_fp_powers(grid, data)
    if not fit.converged:
        flags = flags + ("fp_nonconverged",)
    v, mu_e, v_e, eff_flags = efficacy_skeleton(fit, grid, data, d_star)
    ess_e = adjust_ess(ess_from_moments(mu_e, v_e), gamma_e, cap)
    return SkeletonBundle(
        r=r,
        mu_t=mu_t,
        v_t=v_t,
        ess_t=ess_t,
        s_t=round_half_up(ess_t),
        alpha_hat=post.alpha_hat,
        beta_hat=post.beta_hat,
        v=v,
        mu_e=mu_e,
        v_e=v_e,
        ess_e=ess_e,
        s_e=round_half_up(ess_e),
        fp_powers=(fit.k1, fit.k2),
        flags=flags + eff_flags,
    )
