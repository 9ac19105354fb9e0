"""Decision boundaries and hypothesis priors for the four interval designs.

Everything in this module is a pure closed-form computation: the
non-informative BOIN and BOIN-ET cutoffs, the informative hypothesis
priors built from a skeleton (r, v) with pseudo-sample-size s, and the
informative boundaries that shift the cutoffs by (1/n) log prior-ratio
terms for a dose added during the trial.

The non-informative BOIN-ET thresholds are obtained as the uniform-prior
specialization of the informative closed forms, so the two regimes of the
hybrid design are internally consistent by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom


@dataclass(frozen=True)
class ToxicityTargets:
    """Toxicity probability hypotheses: target phi1, sub-target phi2, over-target phi3."""

    phi1: float
    phi2: float
    phi3: float

    def __post_init__(self) -> None:
        if not (0.0 < self.phi2 < self.phi1 < self.phi3 < 1.0):
            raise ValueError(
                f"toxicity targets must satisfy 0 < phi2 < phi1 < phi3 < 1, "
                f"got ({self.phi1}, {self.phi2}, {self.phi3})"
            )

    @property
    def phis(self) -> tuple[float, float, float]:
        """Hypothesis values in hypothesis order (H1, H2, H3)."""
        return (self.phi1, self.phi2, self.phi3)


@dataclass(frozen=True)
class EfficacyTargets:
    """Efficacy probability hypotheses: target delta1 and sub-target delta2."""

    delta1: float
    delta2: float

    def __post_init__(self) -> None:
        if not (0.0 < self.delta2 < self.delta1 < 1.0):
            raise ValueError(
                f"efficacy targets must satisfy 0 < delta2 < delta1 < 1, "
                f"got ({self.delta1}, {self.delta2})"
            )

    @property
    def deltas(self) -> tuple[float, float]:
        return (self.delta1, self.delta2)


@dataclass(frozen=True)
class ToxicityBoundaries:
    """Escalation/de-escalation cutoffs compared against the observed DLT proportion."""

    lambda_e: float
    lambda_d: float


@dataclass(frozen=True)
class EtBoundaries:
    """Toxicity cutoffs (lambda1 < lambda2) and efficacy cutoff eta for the ET rules."""

    lambda1: float
    lambda2: float
    eta: float


@dataclass(frozen=True)
class HypothesisPrior:
    """Prior probabilities over the design hypotheses.

    ``pi`` is either a length-3 tuple (toxicity-only designs, hypotheses
    H1..H3) or a 3x2 nested tuple (toxicity x efficacy designs, entry
    [k][m] for hypothesis H_{k,m}).  Entries are positive and sum to 1.
    """

    pi: tuple

    def __post_init__(self) -> None:
        flat = self.flat()
        if len(flat) not in (3, 6):
            raise ValueError("prior must have 3 entries or a 3x2 grid")
        if any(not (0.0 < p < 1.0) for p in flat):
            raise ValueError(f"prior entries must lie in (0,1), got {flat}")
        if abs(sum(flat) - 1.0) > 1e-12:
            raise ValueError(f"prior entries must sum to 1, got {sum(flat)!r}")

    def flat(self) -> tuple[float, ...]:
        if self.pi and isinstance(self.pi[0], tuple):
            return tuple(p for row in self.pi for p in row)
        return tuple(self.pi)

    @property
    def is_grid(self) -> bool:
        return bool(self.pi) and isinstance(self.pi[0], tuple)

    @staticmethod
    def uniform3() -> "HypothesisPrior":
        return HypothesisPrior(pi=(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0))

    @staticmethod
    def uniform6() -> "HypothesisPrior":
        row = (1.0 / 6.0, 1.0 / 6.0)
        return HypothesisPrior(pi=(row, row, row))


@dataclass(frozen=True)
class PriorStrength:
    """Skeleton values and pseudo-sample sizes attached to an inserted dose.

    ``s`` is the toxicity-side pseudo-count; ``s_eff`` (efficacy side)
    defaults to ``s``.  Both are integers because the prior sums iterate
    over binomial outcomes 0..s; fractional ESS values are rounded
    half-up upstream.
    """

    s: int
    r: float
    v: float | None = None
    s_eff: int | None = None

    def __post_init__(self) -> None:
        if self.s < 0 or int(self.s) != self.s:
            raise ValueError(f"s must be a nonnegative integer, got {self.s}")
        if not (0.0 < self.r < 1.0):
            raise ValueError(f"toxicity skeleton r must lie in (0,1), got {self.r}")
        if self.v is not None and not (0.0 < self.v < 1.0):
            raise ValueError(f"efficacy skeleton v must lie in (0,1), got {self.v}")
        if self.s_eff is not None and (self.s_eff < 0 or int(self.s_eff) != self.s_eff):
            raise ValueError(f"s_eff must be a nonnegative integer, got {self.s_eff}")

    @property
    def efficacy_strength(self) -> int:
        return self.s if self.s_eff is None else self.s_eff


def boin_boundaries(targets: ToxicityTargets) -> ToxicityBoundaries:
    """Non-informative escalation/de-escalation cutoffs.

    Closed forms in terms of the three hypothesis probabilities; the
    observed DLT proportion is compared against (lambda_e, lambda_d).
    """
    phi1, phi2, phi3 = targets.phis
    lam_e = math.log((1 - phi2) / (1 - phi1)) / math.log(
        phi1 * (1 - phi2) / (phi2 * (1 - phi1))
    )
    lam_d = math.log((1 - phi1) / (1 - phi3)) / math.log(
        phi3 * (1 - phi1) / (phi1 * (1 - phi3))
    )
    return ToxicityBoundaries(lambda_e=lam_e, lambda_d=lam_d)


def _mixture_weights(hyps: np.ndarray, s: int, skeleton: float) -> np.ndarray:
    """Binomial-mixture hypothesis weights.

    For each hypothesis value h in ``hyps`` returns
    sum_x w(x, h) * Binom(x; s, skeleton), where w(x, h) normalizes
    h^x (1-h)^(s-x) across the hypotheses.  s = 0 degenerates to the
    uniform 1/len(hyps).
    """
    x = np.arange(s + 1)
    pmf = binom.pmf(x, s, skeleton)
    # rows: hypotheses, cols: outcomes x
    lik = hyps[:, None] ** x[None, :] * (1.0 - hyps[:, None]) ** (s - x)[None, :]
    w = lik / lik.sum(axis=0, keepdims=True)
    return w @ pmf


def iboin_hypothesis_prior(
    strength: PriorStrength, targets: ToxicityTargets
) -> HypothesisPrior:
    """Informative prior over the three toxicity hypotheses.

    Mixes the hypothesis weights over binomial outcomes of s pseudo-patients
    with DLT probability equal to the skeleton r.  s = 0 reduces to the
    uniform (1/3, 1/3, 1/3) assumed by the non-informative design.
    """
    pi = _mixture_weights(np.asarray(targets.phis), strength.s, strength.r)
    pi = pi / pi.sum()
    return HypothesisPrior(pi=tuple(float(p) for p in pi))


def iboin_boundaries(
    prior: HypothesisPrior, n: int, targets: ToxicityTargets
) -> ToxicityBoundaries:
    """Informative cutoffs for a dose added during the trial.

    ``n`` is the number of patients actually treated at the added dose;
    the prior-ratio corrections decay as 1/n, so the cutoffs converge to
    the non-informative ones as data accumulate.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1 (boundary undefined before any patient), got {n}")
    if prior.is_grid:
        raise ValueError("iboin_boundaries expects a length-3 prior")
    pi1, pi2, pi3 = prior.pi
    phi1, phi2, phi3 = targets.phis
    lam_e = (
        math.log((1 - phi2) / (1 - phi1)) + math.log(pi2 / pi1) / n
    ) / math.log(phi1 * (1 - phi2) / (phi2 * (1 - phi1)))
    lam_d = (
        math.log((1 - phi1) / (1 - phi3)) + math.log(pi1 / pi3) / n
    ) / math.log(phi3 * (1 - phi1) / (phi1 * (1 - phi3)))
    return ToxicityBoundaries(lambda_e=lam_e, lambda_d=lam_d)


def iboinet_hypothesis_prior(
    strength: PriorStrength, targets: ToxicityTargets, eff: EfficacyTargets
) -> HypothesisPrior:
    """Informative prior over the six toxicity-by-efficacy hypotheses.

    The double binomial mixture factorizes into independent toxicity and
    efficacy sums, so entry [k][m] is the product of the per-margin
    mixture weights.  The efficacy factor uses the efficacy skeleton v
    and pseudo-count ``strength.efficacy_strength``.
    """
    if strength.v is None:
        raise ValueError("efficacy skeleton v is required for the ET prior")
    pi_t = _mixture_weights(np.asarray(targets.phis), strength.s, strength.r)
    pi_e = _mixture_weights(
        np.asarray(eff.deltas), strength.efficacy_strength, strength.v
    )
    grid = np.outer(pi_t, pi_e)
    grid = grid / grid.sum()
    return HypothesisPrior(pi=tuple(tuple(float(p) for p in row) for row in grid))


def iboinet_boundaries(
    prior: HypothesisPrior, n: int, targets: ToxicityTargets, eff: EfficacyTargets
) -> EtBoundaries:
    """Informative ET thresholds for a dose added during the trial.

    The toxicity cutoffs shift by log-ratios of efficacy-marginalized
    prior sums; the efficacy cutoff eta shifts by the log-ratio of the
    sub-target to target efficacy columns.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1 (boundary undefined before any patient), got {n}")
    if not prior.is_grid:
        raise ValueError("iboinet_boundaries expects a 3x2 prior grid")
    p = prior.pi
    row = [p[k][0] + p[k][1] for k in range(3)]  # marginal over efficacy
    col = [p[0][m] + p[1][m] + p[2][m] for m in range(2)]  # marginal over toxicity
    phi1, phi2, phi3 = targets.phis
    delta1, delta2 = eff.deltas
    lam1 = (
        math.log((1 - phi2) / (1 - phi1)) + math.log(row[1] / row[0]) / n
    ) / math.log(phi1 * (1 - phi2) / (phi2 * (1 - phi1)))
    lam2 = (
        math.log((1 - phi1) / (1 - phi3)) + math.log(row[0] / row[2]) / n
    ) / math.log(phi3 * (1 - phi1) / (phi1 * (1 - phi3)))
    eta = (
        math.log((1 - delta2) / (1 - delta1)) + math.log(col[1] / col[0]) / n
    ) / math.log(delta1 * (1 - delta2) / (delta2 * (1 - delta1)))
    return EtBoundaries(lambda1=lam1, lambda2=lam2, eta=eta)


def boinet_boundaries(targets: ToxicityTargets, eff: EfficacyTargets) -> EtBoundaries:
    """Non-informative ET thresholds (uniform-prior specialization, n-free)."""
    return iboinet_boundaries(HypothesisPrior.uniform6(), 1, targets, eff)
