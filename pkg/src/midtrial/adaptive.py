"""Post-insertion skeleton adaptation.

Three schemes refresh the inserted dose's skeleton as its own outcomes
accrue: exponential online weighting over {skeleton fixed at insertion,
refreshed model fit} (Hedge), hard selection of the historically better
of those two (follow-the-leader), and a three-candidate Bayesian
mixture over {model fit at d*, observed rate one dose above, observed
rate one dose below}.  All updates are value-to-value; states are
immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

# Degenerate candidates would produce infinite losses; keep them inside
# the open interval instead.
CANDIDATE_FLOOR = 1e-6
LOSS_CEILING = 1e12
# long loss streaks can underflow a weight to exactly zero; keep the
# simplex interior instead
WEIGHT_FLOOR = 1e-300


def clamp_candidate(p: float) -> float:
    return min(max(p, CANDIDATE_FLOOR), 1.0 - CANDIDATE_FLOOR)


def adjacent_candidate(t: int, n: int) -> float:
    """Observed toxicity proportion at a neighboring dose.

    Boundary counts (t = 0 or t = n, including n = 0) are shrunk to
    1/(2n+2) from the edge so the candidate keeps a proper likelihood.
    """
    if not 0 <= t <= n:
        raise ValueError("need 0 <= t <= n")
    if t == 0 or t == n:
        edge = 1.0 / (2 * n + 2)
        return edge if t == 0 else 1.0 - edge
    return t / n


@dataclass(frozen=True)
class CandidateSet:
    """Labeled candidate skeletons, clamped into (0, 1) on entry."""

    labels: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.values):
            raise ValueError("labels and values lengths differ")
        if any(not 0 < v < 1 for v in self.values):
            raise ValueError("candidate skeletons must lie in (0, 1)")

    @classmethod
    def hedge_pair(cls, previous: float, refreshed: float) -> CandidateSet:
        return cls(
            labels=("previous", "refreshed"),
            values=(clamp_candidate(previous), clamp_candidate(refreshed)),
        )

    @classmethod
    def mixture_triplet(cls, r1: float, r2: float, r3: float) -> CandidateSet:
        """Fixed order: model at d*, dose above, dose below."""
        return cls(
            labels=("model", "above", "below"),
            values=(clamp_candidate(r1), clamp_candidate(r2), clamp_candidate(r3)),
        )


@dataclass(frozen=True)
class WeightState:
    """Simplex weights with per-candidate cumulative losses."""

    weights: tuple[float, ...]
    cumulative_losses: tuple[float, ...]
    t: int = 0
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.cumulative_losses) != len(self.weights):
            raise ValueError("losses and weights lengths differ")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if any(c < 0 for c in self.cumulative_losses):
            raise ValueError("cumulative losses must be nonnegative")

    @classmethod
    def uniform(cls, k: int) -> WeightState:
        return cls(weights=(1.0 / k,) * k, cumulative_losses=(0.0,) * k)


@dataclass(frozen=True)
class IntervalOutcome:
    """Counts observed at the inserted dose between two updates."""

    n_star: int
    y_star: int

    def __post_init__(self):
        if not 0 <= self.y_star <= self.n_star:
            raise ValueError("need 0 <= y_star <= n_star")


def log_loss(p: float, outcome: IntervalOutcome) -> float:
    """Binomial negative log-likelihood without the constant term.

    The dropped binomial coefficient is shared by every candidate, so
    weight updates are unaffected.  Outcomes impossible under p give the
    saturating value 1e12 rather than infinity.
    """
    y, n = outcome.y_star, outcome.n_star
    loss = 0.0
    if y > 0:
        loss += -y * math.log(p) if p > 0 else math.inf
    if n - y > 0:
        loss += -(n - y) * math.log(1.0 - p) if p < 1 else math.inf
    return min(loss, LOSS_CEILING)


def hedge_update(
    state: WeightState, cands: CandidateSet, outcome: IntervalOutcome
) -> WeightState:
    """Multiply each weight by exp(-loss) and renormalize.

    Since exp of the negative log loss is the binomial likelihood, this
    is exactly a Bayes posterior over the candidate point hypotheses.
    """
    losses = [log_loss(v, outcome) for v in cands.values]
    # log-space keeps long loss streaks from underflowing to 0/0
    logs = [math.log(w) - l for w, l in zip(state.weights, losses)]
    peak = max(logs)
    raw = [max(math.exp(x - peak), WEIGHT_FLOOR) for x in logs]
    total = sum(raw)
    return WeightState(
        weights=tuple(x / total for x in raw),
        cumulative_losses=tuple(
            c + l for c, l in zip(state.cumulative_losses, losses)
        ),
        t=state.t + 1,
        flags=state.flags,
    )


def combined_skeleton(state: WeightState, cands: CandidateSet) -> float:
    """Weight-averaged skeleton; always inside the candidate hull."""
    return sum(w * v for w, v in zip(state.weights, cands.values))


def ftl_index(state: WeightState) -> int:
    return min(
        range(len(state.cumulative_losses)),
        key=lambda i: (state.cumulative_losses[i], i),
    )


def ftl_select(state: WeightState, cands: CandidateSet) -> float:
    """Candidate with the smallest cumulative loss; ties keep index 0."""
    return cands.values[ftl_index(state)]


def mixture_posterior(
    state: WeightState, cands: CandidateSet, outcome: IntervalOutcome
) -> WeightState:
    """Bayes-update the candidate weights with binomial evidence.

    The marginal likelihood of each candidate keeps its binomial
    coefficient even though it cancels.  If every likelihood underflows
    to zero the weights are returned unchanged with a flag.
    """
    y, n = outcome.y_star, outcome.n_star
    coef = math.comb(n, y)
    pmfs = [coef * v**y * (1.0 - v) ** (n - y) for v in cands.values]
    losses = [log_loss(v, outcome) for v in cands.values]
    raw = [w * m for w, m in zip(state.weights, pmfs)]
    total = sum(raw)
    new_losses = tuple(c + l for c, l in zip(state.cumulative_losses, losses))
    if total == 0.0:
        return replace(
            state,
            cumulative_losses=new_losses,
            t=state.t + 1,
            flags=state.flags + ("mixture_evidence_underflow",),
        )
    return WeightState(
        weights=tuple(max(x, WEIGHT_FLOOR) / total for x in raw),
        cumulative_losses=new_losses,
        t=state.t + 1,
        flags=state.flags,
    )


def mixture_skeleton(state: WeightState, cands: CandidateSet, mode: str) -> float:
    """Collapse the mixture: 'blend' averages, 'map' picks the heaviest.

    Weight ties under 'map' go to the smallest index, i.e. the model
    candidate first.
    """
    if mode == "blend":
        return combined_skeleton(state, cands)
    if mode == "map":
        idx = max(range(len(state.weights)), key=lambda i: (state.weights[i], -i))
        return cands.values[idx]
    raise ValueError(f"unknown mixture mode: {mode!r}")
