"""Sequential dose-finding state machine with mid-trial insertion.

One `step` per cohort: record outcomes, run safety/futility
elimination, refresh the inserted dose's skeleton when adaptation is
on, evaluate the borrowing guard, decide the next dose, fire the
insertion trigger when warranted, and check stopping.  States are
immutable values; every step returns the successor state plus a
JSON-ready audit record.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import betainc

from .adaptive import (
    CandidateSet,
    IntervalOutcome,
    WeightState,
    adjacent_candidate,
    combined_skeleton,
    ftl_select,
    hedge_update,
    mixture_posterior,
    mixture_skeleton,
)
from .boundaries import (
    EfficacyTargets,
    PriorStrength,
    ToxicityTargets,
    boin_boundaries,
    boinet_boundaries,
    iboin_boundaries,
    iboin_hypothesis_prior,
    iboinet_boundaries,
    iboinet_hypothesis_prior,
)
from .skeleton import BlrmHyper, DoseData, DoseGrid, SkeletonBundle, compute_bundle

VARIANTS = ("boin", "hybrid-iboin", "boinet", "hybrid-iboinet")
ADAPTIVE_MODES = ("none", "hedge", "ftl", "mixture-blend", "mixture-map")

ACTIVE = "active"
STOPPED_MAX_N = "stopped_max_n"
STOPPED_STAY_CAP = "stopped_stay_cap"
STOPPED_ALL_ELIMINATED = "stopped_all_eliminated"


@dataclass(frozen=True)
class EngineConfig:
    """Design parameters for one trial variant.

    The ET family reads both toxicity and efficacy targets; the BOIN
    family ignores `eff`.  Informative treatment of the inserted dose
    and adaptive skeleton updating only apply to hybrid variants.
    """

    targets: ToxicityTargets
    eff: EfficacyTargets | None = None
    variant: str = "boin"
    adaptive_mode: str = "none"
    cohort_size: int = 3
    n_initial: int = 24
    n_after_insert: int = 30
    per_dose_cap: int = 12
    elim_tox_threshold: float = 0.95
    elim_eff_threshold: float = 0.99
    elim_min_n: int = 3
    borrow_c: float = 1.0
    gamma1: float = 1.0
    gamma2: float = 1.0
    hyper: BlrmHyper | None = None
    obd_tox_margin: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant: {self.variant!r}")
        if self.adaptive_mode not in ADAPTIVE_MODES:
            raise ValueError(f"unknown adaptive mode: {self.adaptive_mode!r}")
        if self.is_et_family and self.eff is None:
            raise ValueError("ET variants need efficacy targets")
        if self.adaptive_mode != "none" and not self.is_hybrid:
            raise ValueError("adaptive updating needs a hybrid variant")
        if self.cohort_size < 1:
            raise ValueError("cohort_size must be positive")

    @property
    def is_et_family(self) -> bool:
        return self.variant in ("boinet", "hybrid-iboinet")

    @property
    def is_hybrid(self) -> bool:
        return self.variant in ("hybrid-iboin", "hybrid-iboinet")

    def effective_hyper(self) -> BlrmHyper:
        if self.hyper is not None:
            return self.hyper
        return BlrmHyper.for_target(self.targets.phi1)

    @classmethod
    def boin_family(cls, phi1: float = 0.30, **kw) -> EngineConfig:
        # phi2 = 0.6 phi1 and phi3 = 1.4 phi1 are the recommended defaults
        targets = ToxicityTargets(phi1, 0.6 * phi1, 1.4 * phi1)
        return cls(targets=targets, **kw)

    @classmethod
    def et_family(cls, phi1: float = 0.30, delta1: float = 0.5, **kw) -> EngineConfig:
        targets = ToxicityTargets(phi1, 0.1 * phi1, 1.4 * phi1)
        eff = EfficacyTargets(delta1=delta1, delta2=0.6 * delta1)
        kw.setdefault("variant", "boinet")
        return cls(targets=targets, eff=eff, **kw)


@dataclass(frozen=True)
class InsertedDoseState:
    """Everything attached to the inserted dose after insertion.

    `r`/`s_t` (and `v`/`s_e` for ET) are the skeleton and prior
    strength in effect for the next decision; adaptation replaces them,
    the plain variants leave `r` as None so the dose stays
    non-informative.  `guard` records the most recent borrowing-guard
    outcome.
    """

    index: int
    bundle: SkeletonBundle | None
    r: float | None = None
    s_t: int = 0
    v: float | None = None
    s_e: int = 0
    tox_state: WeightState | None = None
    eff_state: WeightState | None = None
    guard: str = "borrow"


@dataclass(frozen=True)
class CohortOutcome:
    """Counts observed in one cohort: DLTs and responses."""

    dlt: int
    resp: int = 0

    def __post_init__(self):
        if self.dlt < 0 or self.resp < 0:
            raise ValueError("counts must be nonnegative")


@dataclass(frozen=True)
class TrialState:
    grid: DoseGrid
    data: DoseData
    current_dose: int
    tox_eliminated: tuple[bool, ...]
    fut_eliminated: tuple[bool, ...]
    enrolled: int
    n_total: int
    rng_state: str
    inserted: InsertedDoseState | None = None
    status: str = ACTIVE
    step_index: int = 0

    @classmethod
    def start(cls, grid: DoseGrid, cfg: EngineConfig, seed: int) -> TrialState:
        """Fresh trial at the lowest dose with an owned decision stream."""
        j = len(grid.doses)
        return cls(
            grid=grid,
            data=DoseData(n=(0,) * j, t=(0,) * j, u=(0,) * j),
            current_dose=0,
            tox_eliminated=(False,) * j,
            fut_eliminated=(False,) * j,
            enrolled=0,
            n_total=cfg.n_initial,
            rng_state=json.dumps(np.random.PCG64(seed).state),
        )

    def p_hat(self, j: int) -> float:
        return self.data.t[j] / self.data.n[j]

    def q_hat(self, j: int) -> float:
        return self.data.u[j] / self.data.n[j]

    def eliminated(self, j: int) -> bool:
        return self.tox_eliminated[j] or self.fut_eliminated[j]

    def assignable(self, j: int, cfg: EngineConfig) -> bool:
        return not self.eliminated(j) and self.data.n[j] < cfg.per_dose_cap


def adopt_midtrial_state(
    grid: DoseGrid,
    data: DoseData,
    cfg: EngineConfig,
    seed: int,
    current_dose: int | None = None,
) -> TrialState:
    """Open a trial mid-stream from externally accumulated counts.

    When the grid carries an inserted dose, the insertion bookkeeping
    (skeleton bundle, adaptive weights, raised budget) is rebuilt as if
    the trigger had just fired, and the next cohort defaults to that
    dose.  Elimination rules are applied to the adopted counts once.
    """
    if len(data.n) != len(grid.doses):
        raise ValueError("counts must align with the dose grid")
    state = TrialState.start(grid, cfg, seed)
    state = replace(state, data=data, enrolled=sum(data.n))
    if grid.inserted_index is not None:
        idx = grid.inserted_index
        bundle = None
        if cfg.is_hybrid:
            bundle = compute_bundle(
                grid,
                data,
                cfg.effective_hyper(),
                cfg.gamma1,
                cfg.gamma2,
                cfg.is_et_family,
            )
        k = 2 if cfg.adaptive_mode in ("hedge", "ftl") else 3
        weights = WeightState.uniform(k) if cfg.adaptive_mode != "none" else None
        ins = InsertedDoseState(
            index=idx,
            bundle=bundle,
            r=bundle.r if bundle else None,
            s_t=bundle.s_t if bundle else 0,
            v=bundle.v if bundle else None,
            s_e=(bundle.s_e or 0) if bundle else 0,
            tox_state=weights,
            eff_state=weights if cfg.is_et_family else None,
        )
        state = replace(
            state,
            current_dose=idx if current_dose is None else current_dose,
            inserted=ins,
            n_total=cfg.n_after_insert,
        )
    elif current_dose is not None:
        state = replace(state, current_dose=current_dose)
    if not 0 <= state.current_dose < len(grid.doses):
        raise ValueError("starting dose outside the grid")
    return apply_elimination(state, cfg)


def _draw_rng(state_json: str) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = json.loads(state_json)
    return np.random.Generator(bg)


@lru_cache(maxsize=4096)
def _beta_tail_above(t: int, n: int, cut: float) -> float:
    # Pr(p > cut) under Beta(1 + t, 1 + n - t)
    return 1.0 - float(betainc(1 + t, 1 + n - t, cut))


@lru_cache(maxsize=4096)
def _beta_mass_below(u: int, n: int, cut: float) -> float:
    return float(betainc(1 + u, 1 + n - u, cut))


def apply_elimination(state: TrialState, cfg: EngineConfig) -> TrialState:
    """Flag overly toxic doses (and everything above) and futile doses.

    Toxicity checks need at least `elim_min_n` patients; futility
    checks (ET family) apply to any tried dose.  Flags are sticky.
    """
    tox = list(state.tox_eliminated)
    for j, (nj, tj) in enumerate(zip(state.data.n, state.data.t)):
        if nj >= cfg.elim_min_n and _beta_tail_above(
            tj, nj, cfg.targets.phi1
        ) > cfg.elim_tox_threshold:
            for k in range(j, len(tox)):
                tox[k] = True
            break
    fut = list(state.fut_eliminated)
    if cfg.is_et_family:
        for j, (nj, uj) in enumerate(zip(state.data.n, state.data.u)):
            if nj >= 1 and _beta_mass_below(
                uj, nj, cfg.eff.delta1
            ) > cfg.elim_eff_threshold:
                fut[j] = True
    return replace(state, tox_eliminated=tuple(tox), fut_eliminated=tuple(fut))


def borrowing_guard(state: TrialState, cfg: EngineConfig) -> str:
    """Check the skeleton against the observed rate at the inserted dose.

    Borrowing is discarded for this step when the observed toxicity
    exceeds the pooled skeleton estimate by more than c; the check is
    re-run every cohort, so borrowing can resume if the data move back.
    """
    ins = state.inserted
    if ins is None or ins.r is None or not cfg.is_hybrid:
        return "borrow"
    n = state.data.n[ins.index]
    if n == 0 or ins.s_t == 0:
        return "borrow"
    t = state.data.t[ins.index]
    p_obs = t / n
    p_borrow = (t + ins.s_t * ins.r) / (n + ins.s_t)
    return "discard" if p_obs - p_borrow > cfg.borrow_c else "borrow"


def _informative_at_current(state: TrialState, cfg: EngineConfig) -> bool:
    ins = state.inserted
    return (
        cfg.is_hybrid
        and ins is not None
        and ins.r is not None
        and state.current_dose == ins.index
        and ins.guard == "borrow"
    )


@lru_cache(maxsize=8192)
def _iboin_bounds(s: int, r: float, n: int, targets: ToxicityTargets):
    prior = iboin_hypothesis_prior(PriorStrength(s=s, r=r), targets)
    return iboin_boundaries(prior, n, targets)


@lru_cache(maxsize=8192)
def _iboinet_bounds(
    s: int,
    r: float,
    v: float,
    s_e: int,
    n: int,
    targets: ToxicityTargets,
    eff: EfficacyTargets,
):
    prior = iboinet_hypothesis_prior(
        PriorStrength(s=s, r=r, v=v, s_eff=s_e), targets, eff
    )
    return iboinet_boundaries(prior, n, targets, eff)


def boundaries_in_effect(state: TrialState, cfg: EngineConfig) -> dict:
    """Decision boundaries for the current dose, as an audit-ready dict.

    The informative thresholds depend on the inserted dose's sample
    size; before any patient is treated there, the table previews the
    first decision (n = one cohort).
    """
    informative = _informative_at_current(state, cfg)
    ins = state.inserted
    n_eff = 0
    if informative:
        n_eff = state.data.n[ins.index] or cfg.cohort_size
    if not cfg.is_et_family:
        if informative:
            b = _iboin_bounds(ins.s_t, ins.r, n_eff, cfg.targets)
        else:
            b = boin_boundaries(cfg.targets)
        return {
            "family": "boin",
            "informative": informative,
            "lambda_e": b.lambda_e,
            "lambda_d": b.lambda_d,
        }
    if informative:
        b = _iboinet_bounds(
            ins.s_t,
            ins.r,
            ins.v if ins.v is not None else 0.5,
            ins.s_e,
            n_eff,
            cfg.targets,
            cfg.eff,
        )
    else:
        b = boinet_boundaries(cfg.targets, cfg.eff)
    return {
        "family": "et",
        "informative": informative,
        "lambda1": b.lambda1,
        "lambda2": b.lambda2,
        "eta": b.eta,
    }


def _route(state: TrialState, cfg: EngineConfig, start: int, direction: int) -> int:
    """Nearest assignable dose from `start` in `direction`, else stay."""
    j = start + direction
    while 0 <= j < len(state.grid.doses):
        if state.assignable(j, cfg):
            return j
        j += direction
    return start


def decide_next_dose(
    state: TrialState, cfg: EngineConfig
) -> tuple[str, int, dict, str]:
    """Apply the dose-assignment rules at the current dose.

    Returns (decision, next dose index, boundary audit, advanced RNG
    state).  The RNG is only consumed by the ET fallback tie-break.
    """
    j = state.current_dose
    if state.data.n[j] < 1:
        raise ValueError("no patients observed at the current dose")
    bounds = boundaries_in_effect(state, cfg)
    p = state.p_hat(j)
    rng_state = state.rng_state

    if state.eliminated(j):
        decision = "de-escalate"
    elif not cfg.is_et_family:
        if p <= bounds["lambda_e"]:
            decision = "escalate"
        elif p >= bounds["lambda_d"]:
            decision = "de-escalate"
        else:
            decision = "stay"
    else:
        q = state.q_hat(j)
        if p <= bounds["lambda1"] and q <= bounds["eta"]:
            decision = "escalate"
        elif p <= bounds["lambda2"] and q > bounds["eta"]:
            decision = "stay"
        elif p >= bounds["lambda2"]:
            decision = "de-escalate"
        else:
            decision = "choose"

    if decision == "escalate":
        nxt = _route(state, cfg, j, +1)
    elif decision == "de-escalate":
        nxt = _route(state, cfg, j, -1)
    elif decision == "stay":
        nxt = j
    else:
        # highest observed efficacy among the neighbors; untested doses
        # count as tied-highest so exploration is never starved
        cands = []
        for k in (j - 1, j, j + 1):
            if not 0 <= k < len(state.grid.doses):
                continue
            if state.eliminated(k):
                continue
            if k != j and state.data.n[k] >= cfg.per_dose_cap:
                continue
            score = state.q_hat(k) if state.data.n[k] > 0 else math.inf
            cands.append((k, score))
        best = max(s for _, s in cands)
        tied = [k for k, s in cands if s == best]
        if len(tied) == 1:
            nxt = tied[0]
        else:
            rng = _draw_rng(rng_state)
            nxt = tied[int(rng.integers(len(tied)))]
            rng_state = json.dumps(rng.bit_generator.state)

    return decision, nxt, bounds, rng_state


def insertion_trigger(
    state: TrialState, cfg: EngineConfig, decision: str
) -> tuple[int, int] | None:
    """Gap for a new dose, or None.

    Fires on a de-escalation decision at dose g (second level or
    higher) with at least 3 patients observed at both gap doses; the ET
    family additionally needs observed efficacy below delta1 at g-1 and
    above it at g, both strictly.  At most one insertion per trial.
    """
    if state.inserted is not None or decision != "de-escalate":
        return None
    g = state.current_dose
    if g < 1:
        return None
    if state.data.n[g] < 3 or state.data.n[g - 1] < 3:
        return None
    if cfg.is_et_family:
        if not (
            state.q_hat(g - 1) < cfg.eff.delta1 and state.q_hat(g) > cfg.eff.delta1
        ):
            return None
    return (g - 1, g)


def insert_dose(
    state: TrialState, d_star: float, cfg: EngineConfig
) -> tuple[TrialState, SkeletonBundle | None]:
    """Grow the grid, raise the budget, and aim the next cohort at d*.

    Hybrid variants fit the skeleton bundle from all data accumulated
    so far; plain variants insert the dose non-informatively.
    """
    g = state.current_dose
    lo, hi = state.grid.doses[g - 1], state.grid.doses[g]
    if not lo < d_star < hi:
        raise ValueError("inserted dose must lie strictly inside the gap")
    grid = state.grid.insert(d_star)
    idx = grid.inserted_index

    def grow(xs: tuple, fill) -> tuple:
        return xs[:idx] + (fill,) + xs[idx:]

    data = DoseData(
        n=grow(state.data.n, 0), t=grow(state.data.t, 0), u=grow(state.data.u, 0)
    )
    bundle = None
    if cfg.is_hybrid:
        bundle = compute_bundle(
            grid,
            data,
            cfg.effective_hyper(),
            cfg.gamma1,
            cfg.gamma2,
            cfg.is_et_family,
        )
    k = 2 if cfg.adaptive_mode in ("hedge", "ftl") else 3
    weights = WeightState.uniform(k) if cfg.adaptive_mode != "none" else None
    ins = InsertedDoseState(
        index=idx,
        bundle=bundle,
        r=bundle.r if bundle else None,
        s_t=bundle.s_t if bundle else 0,
        v=bundle.v if bundle else None,
        s_e=(bundle.s_e or 0) if bundle else 0,
        tox_state=weights,
        eff_state=weights if cfg.is_et_family else None,
    )
    new = replace(
        state,
        grid=grid,
        data=data,
        tox_eliminated=grow(state.tox_eliminated, False),
        fut_eliminated=grow(state.fut_eliminated, False),
        current_dose=idx,
        inserted=ins,
        n_total=cfg.n_after_insert,
    )
    return new, bundle


def _adaptive_refresh(
    state: TrialState, cfg: EngineConfig, outcome: CohortOutcome
) -> TrialState:
    """Re-learn the inserted dose's skeleton from its newest cohort.

    The refreshed model candidate and the effective sample sizes come
    from a full refit on all current data (including the inserted
    dose); weights update on this cohort's outcomes alone.
    """
    ins = state.inserted
    bundle = compute_bundle(
        state.grid,
        state.data,
        cfg.effective_hyper(),
        cfg.gamma1,
        cfg.gamma2,
        cfg.is_et_family,
    )
    j = ins.index
    mode = cfg.adaptive_mode
    out_t = IntervalOutcome(cfg.cohort_size, outcome.dlt)

    if mode in ("hedge", "ftl"):
        cands = CandidateSet.hedge_pair(ins.bundle.r, bundle.r)
        tox_state = hedge_update(ins.tox_state, cands, out_t)
        r = (
            combined_skeleton(tox_state, cands)
            if mode == "hedge"
            else ftl_select(tox_state, cands)
        )
    else:
        cands = CandidateSet.mixture_triplet(
            bundle.r,
            adjacent_candidate(state.data.t[j + 1], state.data.n[j + 1]),
            adjacent_candidate(state.data.t[j - 1], state.data.n[j - 1]),
        )
        tox_state = mixture_posterior(ins.tox_state, cands, out_t)
        r = mixture_skeleton(
            tox_state, cands, "blend" if mode == "mixture-blend" else "map"
        )

    eff_state, v, s_e = ins.eff_state, ins.v, ins.s_e
    if cfg.is_et_family:
        out_e = IntervalOutcome(cfg.cohort_size, outcome.resp)
        if mode in ("hedge", "ftl"):
            ecands = CandidateSet.hedge_pair(ins.bundle.v, bundle.v)
            eff_state = hedge_update(ins.eff_state, ecands, out_e)
            v = (
                combined_skeleton(eff_state, ecands)
                if mode == "hedge"
                else ftl_select(eff_state, ecands)
            )
        else:
            ecands = CandidateSet.mixture_triplet(
                bundle.v,
                adjacent_candidate(state.data.u[j + 1], state.data.n[j + 1]),
                adjacent_candidate(state.data.u[j - 1], state.data.n[j - 1]),
            )
            eff_state = mixture_posterior(ins.eff_state, ecands, out_e)
            v = mixture_skeleton(
                eff_state, ecands, "blend" if mode == "mixture-blend" else "map"
            )
        s_e = bundle.s_e or 0

    new_ins = replace(
        ins,
        r=r,
        s_t=bundle.s_t,
        v=v,
        s_e=s_e,
        tox_state=tox_state,
        eff_state=eff_state,
    )
    return replace(state, inserted=new_ins)


def check_stopping(state: TrialState, cfg: EngineConfig) -> TrialState:
    """Stop when everything is eliminated, the budget is spent, or the
    routing landed back on a dose that cannot take another cohort.

    The last case only arises on a stay, since routing in either
    direction skips capped and eliminated doses.
    """
    if all(state.eliminated(j) for j in range(len(state.grid.doses))):
        return replace(state, status=STOPPED_ALL_ELIMINATED)
    if state.enrolled >= state.n_total:
        return replace(state, status=STOPPED_MAX_N)
    if not state.assignable(state.current_dose, cfg):
        return replace(state, status=STOPPED_STAY_CAP)
    return state


def step(
    state: TrialState,
    outcome: CohortOutcome,
    cfg: EngineConfig,
    d_star: float | None = None,
) -> tuple[TrialState, dict]:
    """Advance the trial by one cohort at the current dose.

    `d_star` overrides the inserted dose amount should the trigger
    fire this step; by default the arithmetic midpoint of the gap is
    used.  Returns the successor state and the audit record.
    """
    if state.status != ACTIVE:
        raise ValueError("trial already stopped")
    if outcome.dlt > cfg.cohort_size or outcome.resp > cfg.cohort_size:
        raise ValueError("outcome counts exceed the cohort size")

    j = state.current_dose

    def bump(xs: tuple, k: int, by: int) -> tuple:
        return xs[:k] + (xs[k] + by,) + xs[k + 1 :]

    data = DoseData(
        n=bump(state.data.n, j, cfg.cohort_size),
        t=bump(state.data.t, j, outcome.dlt),
        u=bump(state.data.u, j, outcome.resp),
    )
    state = replace(state, data=data, enrolled=state.enrolled + cfg.cohort_size)
    state = apply_elimination(state, cfg)

    at_inserted = state.inserted is not None and j == state.inserted.index
    if at_inserted and cfg.adaptive_mode != "none":
        state = _adaptive_refresh(state, cfg, outcome)
    if state.inserted is not None:
        state = replace(
            state, inserted=replace(state.inserted, guard=borrowing_guard(state, cfg))
        )

    record = {
        "step": state.step_index,
        "dose": j,
        "dose_amount": state.grid.doses[j],
        "cohort": {"n": cfg.cohort_size, "dlt": outcome.dlt, "resp": outcome.resp},
        "at_dose": {"n": data.n[j], "t": data.t[j], "u": data.u[j]},
        "p_hat": state.p_hat(j),
        "q_hat": state.q_hat(j) if cfg.is_et_family else None,
        "guard": state.inserted.guard if state.inserted else None,
        "skeleton": _skeleton_audit(state, cfg),
        "weights": _weights_audit(state),
        "insertion": None,
    }

    if all(state.eliminated(k) for k in range(len(state.grid.doses))):
        state = replace(state, status=STOPPED_ALL_ELIMINATED)
        record.update(
            boundaries=None,
            decision="stop",
            next_dose=None,
            eliminated=_elim_audit(state),
            enrolled=state.enrolled,
            n_total=state.n_total,
            status=state.status,
        )
        return replace(state, step_index=state.step_index + 1), record

    decision, nxt, bounds, rng_state = decide_next_dose(state, cfg)
    state = replace(state, rng_state=rng_state)

    gap = insertion_trigger(state, cfg, decision)
    bundle = None
    if gap is not None:
        lo, hi = state.grid.doses[gap[0]], state.grid.doses[gap[1]]
        amount = d_star if d_star is not None else (lo + hi) / 2.0
        state, bundle = insert_dose(state, amount, cfg)
        nxt = state.current_dose
        record["insertion"] = {
            "gap": [gap[0], gap[1]],
            "d_star": amount,
            "bundle": _bundle_audit(bundle),
        }
    else:
        state = replace(state, current_dose=nxt)

    state = check_stopping(state, cfg)
    record.update(
        boundaries=bounds,
        decision=decision,
        next_dose=state.current_dose if state.status == ACTIVE else None,
        eliminated=_elim_audit(state),
        enrolled=state.enrolled,
        n_total=state.n_total,
        status=state.status,
    )
    return replace(state, step_index=state.step_index + 1), record


def _skeleton_audit(state: TrialState, cfg: EngineConfig) -> dict | None:
    ins = state.inserted
    if ins is None or ins.r is None:
        return None
    out = {"r": ins.r, "s_t": ins.s_t}
    if cfg.is_et_family:
        out.update(v=ins.v, s_e=ins.s_e)
    return out


def _weights_audit(state: TrialState) -> dict | None:
    ins = state.inserted
    if ins is None or ins.tox_state is None:
        return None
    out = {"tox": list(ins.tox_state.weights)}
    if ins.eff_state is not None:
        out["eff"] = list(ins.eff_state.weights)
    return out


def _elim_audit(state: TrialState) -> dict:
    return {
        "tox": list(state.tox_eliminated),
        "futility": list(state.fut_eliminated),
    }


def _bundle_audit(bundle: SkeletonBundle | None) -> dict | None:
    if bundle is None:
        return None
    out = {
        "r": bundle.r,
        "mu_t": bundle.mu_t,
        "v_t": bundle.v_t,
        "ess_t": bundle.ess_t,
        "s_t": bundle.s_t,
        "alpha_hat": bundle.alpha_hat,
        "beta_hat": bundle.beta_hat,
        "flags": list(bundle.flags),
    }
    if bundle.v is not None:
        out.update(
            v=bundle.v,
            mu_e=bundle.mu_e,
            v_e=bundle.v_e,
            ess_e=bundle.ess_e,
            s_e=bundle.s_e,
            fp_powers=list(bundle.fp_powers),
        )
    return out


def pava_nondecreasing(values: list[float]) -> list[float]:
    """Unweighted pool-adjacent-violators onto a nondecreasing sequence."""
    blocks: list[list[float]] = []  # [total, count]
    for x in values:
        blocks.append([x, 1.0])
        while len(blocks) > 1 and (
            blocks[-2][0] / blocks[-2][1] > blocks[-1][0] / blocks[-1][1]
        ):
            b = blocks.pop()
            blocks[-1][0] += b[0]
            blocks[-1][1] += b[1]
    out: list[float] = []
    for total, count in blocks:
        out.extend([total / count] * int(count))
    return out


def mtd_estimates(state: TrialState, cfg: EngineConfig) -> dict[int, float]:
    """Monotone per-dose toxicity estimates over the tried doses.

    Plain doses use the Beta(0.05, 0.05) posterior mean; the inserted
    dose uses the skeleton-pooled estimate (t + s r)/(n + s) when
    borrowing survived to the end.
    """
    tried = [j for j in range(len(state.grid.doses)) if state.data.n[j] > 0]
    raw = []
    ins = state.inserted
    for j in tried:
        t, n = state.data.t[j], state.data.n[j]
        if (
            ins is not None
            and j == ins.index
            and ins.r is not None
            and ins.s_t > 0
            and ins.guard == "borrow"
        ):
            raw.append((t + ins.s_t * ins.r) / (n + ins.s_t))
        else:
            raw.append((0.05 + t) / (0.1 + n))
    fitted = pava_nondecreasing(raw)
    return dict(zip(tried, fitted))


def select_mtd(state: TrialState, cfg: EngineConfig) -> int | None:
    """Pick the tried, non-eliminated dose closest to the target.

    Ties go to the higher dose when every tied estimate is below the
    target, otherwise to the lower dose.  No MTD when the lowest dose
    was eliminated for toxicity or nothing admissible was tried.
    """
    if state.status == ACTIVE:
        raise ValueError("trial still active")
    if state.tox_eliminated[0]:
        return None
    estimates = mtd_estimates(state, cfg)
    cands = [j for j in estimates if not state.tox_eliminated[j]]
    if not cands:
        return None
    gap = min(abs(estimates[j] - cfg.targets.phi1) for j in cands)
    tied = [j for j in cands if abs(estimates[j] - cfg.targets.phi1) == gap]
    if len(tied) == 1:
        return tied[0]
    if all(estimates[j] < cfg.targets.phi1 for j in tied):
        return max(tied)
    return min(tied)


def select_obd(state: TrialState, cfg: EngineConfig) -> int | None:
    """Most efficacious tried dose whose toxicity estimate is acceptable.

    Admissibility allows a small overshoot above the target; efficacy
    ties resolve to the lower dose.
    """
    if state.status == ACTIVE:
        raise ValueError("trial still active")
    limit = cfg.targets.phi1 + cfg.obd_tox_margin * (
        cfg.targets.phi3 - cfg.targets.phi1
    )
    estimates = mtd_estimates(state, cfg)
    admissible = [
        j
        for j in estimates
        if not state.eliminated(j) and estimates[j] <= limit
    ]
    if not admissible:
        return None
    best = max(state.q_hat(j) for j in admissible)
    return min(j for j in admissible if state.q_hat(j) == best)
