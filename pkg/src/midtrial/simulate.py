"""Monte-Carlo batches over scenarios, design variants, and guard thresholds.

Each replicate owns a counter-based RNG stream keyed by (master seed,
replicate index), so results are reproducible bit for bit at any worker
count.  Fixed-mode replicates start from the historical mid-trial state
with the dose already inserted; random-mode replicates run the four-dose
trial from scratch and let the engine's trigger fire.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .boundaries import EfficacyTargets, ToxicityTargets
from .engine import (
    ACTIVE,
    CohortOutcome,
    EngineConfig,
    TrialState,
    adopt_midtrial_state,
    select_mtd,
    select_obd,
    step,
)
from .scenarios import (
    RandomGenParams,
    ScenarioTruth,
    base_grid_view,
    fixed_scenarios,
    inserted_dose_truth,
    random_scenario,
    true_mtd_index,
    true_obd_index,
)
from .skeleton import DoseGrid

MAX_DOSES = 5

ENGINE_OVERRIDE_KEYS = frozenset(
    {
        "phi1",
        "phi2",
        "phi3",
        "delta1",
        "delta2",
        "cohort_size",
        "n_initial",
        "n_after_insert",
        "per_dose_cap",
        "gamma1",
        "gamma2",
    }
)


@dataclass(frozen=True)
class BatchSpec:
    """One cell of the simulation grid.

    Exactly one scenario source is given: a fixed-case label (e.g.
    "T2E2") or random-generation parameters.  ``c`` is the borrowing
    guard threshold; ``adaptive_mode`` only applies to hybrid variants.
    ``engine`` carries optional decision-rule overrides (targets,
    cohort sizing, caps) keyed by EngineConfig field names.
    """

    variant: str
    scenario_label: str | None = None
    random_params: RandomGenParams | None = None
    adaptive_mode: str = "none"
    c: float = 1.0
    replicates: int = 1000
    master_seed: int = 0
    keep_audit: bool = False
    engine: dict | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        if (self.scenario_label is None) == (self.random_params is None):
            raise ValueError("give exactly one of scenario label or random params")
        extra = set(self.engine or {}) - ENGINE_OVERRIDE_KEYS
        if extra:
            raise ValueError(
                f"unknown engine overrides: {', '.join(sorted(extra))}"
            )

    @property
    def is_random(self) -> bool:
        return self.random_params is not None

    @property
    def scenario_name(self) -> str:
        if self.scenario_label is not None:
            return self.scenario_label
        return f"random-{self.random_params.shape}"

    def engine_config(self) -> EngineConfig:
        default_phi1 = self.random_params.phi if self.is_random else 0.30
        default_delta1 = self.random_params.delta1 if self.is_random else 0.5
        return resolve_engine_config(
            self.variant,
            self.adaptive_mode,
            self.c,
            self.engine,
            default_phi1=default_phi1,
            default_delta1=default_delta1,
        )

    def fixed_scenario(self) -> ScenarioTruth:
        for s in fixed_scenarios():
            if s.label == self.scenario_label:
                return s
        raise ValueError(f"unknown fixed scenario: {self.scenario_label!r}")


def resolve_engine_config(
    variant: str,
    adaptive_mode: str,
    c: float,
    overrides: dict | None,
    default_phi1: float = 0.30,
    default_delta1: float = 0.5,
) -> EngineConfig:
    """Build an EngineConfig, filling family defaults for unset targets."""
    over = dict(overrides or {})
    extra = set(over) - ENGINE_OVERRIDE_KEYS
    if extra:
        raise ValueError(f"unknown engine overrides: {', '.join(sorted(extra))}")
    phi1 = over.pop("phi1", None)
    if phi1 is None:
        phi1 = default_phi1
    phi2 = over.pop("phi2", None)
    phi3 = over.pop("phi3", None)
    delta1 = over.pop("delta1", None)
    delta2 = over.pop("delta2", None)
    if phi3 is None:
        phi3 = 1.4 * phi1
    kw = dict(variant=variant, adaptive_mode=adaptive_mode, borrow_c=c, **over)
    if variant in ("boin", "hybrid-iboin"):
        targets = ToxicityTargets(phi1, 0.6 * phi1 if phi2 is None else phi2, phi3)
        return EngineConfig(targets=targets, **kw)
    if delta1 is None:
        delta1 = default_delta1
    targets = ToxicityTargets(phi1, 0.1 * phi1 if phi2 is None else phi2, phi3)
    eff = EfficacyTargets(
        delta1=delta1, delta2=0.6 * delta1 if delta2 is None else delta2
    )
    return EngineConfig(targets=targets, eff=eff, **kw)


def replicate_stream(master_seed: int, index: int) -> np.random.Generator:
    key = np.array([master_seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _seed_fixed_state(
    scenario: ScenarioTruth, cfg: EngineConfig, trial_seed: int
) -> TrialState:
    """Mid-trial state right after the historical insertion.

    The grid already contains d*; the first simulated cohort goes
    there.  Hybrid variants fit the skeleton bundle from the historical
    counts, exactly as the live trigger would have.
    """
    base = tuple(
        d for i, d in enumerate(scenario.doses) if i != scenario.d_star_index
    )
    grid = DoseGrid(base, d_ref=max(base)).insert(
        scenario.doses[scenario.d_star_index]
    )
    return adopt_midtrial_state(grid, scenario.historical, cfg, trial_seed)


def run_trial(scenario: ScenarioTruth, spec: BatchSpec, replicate: int) -> dict:
    """Run one replicate to termination and judge it against the truth.

    Stream draw order: (random mode only: scenario was already drawn
    upstream on this stream) trial seed, then per cohort a DLT count
    followed by a response count, then the inserted dose's truth the
    moment an insertion fires.
    """
    rng = replicate_stream(spec.master_seed, replicate)
    if spec.is_random:
        scenario = random_scenario(rng, spec.random_params)
    cfg = spec.engine_config()
    trial_seed = int(rng.integers(2**63))

    if spec.is_random:
        doses, p, q = base_grid_view(scenario)
        p, q = list(p), list(q)
        state = TrialState.start(
            DoseGrid(doses, d_ref=max(doses)), cfg, trial_seed
        )
    else:
        p, q = list(scenario.p), list(scenario.q)
        state = _seed_fixed_state(scenario, cfg, trial_seed)

    records = []
    de_escalated = False
    inserted = False
    d_star_truth = None
    discards = 0
    while state.status == ACTIVE:
        j = state.current_dose
        dlt = int(rng.binomial(cfg.cohort_size, p[j]))
        resp = int(rng.binomial(cfg.cohort_size, q[j]))
        state, rec = step(state, CohortOutcome(dlt, resp), cfg)
        records.append(rec)
        if rec["decision"] == "de-escalate":
            de_escalated = True
        if rec["guard"] == "discard":
            discards += 1
        if rec["insertion"] is not None:
            inserted = True
            idx = state.grid.inserted_index
            rule = scenario.p_star_rule or RandomGenParams()
            d_star_truth = inserted_dose_truth(
                rng, p[idx - 1], p[idx], rule.sigma_star, rule.insert_mode
            )
            p.insert(idx, d_star_truth)
            q.insert(idx, _inserted_efficacy(scenario, state, idx, q))

    if not spec.is_random:
        inserted = True  # the fixed cases begin with d* already in place

    excluded = spec.is_random and not de_escalated
    mtd = select_mtd(state, cfg)
    obd = select_obd(state, cfg) if cfg.is_et_family else None
    truth_mtd = true_mtd_index(p, cfg.targets.phi1)
    truth_obd = (
        true_obd_index(p, q, cfg.targets.phi1) if cfg.is_et_family else None
    )
    record = {
        "replicate": replicate,
        "excluded": excluded,
        "inserted": inserted,
        "status": state.status,
        "doses": list(state.grid.doses),
        "patients": list(state.data.n),
        "enrolled": state.enrolled,
        "true_p": list(p),
        "true_q": list(q),
        "selected_mtd": mtd,
        "selected_obd": obd,
        "true_mtd": truth_mtd,
        "true_obd": truth_obd,
        "correct_mtd": mtd == truth_mtd,
        "correct_obd": obd == truth_obd if cfg.is_et_family else None,
        "over_mtd": mtd is not None and mtd > truth_mtd,
        "overly_toxic": mtd is not None and p[mtd] > cfg.targets.phi3,
        "discard_events": discards,
        "d_star_truth": d_star_truth,
    }
    if spec.keep_audit:
        record["audit"] = records
    return record


def _inserted_efficacy(scenario, state, idx, q) -> float:
    """Efficacy truth for a freshly inserted dose.

    When the insertion gap brackets the withheld pivot dose, its
    efficacy value is the natural truth; otherwise interpolate between
    the gap neighbors.
    """
    if scenario.pivot is not None:
        pivot_amount = scenario.doses[scenario.pivot]
        lo, hi = state.grid.doses[idx - 1], state.grid.doses[idx + 1]
        if lo < pivot_amount < hi:
            return scenario.q[scenario.pivot]
    return (q[idx - 1] + q[idx]) / 2.0


def _one_replicate(args) -> dict:
    spec, index = args
    scenario = None if spec.is_random else spec.fixed_scenario()
    return run_trial(scenario, spec, index)


@dataclass(frozen=True)
class BatchMetrics:
    """Aggregate operating characteristics for one batch.

    Percentages are over replicates included in the analysis (the
    random-mode exclusion rule removes trials that never de-escalated);
    excluded replicates are counted, never silently dropped.  Per-dose
    vectors are indexed by position in each replicate's final grid,
    padded with zeros up to five doses.
    """

    scenario: str
    variant: str
    adaptive_mode: str
    c: float
    replicates: int
    included: int
    excluded_replicates: int
    replicates_with_insertion: int
    pct_correct_mtd: float
    pct_correct_obd: float | None
    pct_over_mtd: float
    pct_overly_toxic: float
    pct_no_selection: float
    avg_patients_per_dose: tuple[float, ...]
    pct_dose_selected_as_mtd: tuple[float, ...]
    discard_events: int

    CSV_HEADER = (
        "scenario,variant,adaptive_mode,c,replicates,pct_correct_mtd,"
        "pct_correct_obd,pct_over_mtd,pct_overly_toxic,excluded,inserted,"
        "pct_no_selection,discard_events,"
        + ",".join(f"avg_n_d{k + 1}" for k in range(MAX_DOSES))
        + ","
        + ",".join(f"pct_sel_d{k + 1}" for k in range(MAX_DOSES))
    )

    def to_csv_row(self) -> str:
        def num(x):
            return "" if x is None else f"{x:.4f}"

        cells = [
            self.scenario,
            self.variant,
            self.adaptive_mode,
            f"{self.c:g}",
            str(self.replicates),
            num(self.pct_correct_mtd),
            num(self.pct_correct_obd),
            num(self.pct_over_mtd),
            num(self.pct_overly_toxic),
            str(self.excluded_replicates),
            str(self.replicates_with_insertion),
            num(self.pct_no_selection),
            str(self.discard_events),
        ]
        cells += [num(x) for x in self.avg_patients_per_dose]
        cells += [num(x) for x in self.pct_dose_selected_as_mtd]
        return ",".join(cells)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "variant": self.variant,
            "adaptive_mode": self.adaptive_mode,
            "c": self.c,
            "replicates": self.replicates,
            "included": self.included,
            "excluded_replicates": self.excluded_replicates,
            "replicates_with_insertion": self.replicates_with_insertion,
            "pct_correct_mtd": self.pct_correct_mtd,
            "pct_correct_obd": self.pct_correct_obd,
            "pct_over_mtd": self.pct_over_mtd,
            "pct_overly_toxic": self.pct_overly_toxic,
            "pct_no_selection": self.pct_no_selection,
            "avg_patients_per_dose": list(self.avg_patients_per_dose),
            "pct_dose_selected_as_mtd": list(self.pct_dose_selected_as_mtd),
            "discard_events": self.discard_events,
        }


def summarize(spec: BatchSpec, records: list[dict]) -> BatchMetrics:
    included = [r for r in records if not r["excluded"]]
    m = len(included)

    def pct(flag):
        return 100.0 * sum(1 for r in included if r[flag]) / m if m else 0.0

    avg_n = [0.0] * MAX_DOSES
    sel = [0.0] * MAX_DOSES
    none_sel = 0
    for r in included:
        for k, nk in enumerate(r["patients"]):
            avg_n[k] += nk
        if r["selected_mtd"] is None:
            none_sel += 1
        else:
            sel[r["selected_mtd"]] += 1
    if m:
        avg_n = [x / m for x in avg_n]
        sel = [100.0 * x / m for x in sel]
    pct_none = 100.0 * none_sel / m if m else 0.0

    et = spec.variant in ("boinet", "hybrid-iboinet")
    return BatchMetrics(
        scenario=spec.scenario_name,
        variant=spec.variant,
        adaptive_mode=spec.adaptive_mode,
        c=spec.c,
        replicates=spec.replicates,
        included=m,
        excluded_replicates=len(records) - m,
        replicates_with_insertion=sum(1 for r in included if r["inserted"]),
        pct_correct_mtd=pct("correct_mtd"),
        pct_correct_obd=pct("correct_obd") if et else None,
        pct_over_mtd=pct("over_mtd"),
        pct_overly_toxic=pct("overly_toxic"),
        pct_no_selection=pct_none,
        avg_patients_per_dose=tuple(avg_n),
        pct_dose_selected_as_mtd=tuple(sel),
        discard_events=sum(r["discard_events"] for r in included),
    )


def run_batch(
    spec: BatchSpec, workers: int = 1, collect: bool = False
) -> BatchMetrics | tuple[BatchMetrics, list[dict]]:
    """Execute every replicate and fold the metrics in replicate order.

    The fold is deterministic for a fixed master seed regardless of
    ``workers``; parallel execution only changes wall time.
    """
    jobs = [(spec, i) for i in range(spec.replicates)]
    if workers <= 1:
        records = [_one_replicate(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_one_replicate, jobs, chunksize=64))
    metrics = summarize(spec, records)
    return (metrics, records) if collect else metrics


def metrics_to_csv(rows: list[BatchMetrics]) -> str:
    return "\n".join([BatchMetrics.CSV_HEADER] + [r.to_csv_row() for r in rows]) + "\n"


def metrics_to_json(rows: list[BatchMetrics], manifest: dict) -> str:
    return json.dumps(
        {"manifest": manifest, "results": [r.to_dict() for r in rows]},
        indent=2,
        sort_keys=True,
    )
