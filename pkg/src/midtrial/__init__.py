"""Model-assisted dose-finding with mid-trial dose insertion.

Implements the hybrid non-informative/informative BOIN and BOIN-ET
machinery: decision boundaries, data-driven skeleton and ESS construction
for an inserted dose, online/mixture skeleton adaptation, the sequential
trial engine, scenario generators, a Monte-Carlo simulation harness, and
a conduct service with a JSON-lines audit store.
"""

from midtrial.adaptive import (
    CandidateSet,
    IntervalOutcome,
    WeightState,
    combined_skeleton,
    ftl_select,
    hedge_update,
    mixture_posterior,
    mixture_skeleton,
)
from midtrial.boundaries import (
    EfficacyTargets,
    EtBoundaries,
    HypothesisPrior,
    PriorStrength,
    ToxicityBoundaries,
    ToxicityTargets,
    boin_boundaries,
    boinet_boundaries,
    iboin_boundaries,
    iboin_hypothesis_prior,
    iboinet_boundaries,
    iboinet_hypothesis_prior,
)
from midtrial.engine import (
    CohortOutcome,
    EngineConfig,
    TrialState,
    adopt_midtrial_state,
    boundaries_in_effect,
    insertion_trigger,
    select_mtd,
    select_obd,
    step,
)
from midtrial.runconfig import RunConfig
from midtrial.scenarios import (
    RandomGenParams,
    ScenarioTruth,
    fixed_scenarios,
    random_scenario,
    true_mtd_index,
    true_obd_index,
)
from midtrial.sessions import SessionStore, TrialSession
from midtrial.simulate import (
    BatchMetrics,
    BatchSpec,
    metrics_to_csv,
    metrics_to_json,
    replicate_stream,
    run_batch,
    run_trial,
)
from midtrial.skeleton import (
    BlrmHyper,
    DoseData,
    DoseGrid,
    SkeletonBundle,
    compute_bundle,
    ess_from_moments,
    fit_blrm,
    select_fp_powers,
    toxicity_skeleton,
)

__version__ = "0.1.0"

__all__ = [
    "ToxicityTargets",
    "EfficacyTargets",
    "ToxicityBoundaries",
    "EtBoundaries",
    "HypothesisPrior",
    "PriorStrength",
    "boin_boundaries",
    "boinet_boundaries",
    "iboin_boundaries",
    "iboin_hypothesis_prior",
    "iboinet_boundaries",
    "iboinet_hypothesis_prior",
    "CandidateSet",
    "IntervalOutcome",
    "WeightState",
    "hedge_update",
    "ftl_select",
    "mixture_posterior",
    "combined_skeleton",
    "mixture_skeleton",
    "DoseGrid",
    "DoseData",
    "BlrmHyper",
    "SkeletonBundle",
    "fit_blrm",
    "toxicity_skeleton",
    "select_fp_powers",
    "ess_from_moments",
    "compute_bundle",
    "EngineConfig",
    "TrialState",
    "CohortOutcome",
    "step",
    "adopt_midtrial_state",
    "boundaries_in_effect",
    "insertion_trigger",
    "select_mtd",
    "select_obd",
    "ScenarioTruth",
    "RandomGenParams",
    "fixed_scenarios",
    "random_scenario",
    "true_mtd_index",
    "true_obd_index",
    "BatchSpec",
    "BatchMetrics",
    "run_trial",
    "run_batch",
    "replicate_stream",
    "metrics_to_csv",
    "metrics_to_json",
    "RunConfig",
    "SessionStore",
    "TrialSession",
    "__version__",
]
