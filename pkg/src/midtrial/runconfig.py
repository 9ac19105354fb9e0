"""Declarative run configuration for simulation batches.

A config document is a small key-value tree (YAML or JSON) with three
sections: ``design`` (decision-rule parameters), ``batch`` (what to
simulate), and ``output`` (where artifacts go).  Unknown keys anywhere
in the tree are rejected outright, and the fully resolved document is
echoed into every artifact so a run can be reproduced from its outputs
alone.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .scenarios import RandomGenParams, fixed_scenarios
from .simulate import BatchSpec

DESIGN_KEYS = {
    "phi1",
    "phi2",
    "phi3",
    "delta1",
    "delta2",
    "cohort_size",
    "n_initial",
    "n_after_insert",
    "per_dose_cap",
    "ess_scale_tox",
    "ess_scale_eff",
}
BATCH_KEYS = {
    "mode",
    "scenarios",
    "random",
    "variants",
    "c",
    "adaptive_modes",
    "replicates",
    "master_seed",
    "workers",
}
OUTPUT_KEYS = {"dir", "formats", "basename"}
RANDOM_KEYS = {
    "phi",
    "sigma0",
    "sigma_star",
    "mu1",
    "mu2",
    "sigma1",
    "sigma2",
    "delta1",
    "q_max",
    "shape",
    "insert_mode",
}
FORMATS = ("csv", "json", "svg")


def _reject_unknown(section: str, given: dict, allowed: set) -> None:
    extra = set(given) - allowed
    if extra:
        raise ValueError(
            f"unknown keys in {section}: {', '.join(sorted(extra))}"
        )


@dataclass(frozen=True)
class DesignSection:
    """Decision-rule knobs; target rates left as None inherit the
    family defaults (phi2 = 0.6 phi1 or 0.1 phi1, phi3 = 1.4 phi1,
    delta2 = 0.6 delta1) and, in random mode, the generator's phi."""

    phi1: float | None = None
    phi2: float | None = None
    phi3: float | None = None
    delta1: float | None = None
    delta2: float | None = None
    cohort_size: int = 3
    n_initial: int = 24
    n_after_insert: int = 30
    per_dose_cap: int = 12
    ess_scale_tox: float = 1.0
    ess_scale_eff: float = 1.0

    def engine_overrides(self) -> dict:
        out = dict(
            cohort_size=self.cohort_size,
            n_initial=self.n_initial,
            n_after_insert=self.n_after_insert,
            per_dose_cap=self.per_dose_cap,
            gamma1=self.ess_scale_tox,
            gamma2=self.ess_scale_eff,
        )
        for key in ("phi1", "phi2", "phi3", "delta1", "delta2"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out


@dataclass(frozen=True)
class BatchSection:
    mode: str = "fixed"
    scenarios: tuple[str, ...] = ("T1E1", "T2E2", "T3E3")
    random: RandomGenParams | None = None
    variants: tuple[str, ...] = ("boin", "hybrid-iboin")
    c: tuple[float, ...] = (0.0, 0.1, 0.2, 1.0)
    adaptive_modes: tuple[str, ...] = ("hedge",)
    replicates: int = 1000
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.mode not in ("fixed", "random"):
            raise ValueError(f"unknown batch mode: {self.mode!r}")
        if self.mode == "fixed":
            if not self.scenarios:
                raise ValueError("fixed mode needs a nonempty scenario list")
            known = {s.label for s in fixed_scenarios()}
            bad = set(self.scenarios) - known
            if bad:
                raise ValueError(
                    f"unknown fixed scenarios: {', '.join(sorted(bad))}"
                )
        if not self.variants:
            raise ValueError("need at least one design variant")
        if not self.c:
            raise ValueError("need at least one borrowing threshold")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    formats: tuple[str, ...] = ("csv", "json", "svg")
    basename: str = "metrics"

    def __post_init__(self):
        bad = set(self.formats) - set(FORMATS)
        if bad:
            raise ValueError(
                f"unknown output formats: {', '.join(sorted(bad))}"
            )


@dataclass(frozen=True)
class RunConfig:
    design: DesignSection = field(default_factory=DesignSection)
    batch: BatchSection = field(default_factory=BatchSection)
    output: OutputSection = field(default_factory=OutputSection)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ValueError("config document must be a mapping")
        _reject_unknown("config", doc, {"design", "batch", "output"})
        design = dict(doc.get("design") or {})
        batch = dict(doc.get("batch") or {})
        output = dict(doc.get("output") or {})
        _reject_unknown("design", design, DESIGN_KEYS)
        _reject_unknown("batch", batch, BATCH_KEYS)
        _reject_unknown("output", output, OUTPUT_KEYS)

        random = batch.pop("random", None)
        if random is not None:
            _reject_unknown("batch.random", random, RANDOM_KEYS)
            random = RandomGenParams(**random)
        for key in ("scenarios", "variants", "c", "adaptive_modes"):
            if key in batch:
                batch[key] = tuple(batch[key])
        if "formats" in output:
            output["formats"] = tuple(output["formats"])
        return cls(
            design=DesignSection(**design),
            batch=BatchSection(random=random, **batch),
            output=OutputSection(**output),
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        text = Path(path).read_text()
        doc = yaml.safe_load(text)
        if doc is None:
            doc = {}
        return cls.from_dict(doc)

    def to_batchspecs(self) -> list[BatchSpec]:
        """Expand the cross product of scenarios, variants, c, and modes.

        Plain variants ignore c and adaptive modes, so they contribute
        one cell per scenario rather than a full block of duplicates.
        """
        specs = []
        b = self.batch
        overrides = self.design.engine_overrides()
        sources: list[tuple[str | None, RandomGenParams | None]]
        if b.mode == "fixed":
            sources = [(label, None) for label in b.scenarios]
        else:
            sources = [(None, b.random or RandomGenParams())]
        for label, params in sources:
            for variant in b.variants:
                hybrid = variant.startswith("hybrid")
                cs = b.c if hybrid else (1.0,)
                modes = b.adaptive_modes if hybrid else ("none",)
                for c in cs:
                    for mode in modes:
                        specs.append(
                            BatchSpec(
                                variant=variant,
                                scenario_label=label,
                                random_params=params,
                                adaptive_mode=mode,
                                c=c,
                                replicates=b.replicates,
                                master_seed=b.master_seed,
                                engine=overrides,
                            )
                        )
        return specs

    def echo(self) -> dict:
        """Fully resolved configuration for embedding in artifacts."""
        d, b, o = self.design, self.batch, self.output
        return {
            "design": {
                "phi1": d.phi1,
                "phi2": d.phi2,
                "phi3": d.phi3,
                "delta1": d.delta1,
                "delta2": d.delta2,
                "cohort_size": d.cohort_size,
                "n_initial": d.n_initial,
                "n_after_insert": d.n_after_insert,
                "per_dose_cap": d.per_dose_cap,
                "ess_scale_tox": d.ess_scale_tox,
                "ess_scale_eff": d.ess_scale_eff,
            },
            "batch": {
                "mode": b.mode,
                "scenarios": list(b.scenarios) if b.mode == "fixed" else [],
                "random": (
                    None
                    if b.mode == "fixed"
                    else dataclasses.asdict(b.random or RandomGenParams())
                ),
                "variants": list(b.variants),
                "c": list(b.c),
                "adaptive_modes": list(b.adaptive_modes),
                "replicates": b.replicates,
                "master_seed": b.master_seed,
                "workers": b.workers,
            },
            "output": {
                "dir": o.dir,
                "formats": list(o.formats),
                "basename": o.basename,
            },
        }

    def echo_json(self) -> str:
        return json.dumps(self.echo(), sort_keys=True)
