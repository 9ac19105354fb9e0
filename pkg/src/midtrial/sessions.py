"""Durable trial sessions: append-only JSON lines, one directory per trial.

Every mutation appends one event carrying its input, the emitted
decision record, and a full state snapshot, then fsyncs.  The version
counter equals the number of events, so restoring after a crash lands
on exactly the counters clients last saw.  No database: the log is the
session.
"""

from __future__ import annotations

import dataclasses
import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .adaptive import WeightState
from .boundaries import EfficacyTargets, ToxicityTargets
from .engine import EngineConfig, InsertedDoseState, TrialState
from .skeleton import BlrmHyper, DoseData, DoseGrid, SkeletonBundle


def config_to_dict(cfg: EngineConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(raw: dict) -> EngineConfig:
    raw = dict(raw)
    raw["targets"] = ToxicityTargets(**raw["targets"])
    raw["eff"] = EfficacyTargets(**raw["eff"]) if raw.get("eff") else None
    raw["hyper"] = BlrmHyper(**raw["hyper"]) if raw.get("hyper") else None
    return EngineConfig(**raw)


def _bundle_from_dict(raw: dict | None) -> SkeletonBundle | None:
    if raw is None:
        return None
    raw = dict(raw)
    if raw.get("fp_powers") is not None:
        raw["fp_powers"] = tuple(raw["fp_powers"])
    raw["flags"] = tuple(raw["flags"])
    return SkeletonBundle(**raw)


def _weights_from_dict(raw: dict | None) -> WeightState | None:
    if raw is None:
        return None
    return WeightState(
        weights=tuple(raw["weights"]),
        cumulative_losses=tuple(raw["cumulative_losses"]),
        t=raw["t"],
        flags=tuple(raw["flags"]),
    )


def state_to_dict(state: TrialState) -> dict:
    return dataclasses.asdict(state)


def state_from_dict(raw: dict) -> TrialState:
    ins = raw.get("inserted")
    inserted = None
    if ins is not None:
        inserted = InsertedDoseState(
            index=ins["index"],
            bundle=_bundle_from_dict(ins["bundle"]),
            r=ins["r"],
            s_t=ins["s_t"],
            v=ins["v"],
            s_e=ins["s_e"],
            tox_state=_weights_from_dict(ins["tox_state"]),
            eff_state=_weights_from_dict(ins["eff_state"]),
            guard=ins["guard"],
        )
    return TrialState(
        grid=DoseGrid(
            doses=tuple(raw["grid"]["doses"]),
            d_ref=raw["grid"]["d_ref"],
            inserted_index=raw["grid"]["inserted_index"],
        ),
        data=DoseData(
            n=tuple(raw["data"]["n"]),
            t=tuple(raw["data"]["t"]),
            u=tuple(raw["data"]["u"]),
        ),
        current_dose=raw["current_dose"],
        tox_eliminated=tuple(raw["tox_eliminated"]),
        fut_eliminated=tuple(raw["fut_eliminated"]),
        enrolled=raw["enrolled"],
        n_total=raw["n_total"],
        rng_state=raw["rng_state"],
        inserted=inserted,
        status=raw["status"],
        step_index=raw["step_index"],
    )


@dataclass
class TrialSession:
    """One live trial: engine config, current state, append-only history."""

    trial_id: str
    config: EngineConfig
    state: TrialState
    history: list[dict] = field(default_factory=list)
    version: int = 1
    pending_d_star: float | None = None


class SessionStore:
    """File-backed registry of sessions under one root directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._cache: dict[str, TrialSession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._master = threading.Lock()

    def lock(self, trial_id: str) -> threading.Lock:
        with self._master:
            return self._locks.setdefault(trial_id, threading.Lock())

    def _log_path(self, trial_id: str) -> Path:
        return self.root / trial_id / "log.jsonl"

    def _append(self, trial_id: str, event: dict) -> None:
        path = self._log_path(trial_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def create(
        self, cfg: EngineConfig, state: TrialState, trial_id: str | None = None
    ) -> TrialSession:
        trial_id = trial_id or uuid.uuid4().hex
        if self._log_path(trial_id).exists():
            raise ValueError(f"trial id already exists: {trial_id}")
        session = TrialSession(trial_id=trial_id, config=cfg, state=state)
        self._append(
            trial_id,
            {
                "event": "create",
                "trial_id": trial_id,
                "config": config_to_dict(cfg),
                "state": state_to_dict(state),
                "version": 1,
            },
        )
        self._cache[trial_id] = session
        return session

    def record_mutation(
        self, session: TrialSession, kind: str, payload: dict
    ) -> None:
        """Append one mutation event and bump the version counter."""
        session.version += 1
        event = {
            "event": kind,
            "version": session.version,
            "state": state_to_dict(session.state),
            "pending_d_star": session.pending_d_star,
            **payload,
        }
        self._append(session.trial_id, event)

    def get(self, trial_id: str) -> TrialSession | None:
        if trial_id in self._cache:
            return self._cache[trial_id]
        session = self._load(trial_id)
        if session is not None:
            self._cache[trial_id] = session
        return session

    def _load(self, trial_id: str) -> TrialSession | None:
        path = self._log_path(trial_id)
        if not path.exists():
            return None
        events = [json.loads(line) for line in path.read_text().splitlines()]
        if not events or events[0]["event"] != "create":
            raise ValueError(f"corrupt session log: {path}")
        cfg = config_from_dict(events[0]["config"])
        session = TrialSession(
            trial_id=trial_id,
            config=cfg,
            state=state_from_dict(events[-1]["state"]),
            history=[e["record"] for e in events if "record" in e],
            version=events[-1]["version"],
            pending_d_star=events[-1].get("pending_d_star"),
        )
        return session

    def events(self, trial_id: str) -> list[dict]:
        path = self._log_path(trial_id)
        if not path.exists():
            raise KeyError(trial_id)
        return [json.loads(line) for line in path.read_text().splitlines()]

    def list_ids(self) -> list[str]:
        return sorted(
            p.parent.name for p in self.root.glob("*/log.jsonl")
        )

    def forget(self, trial_id: str | None = None) -> None:
        """Drop in-memory caches (used to exercise crash recovery)."""
        if trial_id is None:
            self._cache.clear()
        else:
            self._cache.pop(trial_id, None)
