"""HTTP/JSON conduct service.

Thin, stateless-by-construction layer over the trial engine: every
endpoint loads the session, calls the same pure functions the simulator
uses, and persists the outcome.  All decision logic stays server-side
so clients can render but never recompute.  Schemas are published at
/openapi.json; mutations carry a version precondition and optionally an
operator token.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from fastapi import Depends, FastAPI, Header, HTTPException
from fastapi.responses import RedirectResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ConfigDict, Field

from .engine import (
    ACTIVE,
    CohortOutcome,
    EngineConfig,
    TrialState,
    adopt_midtrial_state,
    boundaries_in_effect,
    insertion_trigger,
    mtd_estimates,
    select_mtd,
    select_obd,
    step,
)
from .sessions import SessionStore, TrialSession
from .simulate import ENGINE_OVERRIDE_KEYS, resolve_engine_config
from .skeleton import DoseData, DoseGrid, SkeletonBundle, compute_bundle

API_PREFIX = "/api/v1"


class HistoricalCounts(BaseModel):
    model_config = ConfigDict(extra="forbid")
    n: list[int]
    t: list[int]
    u: list[int] | None = None


class CreateTrialRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    doses: list[float] = Field(min_length=2)
    d_ref: float | None = None
    seed: int = 0
    variant: str = "boin"
    adaptive_mode: str = "none"
    c: float = 1.0
    phi1: float | None = None
    phi2: float | None = None
    phi3: float | None = None
    delta1: float | None = None
    delta2: float | None = None
    cohort_size: int | None = None
    n_initial: int | None = None
    n_after_insert: int | None = None
    per_dose_cap: int | None = None
    historical: HistoricalCounts | None = None
    inserted_index: int | None = None
    start_dose: int | None = None
    trial_id: str | None = None

    def engine_config(self) -> EngineConfig:
        overrides = {
            key: getattr(self, key)
            for key in ENGINE_OVERRIDE_KEYS
            if hasattr(self, key) and getattr(self, key) is not None
        }
        return resolve_engine_config(
            self.variant, self.adaptive_mode, self.c, overrides
        )


class CohortRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    version: int
    dlt: int = Field(ge=0)
    resp: int = Field(ge=0, default=0)
    d_star: float | None = None


class InsertionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    version: int
    d_star: float


def _bundle_view(bundle: SkeletonBundle | None) -> dict | None:
    if bundle is None:
        return None
    return {
        "r": bundle.r,
        "mu_t": bundle.mu_t,
        "v_t": bundle.v_t,
        "ess_t": bundle.ess_t,
        "s_t": bundle.s_t,
        "v": bundle.v,
        "mu_e": bundle.mu_e,
        "v_e": bundle.v_e,
        "ess_e": bundle.ess_e,
        "s_e": bundle.s_e,
        "fp_powers": list(bundle.fp_powers) if bundle.fp_powers else None,
        "flags": list(bundle.flags),
    }


def _weights_view(ws) -> dict | None:
    if ws is None:
        return None
    return {
        "weights": list(ws.weights),
        "cumulative_losses": list(ws.cumulative_losses),
        "t": ws.t,
        "flags": list(ws.flags),
    }


def session_view(session: TrialSession) -> dict:
    """The full server-rendered state a conduct client displays."""
    state, cfg = session.state, session.config
    ins = state.inserted
    per_dose = []
    for j, dose in enumerate(state.grid.doses):
        nj = state.data.n[j]
        per_dose.append(
            {
                "index": j,
                "dose": dose,
                "n": nj,
                "t": state.data.t[j],
                "u": state.data.u[j],
                "p_hat": state.p_hat(j) if nj else None,
                "q_hat": state.q_hat(j) if nj and cfg.is_et_family else None,
                "tox_eliminated": state.tox_eliminated[j],
                "fut_eliminated": state.fut_eliminated[j],
                "capped": nj >= cfg.per_dose_cap,
                "inserted": j == state.grid.inserted_index,
            }
        )
    return {
        "trial_id": session.trial_id,
        "version": session.version,
        "status": state.status,
        "variant": cfg.variant,
        "adaptive_mode": cfg.adaptive_mode,
        "current_dose": state.current_dose,
        "enrolled": state.enrolled,
        "n_total": state.n_total,
        "cohort_size": cfg.cohort_size,
        "doses": list(state.grid.doses),
        "d_ref": state.grid.d_ref,
        "inserted_index": state.grid.inserted_index,
        "per_dose": per_dose,
        "boundaries": boundaries_in_effect(state, cfg)
        if state.status == ACTIVE
        else None,
        "guard": ins.guard if ins else None,
        "skeleton": {
            "r": ins.r,
            "s_t": ins.s_t,
            "v": ins.v,
            "s_e": ins.s_e,
        }
        if ins
        else None,
        "weights": {
            "toxicity": _weights_view(ins.tox_state) if ins else None,
            "efficacy": _weights_view(ins.eff_state) if ins else None,
        },
        "pending_d_star": session.pending_d_star,
    }


def recommendation_view(session: TrialSession) -> dict:
    state, cfg = session.state, session.config
    if state.status == ACTIVE:
        last = session.history[-1] if session.history else None
        return {
            "phase": "dose",
            "next_dose": state.current_dose,
            "next_dose_amount": state.grid.doses[state.current_dose],
            "boundaries": boundaries_in_effect(state, cfg),
            "rationale": {
                "last_decision": last["decision"] if last else None,
                "guard": state.inserted.guard if state.inserted else None,
                "weights": _weights_view(
                    state.inserted.tox_state if state.inserted else None
                ),
            },
        }
    mtd = select_mtd(state, cfg)
    obd = select_obd(state, cfg) if cfg.is_et_family else None
    estimates = mtd_estimates(state, cfg)
    return {
        "phase": "final",
        "status": state.status,
        "mtd": mtd,
        "mtd_amount": state.grid.doses[mtd] if mtd is not None else None,
        "obd": obd,
        "obd_amount": state.grid.doses[obd] if obd is not None else None,
        "estimates": {str(j): est for j, est in estimates.items()},
    }


def _insertion_view(session: TrialSession) -> dict:
    """Trigger status plus, once armed or fired, the bundle evidence."""
    state, cfg = session.state, session.config
    if state.inserted is not None:
        ins = state.inserted
        return {
            "inserted": True,
            "index": ins.index,
            "d_star": state.grid.doses[ins.index],
            "bundle": _bundle_view(ins.bundle),
            "doses": list(state.grid.doses),
        }
    gap = insertion_trigger(state, cfg, "de-escalate")
    out = {
        "inserted": False,
        "armed_if_deescalate": gap is not None,
        "gap": list(gap) if gap else None,
        "pending_d_star": session.pending_d_star,
        "doses": list(state.grid.doses),
    }
    if gap is not None:
        lo, hi = state.grid.doses[gap[0]], state.grid.doses[gap[1]]
        out["gap_amounts"] = [lo, hi]
        out["default_d_star"] = (lo + hi) / 2.0
        if cfg.is_hybrid:
            preview = compute_bundle(
                state.grid.insert((lo + hi) / 2.0),
                DoseData(
                    n=_grow(state.data.n, gap[1]),
                    t=_grow(state.data.t, gap[1]),
                    u=_grow(state.data.u, gap[1]),
                ),
                cfg.effective_hyper(),
                cfg.gamma1,
                cfg.gamma2,
                cfg.is_et_family,
            )
            out["bundle_preview"] = _bundle_view(preview)
    return out


def _grow(xs: tuple, idx: int) -> tuple:
    return xs[:idx] + (0,) + xs[idx:]


def create_app(
    store: SessionStore,
    operator_token: str | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(
        title="midtrial conduct service",
        version="1.0",
        description="Dose-finding trial conduct with mid-trial dose insertion.",
    )

    def get_session(trial_id: str) -> TrialSession:
        session = store.get(trial_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown trial id")
        return session

    def check_token(x_operator_token: str | None = Header(default=None)) -> None:
        if operator_token is not None and x_operator_token != operator_token:
            raise HTTPException(status_code=401, detail="operator token required")

    def check_version(session: TrialSession, version: int) -> None:
        if version != session.version:
            raise HTTPException(
                status_code=409,
                detail={
                    "message": "stale version",
                    "expected": session.version,
                    "got": version,
                },
            )

    @app.post(API_PREFIX + "/trials", status_code=201)
    def create_trial(req: CreateTrialRequest, _=Depends(check_token)):
        try:
            cfg = req.engine_config()
            doses = tuple(req.doses)
            grid = DoseGrid(
                doses,
                d_ref=req.d_ref if req.d_ref is not None else max(doses),
                inserted_index=req.inserted_index,
            )
            if req.historical is not None:
                h = req.historical
                data = DoseData(
                    n=tuple(h.n),
                    t=tuple(h.t),
                    u=tuple(h.u) if h.u is not None else (0,) * len(h.n),
                )
                state = adopt_midtrial_state(
                    grid, data, cfg, req.seed, current_dose=req.start_dose
                )
            elif req.inserted_index is not None:
                raise ValueError("inserted_index requires historical counts")
            else:
                state = TrialState.start(grid, cfg, req.seed)
                if req.start_dose is not None:
                    if not 0 <= req.start_dose < len(doses):
                        raise ValueError("starting dose outside the grid")
                    state = replace(state, current_dose=req.start_dose)
        except ValueError as err:
            raise HTTPException(status_code=422, detail=str(err))
        try:
            session = store.create(cfg, state, trial_id=req.trial_id)
        except ValueError as err:
            raise HTTPException(status_code=409, detail=str(err))
        return session_view(session)

    @app.get(API_PREFIX + "/trials")
    def list_trials():
        return {"trials": store.list_ids()}

    @app.get(API_PREFIX + "/trials/{trial_id}/state")
    def get_state(trial_id: str):
        return session_view(get_session(trial_id))

    @app.post(API_PREFIX + "/trials/{trial_id}/cohorts")
    def submit_cohort(trial_id: str, req: CohortRequest, _=Depends(check_token)):
        session = get_session(trial_id)
        with store.lock(trial_id):
            check_version(session, req.version)
            cfg = session.config
            if session.state.status != ACTIVE:
                raise HTTPException(status_code=409, detail="trial already stopped")
            if req.dlt > cfg.cohort_size or req.resp > cfg.cohort_size:
                raise HTTPException(
                    status_code=422,
                    detail=f"counts exceed cohort size {cfg.cohort_size}",
                )
            d_star = req.d_star
            if d_star is None:
                d_star = session.pending_d_star
            try:
                state, record = step(
                    session.state,
                    CohortOutcome(dlt=req.dlt, resp=req.resp),
                    cfg,
                    d_star=d_star,
                )
            except ValueError as err:
                raise HTTPException(status_code=422, detail=str(err))
            session.state = state
            session.history.append(record)
            if record["insertion"] is not None:
                session.pending_d_star = None
            store.record_mutation(
                session,
                "cohort",
                {
                    "input": {
                        "dlt": req.dlt,
                        "resp": req.resp,
                        "d_star": d_star,
                    },
                    "record": record,
                },
            )
        return {
            "trial_id": trial_id,
            "version": session.version,
            "record": record,
            "state": session_view(session),
        }

    @app.get(API_PREFIX + "/trials/{trial_id}/insertion")
    def insertion_status(trial_id: str):
        return _insertion_view(get_session(trial_id))

    @app.post(API_PREFIX + "/trials/{trial_id}/insertion")
    def confirm_insertion(
        trial_id: str, req: InsertionRequest, _=Depends(check_token)
    ):
        session = get_session(trial_id)
        with store.lock(trial_id):
            check_version(session, req.version)
            state, cfg = session.state, session.config
            if state.inserted is not None:
                raise HTTPException(
                    status_code=409, detail="dose already inserted"
                )
            gap = insertion_trigger(state, cfg, "de-escalate")
            if gap is None:
                raise HTTPException(
                    status_code=409,
                    detail="insertion trigger not armed at the current dose",
                )
            lo, hi = state.grid.doses[gap[0]], state.grid.doses[gap[1]]
            if not lo < req.d_star < hi:
                raise HTTPException(
                    status_code=422,
                    detail=f"d_star must lie strictly inside ({lo:g}, {hi:g})",
                )
            session.pending_d_star = req.d_star
            store.record_mutation(
                session, "set-d-star", {"input": {"d_star": req.d_star}}
            )
        view = _insertion_view(session)
        view["version"] = session.version
        return view

    @app.get(API_PREFIX + "/trials/{trial_id}/recommendation")
    def get_recommendation(trial_id: str):
        return recommendation_view(get_session(trial_id))

    @app.get(API_PREFIX + "/trials/{trial_id}/audit")
    def get_audit(trial_id: str):
        session = get_session(trial_id)
        return {
            "trial_id": trial_id,
            "version": session.version,
            "records": session.history,
        }

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

        @app.get("/", include_in_schema=False)
        def index():
            return RedirectResponse(url="/ui/")

    return app
