// The tab's state machine: validation mirrored from the server's count
// rules, optimistic-concurrency handling, and verbatim storage of every
// server payload. Rendering reads from here; nothing is derived.

import { ConductClient, ConflictError } from "./api.js";
import type {
  AuditRecord,
  CohortBody,
  CreateTrialBody,
  InsertionView,
  Recommendation,
  SessionView,
} from "./types.js";

/** Pre-filled design template for the create screen. */
export function designTemplate(): CreateTrialBody {
  return {
    doses: [300, 900, 1500, 2400],
    d_ref: 2400,
    seed: 0,
    variant: "hybrid-iboin",
    adaptive_mode: "none",
    c: 1.0,
    phi1: 0.3,
    cohort_size: 3,
    n_initial: 24,
    n_after_insert: 30,
    per_dose_cap: 12,
  };
}

export interface CohortInput {
  dlt: string;
  resp: string;
  dStar: string;
}

export const EMPTY_INPUT: CohortInput = { dlt: "", resp: "", dStar: "" };

function parseCount(raw: string): number | null {
  if (!/^\d+$/.test(raw.trim())) return null;
  return Number(raw.trim());
}

/** Same checks the server applies; failures block the request. */
export function validateCohortInput(
  input: CohortInput,
  view: SessionView,
): string[] {
  const errors: string[] = [];
  const dlt = parseCount(input.dlt);
  if (dlt === null) {
    errors.push("DLT count must be a whole number");
  } else if (dlt > view.cohort_size) {
    errors.push(`DLT count cannot exceed the cohort size (${view.cohort_size})`);
  }
  const respRaw = input.resp.trim();
  if (respRaw !== "") {
    const resp = parseCount(respRaw);
    if (resp === null) {
      errors.push("response count must be a whole number");
    } else if (resp > view.cohort_size) {
      errors.push(
        `response count cannot exceed the cohort size (${view.cohort_size})`,
      );
    }
  }
  if (input.dStar.trim() !== "" && !Number.isFinite(Number(input.dStar))) {
    errors.push("d* must be a number");
  }
  return errors;
}

export interface Conflict {
  expected: number | null;
  got: number | null;
}

export interface Displayed {
  session: SessionView | null;
  recommendation: Recommendation | null;
  insertion: InsertionView | null;
  audit: AuditRecord[];
}

export type SubmitOutcome =
  | { kind: "validation"; errors: string[] }
  | { kind: "conflict"; conflict: Conflict }
  | { kind: "ok"; record: AuditRecord }
  | { kind: "error"; message: string };

/**
 * One browser tab's worth of state. Every field of `displayed` is a
 * server response stored untouched; `unsaved` is the operator's form
 * input, preserved across conflicts so nothing typed is lost.
 */
export class TabController {
  displayed: Displayed = {
    session: null,
    recommendation: null,
    insertion: null,
    audit: [],
  };
  unsaved: CohortInput = { ...EMPTY_INPUT };
  conflict: Conflict | null = null;

  constructor(
    private readonly client: ConductClient,
    public trialId: string | null = null,
  ) {}

  async create(body: CreateTrialBody): Promise<SessionView> {
    const view = await this.client.createTrial(body);
    this.trialId = view.trial_id;
    this.displayed.session = view;
    await this.refresh();
    return view;
  }

  async open(trialId: string): Promise<void> {
    this.trialId = trialId;
    await this.refresh();
  }

  /** Poll the four read endpoints; called after every mutation. */
  async refresh(): Promise<void> {
    const id = this.requireTrial();
    const [session, recommendation, insertion, audit] = await Promise.all([
      this.client.state(id),
      this.client.recommendation(id),
      this.client.insertionStatus(id),
      this.client.audit(id),
    ]);
    this.displayed = {
      session,
      recommendation,
      insertion,
      audit: audit.records,
    };
  }

  async submitCohort(input: CohortInput): Promise<SubmitOutcome> {
    const session = this.displayed.session;
    if (session === null) return { kind: "error", message: "no trial open" };
    const errors = validateCohortInput(input, session);
    if (errors.length > 0) {
      this.unsaved = { ...input };
      return { kind: "validation", errors };
    }
    const body: CohortBody = {
      version: session.version,
      dlt: Number(input.dlt),
    };
    if (input.resp.trim() !== "") body.resp = Number(input.resp);
    if (input.dStar.trim() !== "") body.d_star = Number(input.dStar);
    try {
      const result = await this.client.submitCohort(this.requireTrial(), body);
      this.unsaved = { ...EMPTY_INPUT };
      this.conflict = null;
      await this.refresh();
      return { kind: "ok", record: result.record };
    } catch (err) {
      if (err instanceof ConflictError) {
        this.unsaved = { ...input };
        this.conflict = { expected: err.expected, got: err.got };
        return { kind: "conflict", conflict: this.conflict };
      }
      return { kind: "error", message: (err as Error).message };
    }
  }

  async confirmInsertion(dStar: number): Promise<SubmitOutcome> {
    const session = this.displayed.session;
    if (session === null) return { kind: "error", message: "no trial open" };
    try {
      await this.client.confirmInsertion(
        this.requireTrial(),
        session.version,
        dStar,
      );
      this.conflict = null;
      await this.refresh();
      return { kind: "ok", record: { step: -1 } as AuditRecord };
    } catch (err) {
      if (err instanceof ConflictError) {
        this.conflict = { expected: err.expected, got: err.got };
        return { kind: "conflict", conflict: this.conflict };
      }
      return { kind: "error", message: (err as Error).message };
    }
  }

  /** The conflict flow's resolution: re-sync, keep what was typed. */
  async reloadAfterConflict(): Promise<void> {
    const kept = { ...this.unsaved };
    await this.refresh();
    this.unsaved = kept;
    this.conflict = null;
  }

  private requireTrial(): string {
    if (this.trialId === null) throw new Error("no trial open");
    return this.trialId;
  }
}
