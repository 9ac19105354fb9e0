// Shapes of the service's JSON payloads. The console renders these
// verbatim; nothing here is ever recomputed client-side.

export interface PerDoseRow {
  index: number;
  dose: number;
  n: number;
  t: number;
  u: number;
  p_hat: number | null;
  q_hat: number | null;
  tox_eliminated: boolean;
  fut_eliminated: boolean;
  capped: boolean;
  inserted: boolean;
}

export interface BoundaryTable {
  family: "boin" | "et";
  informative: boolean;
  lambda_e?: number;
  lambda_d?: number;
  lambda1?: number;
  lambda2?: number;
  eta?: number;
}

export interface WeightsView {
  weights: number[];
  cumulative_losses: number[];
  t: number;
  flags: string[];
}

export interface SkeletonSummary {
  r: number;
  s_t: number;
  v: number | null;
  s_e: number | null;
}

export interface SessionView {
  trial_id: string;
  version: number;
  status: string;
  variant: string;
  adaptive_mode: string;
  current_dose: number;
  enrolled: number;
  n_total: number;
  cohort_size: number;
  doses: number[];
  d_ref: number;
  inserted_index: number | null;
  per_dose: PerDoseRow[];
  boundaries: BoundaryTable | null;
  guard: string | null;
  skeleton: SkeletonSummary | null;
  weights: { toxicity: WeightsView | null; efficacy: WeightsView | null };
  pending_d_star: number | null;
}

export interface BundleView {
  r: number;
  mu_t: number;
  v_t: number;
  ess_t: number;
  s_t: number;
  v: number | null;
  mu_e: number | null;
  v_e: number | null;
  ess_e: number | null;
  s_e: number | null;
  fp_powers: number[] | null;
  flags: string[];
}

export interface DoseRecommendation {
  phase: "dose";
  next_dose: number;
  next_dose_amount: number;
  boundaries: BoundaryTable;
  rationale: {
    last_decision: string | null;
    guard: string | null;
    weights: WeightsView | null;
  };
}

export interface FinalRecommendation {
  phase: "final";
  status: string;
  mtd: number | null;
  mtd_amount: number | null;
  obd: number | null;
  obd_amount: number | null;
  estimates: Record<string, number>;
}

export type Recommendation = DoseRecommendation | FinalRecommendation;

export interface InsertionStatus {
  inserted: false;
  armed_if_deescalate: boolean;
  gap: [number, number] | null;
  pending_d_star: number | null;
  doses: number[];
  gap_amounts?: [number, number];
  default_d_star?: number;
  bundle_preview?: BundleView | null;
}

export interface InsertionDone {
  inserted: true;
  index: number;
  d_star: number;
  bundle: BundleView | null;
  doses: number[];
}

export type InsertionView = InsertionStatus | InsertionDone;

// Audit records carry the engine's full per-step dump; the viewer only
// needs a handful of fields and passes the rest through untouched.
export interface AuditRecord {
  step: number;
  dose: number;
  dose_amount: number;
  decision?: string;
  next_dose?: number | null;
  cohort?: { n: number; dlt: number; resp: number };
  guard?: string | null;
  insertion?: { index: number; d_star: number } | null;
  [key: string]: unknown;
}

export interface CreateTrialBody {
  doses: number[];
  d_ref?: number | null;
  seed?: number;
  variant?: string;
  adaptive_mode?: string;
  c?: number;
  phi1?: number | null;
  phi2?: number | null;
  phi3?: number | null;
  delta1?: number | null;
  delta2?: number | null;
  cohort_size?: number | null;
  n_initial?: number | null;
  n_after_insert?: number | null;
  per_dose_cap?: number | null;
  trial_id?: string | null;
}

export interface CohortBody {
  version: number;
  dlt: number;
  resp?: number;
  d_star?: number | null;
}

export interface CohortResult {
  trial_id: string;
  version: number;
  record: AuditRecord;
  state: SessionView;
}

export interface InsertionConfirmResult extends InsertionStatus {
  version: number;
}

export interface AuditResult {
  trial_id: string;
  version: number;
  records: AuditRecord[];
}
