import type {
  AuditResult,
  CohortBody,
  CohortResult,
  CreateTrialBody,
  InsertionConfirmResult,
  InsertionView,
  Recommendation,
  SessionView,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
  }
}

export class ConflictError extends ApiError {
  constructor(
    detail: unknown,
    readonly expected: number | null,
    readonly got: number | null,
  ) {
    super(409, detail);
  }
}

const PREFIX = "/api/v1";

export interface ClientOptions {
  baseUrl?: string;
  operatorToken?: string;
}

/** Thin typed wrapper over the conduct endpoints.  One instance per tab. */
export class ConductClient {
  private readonly base: string;
  private readonly token: string | undefined;

  constructor(opts: ClientOptions = {}) {
    this.base = (opts.baseUrl ?? "").replace(/\/$/, "");
    this.token = opts.operatorToken;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token !== undefined) headers["X-Operator-Token"] = this.token;
    const response = await fetch(this.base + PREFIX + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      const payload = await response.json().catch(() => ({}));
      const detail = (payload as { detail?: unknown }).detail ?? payload;
      if (response.status === 409 && detail && typeof detail === "object") {
        const d = detail as { expected?: number; got?: number };
        throw new ConflictError(detail, d.expected ?? null, d.got ?? null);
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  createTrial(body: CreateTrialBody): Promise<SessionView> {
    return this.request("POST", "/trials", body);
  }

  listTrials(): Promise<{ trials: string[] }> {
    return this.request("GET", "/trials");
  }

  state(trialId: string): Promise<SessionView> {
    return this.request("GET", `/trials/${trialId}/state`);
  }

  submitCohort(trialId: string, body: CohortBody): Promise<CohortResult> {
    return this.request("POST", `/trials/${trialId}/cohorts`, body);
  }

  insertionStatus(trialId: string): Promise<InsertionView> {
    return this.request("GET", `/trials/${trialId}/insertion`);
  }

  confirmInsertion(
    trialId: string,
    version: number,
    dStar: number,
  ): Promise<InsertionConfirmResult> {
    return this.request("POST", `/trials/${trialId}/insertion`, {
      version,
      d_star: dStar,
    });
  }

  recommendation(trialId: string): Promise<Recommendation> {
    return this.request("GET", `/trials/${trialId}/recommendation`);
  }

  audit(trialId: string): Promise<AuditResult> {
    return this.request("GET", `/trials/${trialId}/audit`);
  }
}
