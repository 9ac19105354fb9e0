// Render functions: server payload in, HTML string out. Decisions,
// boundaries, weights, and estimates are displayed exactly as the
// service sent them; the only transformation here is formatting.

import { doseLabel, escapeHtml, fmt4, num } from "./format.js";
import type {
  AuditRecord,
  BoundaryTable,
  BundleView,
  InsertionView,
  Recommendation,
  SessionView,
  WeightsView,
} from "./types.js";

function chips(row: SessionView["per_dose"][number]): string {
  const out: string[] = [];
  if (row.tox_eliminated) out.push('<span class="chip chip-tox">eliminated</span>');
  if (row.fut_eliminated) out.push('<span class="chip chip-fut">futile</span>');
  if (row.capped) out.push('<span class="chip chip-cap">capped</span>');
  if (row.inserted) out.push('<span class="chip chip-ins">inserted</span>');
  return out.join(" ");
}

export function renderDoseLadder(view: SessionView): string {
  const rows = view.per_dose
    .map((row) => {
      const current = row.index === view.current_dose && view.status === "active";
      return `<tr class="${current ? "current" : ""}" data-dose-index="${row.index}">
        <td>${current ? "▶" : ""}</td>
        <td>${doseLabel(row.dose)}</td>
        <td>${row.n}</td>
        <td>${row.t}</td>
        <td>${row.u}</td>
        <td>${num(row.p_hat)}</td>
        <td>${num(row.q_hat)}</td>
        <td>${chips(row)}</td>
      </tr>`;
    })
    .join("\n");
  return `<table class="ladder">
    <thead><tr><th></th><th>dose</th><th>n</th><th>DLT</th><th>resp</th><th>p̂</th><th>q̂</th><th>status</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>
  <p class="meta">enrolled ${view.enrolled} / ${view.n_total} · cohort size ${view.cohort_size} · status <b>${escapeHtml(view.status)}</b></p>`;
}

export function renderBoundaries(table: BoundaryTable | null): string {
  if (table === null) return '<p class="meta">trial stopped; no boundaries in force</p>';
  const kind = table.informative ? "informative" : "non-informative";
  if (table.family === "boin") {
    return `<table class="bounds"><thead><tr><th colspan="2">boundaries (${kind})</th></tr></thead>
      <tbody>
        <tr><td>escalate if p̂ ≤</td><td>${num(table.lambda_e)}</td></tr>
        <tr><td>de-escalate if p̂ ≥</td><td>${num(table.lambda_d)}</td></tr>
      </tbody></table>`;
  }
  return `<table class="bounds"><thead><tr><th colspan="2">boundaries (${kind})</th></tr></thead>
    <tbody>
      <tr><td>λ1</td><td>${num(table.lambda1)}</td></tr>
      <tr><td>λ2</td><td>${num(table.lambda2)}</td></tr>
      <tr><td>η</td><td>${num(table.eta)}</td></tr>
    </tbody></table>`;
}

export function renderWeights(ws: WeightsView | null, title: string): string {
  if (ws === null) return "";
  const cells = ws.weights.map((w) => `<td>${num(w)}</td>`).join("");
  const losses = ws.cumulative_losses.map((l) => `<td>${num(l)}</td>`).join("");
  const flags = ws.flags.length
    ? `<p class="meta">flags: ${ws.flags.map(escapeHtml).join(", ")}</p>`
    : "";
  return `<div class="weights"><h4>${escapeHtml(title)} (t=${ws.t})</h4>
    <table><tbody><tr><th>weight</th>${cells}</tr><tr><th>loss</th>${losses}</tr></tbody></table>${flags}</div>`;
}

export function renderSkeletonPanel(view: SessionView): string {
  if (view.skeleton === null) return '<p class="meta">no inserted dose yet</p>';
  const s = view.skeleton;
  const parts = [
    `<table class="skeleton"><tbody>
      <tr><td>toxicity skeleton r</td><td>${num(s.r)}</td></tr>
      <tr><td>toxicity prior strength s</td><td>${s.s_t}</td></tr>
      <tr><td>efficacy skeleton v</td><td>${num(s.v)}</td></tr>
      <tr><td>efficacy prior strength</td><td>${s.s_e ?? "—"}</td></tr>
      <tr><td>guard</td><td>${escapeHtml(view.guard ?? "—")}</td></tr>
    </tbody></table>`,
    renderWeights(view.weights.toxicity, "toxicity weights"),
    renderWeights(view.weights.efficacy, "efficacy weights"),
  ];
  return parts.filter(Boolean).join("\n");
}

export function renderRecommendation(rec: Recommendation): string {
  if (rec.phase === "dose") {
    const why = rec.rationale;
    const weightLine = why.weights
      ? `<li>weights: ${why.weights.weights.map((w) => fmt4(w)).join(" / ")}</li>`
      : "";
    return `<div class="rec rec-dose">
      <h3>next cohort at dose ${doseLabel(rec.next_dose_amount)} (level ${rec.next_dose + 1})</h3>
      ${renderBoundaries(rec.boundaries)}
      <ul class="rationale">
        <li>last decision: ${escapeHtml(why.last_decision ?? "—")}</li>
        <li>guard: ${escapeHtml(why.guard ?? "—")}</li>
        ${weightLine}
      </ul>
    </div>`;
  }
  const estimates = Object.entries(rec.estimates)
    .map(
      ([j, est]) =>
        `<tr><td>level ${Number(j) + 1}</td><td>${num(est)}</td></tr>`,
    )
    .join("");
  const obd =
    rec.obd !== null
      ? `<p>OBD: dose ${doseLabel(rec.obd_amount as number)} (level ${rec.obd + 1})</p>`
      : "";
  return `<div class="rec rec-final">
    <h3>trial complete — ${escapeHtml(rec.status)}</h3>
    <p>MTD: ${
      rec.mtd !== null
        ? `dose ${doseLabel(rec.mtd_amount as number)} (level ${rec.mtd + 1})`
        : "none selected"
    }</p>
    ${obd}
    <table class="estimates"><thead><tr><th>dose</th><th>isotonic p̂</th></tr></thead><tbody>${estimates}</tbody></table>
  </div>`;
}

function renderBundle(bundle: BundleView | null, heading: string): string {
  if (bundle === null) return "";
  const eff =
    bundle.v !== null
      ? `<tr><td>efficacy skeleton v</td><td>${num(bundle.v)}</td></tr>
         <tr><td>efficacy moments</td><td>${num(bundle.mu_e)} / ${num(bundle.v_e)}</td></tr>
         <tr><td>efficacy ESS → s</td><td>${num(bundle.ess_e)} → ${bundle.s_e}</td></tr>
         <tr><td>FP powers</td><td>${bundle.fp_powers ? bundle.fp_powers.join(", ") : "—"}</td></tr>`
      : "";
  const flags = bundle.flags.length
    ? `<tr><td>provenance flags</td><td>${bundle.flags.map(escapeHtml).join(", ")}</td></tr>`
    : "";
  return `<h4>${escapeHtml(heading)}</h4>
  <table class="bundle"><tbody>
    <tr><td>toxicity skeleton r</td><td>${num(bundle.r)}</td></tr>
    <tr><td>toxicity moments</td><td>${num(bundle.mu_t)} / ${num(bundle.v_t)}</td></tr>
    <tr><td>toxicity ESS → s</td><td>${num(bundle.ess_t)} → ${bundle.s_t}</td></tr>
    ${eff}${flags}
  </tbody></table>`;
}

export function renderInsertionWizard(ins: InsertionView): string {
  if (ins.inserted) {
    return `<div class="wizard wizard-done">
      <h3>dose ${doseLabel(ins.d_star)} inserted at position ${ins.index + 1}</h3>
      ${renderBundle(ins.bundle, "skeleton evidence")}
    </div>`;
  }
  if (!ins.armed_if_deescalate) {
    return `<div class="wizard wizard-idle">
      <h3>insertion trigger not armed</h3>
      <p class="meta">a de-escalation over a wide, well-sampled gap arms it</p>
    </div>`;
  }
  const [lo, hi] = ins.gap_amounts ?? [NaN, NaN];
  const pending =
    ins.pending_d_star !== null
      ? `<p>confirmed d*: <b>${doseLabel(ins.pending_d_star)}</b> (applied when the trigger fires)</p>`
      : "";
  return `<div class="wizard wizard-armed">
    <h3>insertion armed — next de-escalation inserts a dose</h3>
    <p>gap: ${doseLabel(lo)} … ${doseLabel(hi)}, proposed d* = <b>${doseLabel(ins.default_d_star as number)}</b></p>
    ${pending}
    ${renderBundle(ins.bundle_preview ?? null, "skeleton preview at proposed d*")}
    <form id="insertion-form" class="inline-form">
      <label>override d* <input name="d_star" type="number" step="any" value="${ins.default_d_star}"></label>
      <button type="submit">confirm d*</button>
    </form>
  </div>`;
}

export function renderAuditTimeline(records: AuditRecord[]): string {
  if (records.length === 0) return '<p class="meta">no cohorts yet</p>';
  const items = records
    .map((rec) => {
      const cohort = rec.cohort
        ? `n=${rec.cohort.n} dlt=${rec.cohort.dlt} resp=${rec.cohort.resp}`
        : "";
      const inserted = rec.insertion
        ? ` · inserted d*=${doseLabel(rec.insertion.d_star)}`
        : "";
      return `<li><b>step ${rec.step + 1}</b> — dose ${doseLabel(rec.dose_amount)}: ${cohort} → ${escapeHtml(String(rec.decision ?? "—"))}${inserted}</li>`;
    })
    .join("\n");
  return `<ol class="timeline">${items}</ol>`;
}

export function renderConflictBanner(expected: number | null, got: number | null): string {
  return `<div class="banner banner-conflict" role="alert">
    another session changed this trial (server at version ${expected ?? "?"}, you sent ${got ?? "?"});
    <button id="conflict-reload">reload state</button> — your unsaved entries are kept
  </div>`;
}
