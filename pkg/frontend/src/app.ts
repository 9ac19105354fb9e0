// DOM wiring for the conduct console. One TabController per tab; every
// panel re-renders from the verbatim server payloads after each poll.

import { ConductClient } from "./api.js";
import {
  designTemplate,
  EMPTY_INPUT,
  TabController,
  type CohortInput,
} from "./flows.js";
import {
  renderAuditTimeline,
  renderConflictBanner,
  renderDoseLadder,
  renderInsertionWizard,
  renderRecommendation,
  renderSkeletonPanel,
} from "./views.js";

const client = new ConductClient({ baseUrl: "" });
const tab = new TabController(client);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function readCohortForm(): CohortInput {
  return {
    dlt: el<HTMLInputElement>("input-dlt").value,
    resp: el<HTMLInputElement>("input-resp").value,
    dStar: el<HTMLInputElement>("input-dstar").value,
  };
}

function writeCohortForm(input: CohortInput): void {
  el<HTMLInputElement>("input-dlt").value = input.dlt;
  el<HTMLInputElement>("input-resp").value = input.resp;
  el<HTMLInputElement>("input-dstar").value = input.dStar;
}

function paint(): void {
  const { session, recommendation, insertion, audit } = tab.displayed;
  el("banner").innerHTML = tab.conflict
    ? renderConflictBanner(tab.conflict.expected, tab.conflict.got)
    : "";
  if (tab.conflict) {
    const btn = document.getElementById("conflict-reload");
    btn?.addEventListener("click", () => {
      void tab.reloadAfterConflict().then(() => {
        paint();
        writeCohortForm(tab.unsaved);
      });
    });
  }
  if (session === null) {
    el("trial-panels").hidden = true;
    return;
  }
  el("trial-panels").hidden = false;
  el("trial-title").textContent =
    `${session.trial_id} — ${session.variant}` +
    (session.adaptive_mode !== "none" ? ` (${session.adaptive_mode})` : "");
  el("ladder").innerHTML = renderDoseLadder(session);
  el("recommendation").innerHTML = recommendation
    ? renderRecommendation(recommendation)
    : "";
  el("skeleton").innerHTML = renderSkeletonPanel(session);
  el("wizard").innerHTML = insertion ? renderInsertionWizard(insertion) : "";
  el("audit").innerHTML = renderAuditTimeline(audit);
  el("cohort-entry").hidden = session.status !== "active";

  const wizardForm = document.getElementById("insertion-form");
  wizardForm?.addEventListener("submit", (event) => {
    event.preventDefault();
    const raw = (wizardForm as HTMLFormElement).elements.namedItem(
      "d_star",
    ) as HTMLInputElement;
    void tab.confirmInsertion(Number(raw.value)).then((outcome) => {
      if (outcome.kind === "error") showErrors([outcome.message]);
      paint();
    });
  });
}

function showErrors(errors: string[]): void {
  el("form-errors").innerHTML = errors
    .map((e) => `<li>${e}</li>`)
    .join("");
}

function bindCreateForm(): void {
  const form = el<HTMLFormElement>("create-form");
  const tpl = designTemplate();
  el<HTMLInputElement>("create-doses").value = tpl.doses.join(", ");
  el<HTMLInputElement>("create-phi1").value = String(tpl.phi1);
  el<HTMLInputElement>("create-seed").value = String(tpl.seed);
  el<HTMLSelectElement>("create-variant").value = tpl.variant as string;
  el<HTMLSelectElement>("create-mode").value = tpl.adaptive_mode as string;
  el<HTMLInputElement>("create-c").value = String(tpl.c);

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const doses = el<HTMLInputElement>("create-doses")
      .value.split(",")
      .map((s) => Number(s.trim()))
      .filter((x) => Number.isFinite(x));
    const body = {
      ...tpl,
      doses,
      d_ref: doses.length ? Math.max(...doses) : null,
      phi1: Number(el<HTMLInputElement>("create-phi1").value),
      seed: Number(el<HTMLInputElement>("create-seed").value),
      variant: el<HTMLSelectElement>("create-variant").value,
      adaptive_mode: el<HTMLSelectElement>("create-mode").value,
      c: Number(el<HTMLInputElement>("create-c").value),
    };
    void tab
      .create(body)
      .then(() => {
        showErrors([]);
        paint();
      })
      .catch((err) => showErrors([(err as Error).message]));
  });
}

function bindCohortForm(): void {
  const form = el<HTMLFormElement>("cohort-form");
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const input = readCohortForm();
    // validation outcomes never reach the network; errors render inline
    void tab.submitCohort(input).then((outcome) => {
      if (outcome.kind === "validation") showErrors(outcome.errors);
      else if (outcome.kind === "error") showErrors([outcome.message]);
      else {
        showErrors([]);
        if (outcome.kind === "ok") writeCohortForm({ ...EMPTY_INPUT });
      }
      paint();
    });
  });
}

function bindOpenForm(): void {
  const form = el<HTMLFormElement>("open-form");
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const id = el<HTMLInputElement>("open-id").value.trim();
    if (id === "") return;
    void tab
      .open(id)
      .then(() => {
        showErrors([]);
        paint();
      })
      .catch((err) => showErrors([(err as Error).message]));
  });
}

bindCreateForm();
bindCohortForm();
bindOpenForm();
paint();
