// The what-if panel: concept toggles/selects, submit, and the readout of
// the last counterfactual result. Every displayed number comes from the
// API payload; the view only formats.

import type { ConceptMeta, CounterfactualResult } from "../types.js";
import type { WhatIfState } from "../state.js";

export interface WhatIfHandlers {
  onToggle: (name: string) => void;
  onSetCategory: (name: string, value: number) => void;
  onSubmit: () => void;
  onPinReference: () => void;
  onClearReference: () => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderWhatIfPanel(
  container: HTMLElement,
  state: WhatIfState,
  concepts: ConceptMeta[],
  handlers: WhatIfHandlers,
  errorMessage: string | null,
): void {
  container.replaceChildren();
  container.appendChild(el("h2", "panel-title", "What if…"));
  if (state.cluster === null) {
    container.appendChild(el("p", "empty-state", "Select a cluster to ask what-if questions."));
    return;
  }

  const controls = el("div", "concept-controls");
  for (const concept of concepts) {
    const row = el("label", "concept-control");
    row.appendChild(el("span", "concept-name", concept.name));
    if (concept.kind === "binary") {
      const button = el(
        "button",
        "concept-toggle" + (state.assignment[concept.name] === 1 ? " on" : ""),
        state.assignment[concept.name] === 1 ? "present" : "absent",
      );
      button.dataset.concept = concept.name;
      button.type = "button";
      button.addEventListener("click", () => handlers.onToggle(concept.name));
      row.appendChild(button);
    } else {
      const select = el("select", "concept-select");
      select.dataset.concept = concept.name;
      for (let v = 0; v < concept.num_values; v++) {
        const option = el("option", "", String(v));
        option.value = String(v);
        option.selected = state.assignment[concept.name] === v;
        select.appendChild(option);
      }
      select.addEventListener("change", () =>
        handlers.onSetCategory(concept.name, Number(select.value)),
      );
      row.appendChild(select);
    }
    controls.appendChild(row);
  }
  container.appendChild(controls);

  const actions = el("div", "whatif-actions");
  const submit = el("button", "submit-whatif", "Estimate risk");
  submit.type = "button";
  submit.addEventListener("click", handlers.onSubmit);
  actions.appendChild(submit);
  const pin = el(
    "button",
    "pin-reference",
    state.pinnedReference ? "Unpin reference" : "Pin as reference",
  );
  pin.type = "button";
  pin.title = state.pinnedReference
    ? "comparisons use the pinned assignment"
    : "default reference: the all-unexposed variant of the current assignment";
  pin.addEventListener("click", () =>
    state.pinnedReference ? handlers.onClearReference() : handlers.onPinReference(),
  );
  actions.appendChild(pin);
  container.appendChild(actions);

  if (errorMessage) {
    container.appendChild(el("p", "inline-error", errorMessage));
  }
  if (state.lastResult) {
    container.appendChild(renderResult(state.lastResult));
  }
  if (state.history.length > 1) {
    const past = el("ol", "whatif-history");
    for (const item of state.history.slice(0, -1).reverse()) {
      past.appendChild(
        el(
          "li",
          "history-item",
          `${formatAssignment(item.assignment)} -> risk ${item.estimated_risk.toFixed(4)} (${item.verdict})`,
        ),
      );
    }
    container.appendChild(el("h3", "panel-subtitle", "Earlier questions"));
    container.appendChild(past);
  }
}

function formatAssignment(assignment: Record<string, number>): string {
  return Object.entries(assignment)
    .map(([k, v]) => `${k}=${v}`)
    .join(", ");
}

function renderResult(result: CounterfactualResult): HTMLElement {
  const box = document.createElement("div");
  box.className = "whatif-result";

  const risk = document.createElement("p");
  risk.className = "readout risk";
  risk.textContent = `Estimated risk: ${result.estimated_risk.toFixed(4)}`;
  box.appendChild(risk);

  const rr = document.createElement("p");
  rr.className = "readout risk-ratio";
  rr.textContent =
    `Risk ratio vs reference (${formatAssignment(result.reference)}): ` +
    `${result.risk_ratio.toFixed(3)} (reference risk ${result.reference_risk.toFixed(4)})`;
  box.appendChild(rr);

  const prevalence = document.createElement("p");
  prevalence.className = "readout prevalence";
  prevalence.textContent = `Prevalence in cluster: ${(100 * result.prevalence).toFixed(1)}%`;
  box.appendChild(prevalence);

  const badge = document.createElement("span");
  badge.className = `verdict-badge ${result.verdict}`;
  badge.textContent = result.verdict;
  box.appendChild(badge);
  return box;
}
