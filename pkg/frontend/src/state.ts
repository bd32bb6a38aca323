// What-if session state: pure data + update helpers, kept separate from
// the DOM so the interaction rules are unit-testable.

import type { Assignment, ConceptMeta, CounterfactualResult } from "./types.js";

export interface WhatIfState {
  cluster: number | null;
  assignment: Assignment;
  // reference pinned by the user; null means "all-unexposed variant of the
  // current assignment", which the service applies by default
  pinnedReference: Assignment | null;
  lastResult: CounterfactualResult | null;
  history: CounterfactualResult[]; // append-only within a session
}

export function initialState(): WhatIfState {
  return {
    cluster: null,
    assignment: {},
    pinnedReference: null,
    lastResult: null,
    history: [],
  };
}

export function defaultAssignment(concepts: ConceptMeta[]): Assignment {
  const assignment: Assignment = {};
  for (const concept of concepts) assignment[concept.name] = 0;
  return assignment;
}

export function selectCluster(
  state: WhatIfState,
  cluster: number,
  concepts: ConceptMeta[],
): WhatIfState {
  return {
    ...initialState(),
    cluster,
    assignment: defaultAssignment(concepts),
    history: state.history,
  };
}

export function setConcept(
  state: WhatIfState,
  concepts: ConceptMeta[],
  name: string,
  value: number,
): WhatIfState {
  const meta = concepts.find((c) => c.name === name);
  if (!meta) throw new Error(`unknown concept ${name}`);
  if (value < 0 || value >= meta.num_values) {
    throw new Error(`concept ${name}: value ${value} out of range`);
  }
  return { ...state, assignment: { ...state.assignment, [name]: value } };
}

export function toggleConcept(
  state: WhatIfState,
  concepts: ConceptMeta[],
  name: string,
): WhatIfState {
  const current = state.assignment[name] ?? 0;
  return setConcept(state, concepts, name, current === 0 ? 1 : 0);
}

export function pinReference(state: WhatIfState): WhatIfState {
  return { ...state, pinnedReference: { ...state.assignment } };
}

export function clearReference(state: WhatIfState): WhatIfState {
  return { ...state, pinnedReference: null };
}

export function recordResult(
  state: WhatIfState,
  result: CounterfactualResult,
): WhatIfState {
  return { ...state, lastResult: result, history: [...state.history, result] };
}

export function assignmentComplete(
  state: WhatIfState,
  concepts: ConceptMeta[],
): boolean {
  return concepts.every((c) => typeof state.assignment[c.name] === "number");
}
