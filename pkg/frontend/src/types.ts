// Payload shapes mirrored from the service's JSON schemas. The UI never
// recomputes any of these numbers; it only renders them.

export interface ConceptMeta {
  name: string;
  kind: "binary" | "categorical";
  num_values: number;
}

export interface Meta {
  task: string;
  n_latent: number;
  patients: number;
  coverage: number;
  plausibility: { lo: number; hi: number };
  exposure: string | null;
  concepts: ConceptMeta[];
}

export interface ClusterSummary {
  id: number;
  code: string;
  size: number;
  share: number;
  mean_risk: number;
  major: boolean;
}

export interface ClusterList {
  clusters: ClusterSummary[];
}

export type Assignment = Record<string, number>;

export interface UpsetCell {
  combo: Assignment;
  count: number;
  estimated_risk: number;
  prevalence: number;
}

export interface UpsetTable {
  cluster: number;
  code: string;
  size: number;
  cells: UpsetCell[];
}

export type Verdict = "plausible" | "implausible" | "impossible";

export interface CounterfactualResult {
  cluster: number;
  code: string;
  assignment: Assignment;
  estimated_risk: number;
  reference: Assignment;
  reference_risk: number;
  risk_ratio: number;
  prevalence: number;
  verdict: Verdict;
}

export interface SanityRow {
  cluster: number;
  code: string;
  base: Assignment;
  estimated_rr: number;
  observed_rr: number | null;
  exposed_n: number;
  exposed_pos: number;
  unexposed_n: number;
  unexposed_pos: number;
}

export interface SanityReport {
  exposure: string | null;
  rows: SanityRow[];
  spearman: number | null;
  notice: string | null;
}

export interface ApiError {
  code: "bad-request" | "not-found" | "not-plausible-context" | "internal";
  message: string;
}
