// Thin client over the read-only service. Every method returns the parsed
// JSON payload; non-2xx responses throw ApiFailure carrying the service's
// error body when present.

import type {
  ApiError,
  Assignment,
  ClusterList,
  CounterfactualResult,
  Meta,
  SanityReport,
  UpsetTable,
} from "./types.js";

export class ApiFailure extends Error {
  constructor(
    public readonly status: number,
    public readonly error: ApiError | null,
  ) {
    super(error ? `${error.code}: ${error.message}` : `HTTP ${status}`);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let body: ApiError | null = null;
    try {
      body = (await response.json()) as ApiError;
    } catch {
      body = null;
    }
    throw new ApiFailure(response.status, body);
  }
  return (await response.json()) as T;
}

export class Client {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  meta(): Promise<Meta> {
    return fetch(this.url("/api/meta")).then((r) => asJson<Meta>(r));
  }

  clusters(): Promise<ClusterList> {
    return fetch(this.url("/api/clusters")).then((r) => asJson<ClusterList>(r));
  }

  upset(clusterId: number): Promise<UpsetTable> {
    return fetch(this.url(`/api/clusters/${clusterId}/upset`)).then((r) =>
      asJson<UpsetTable>(r),
    );
  }

  sanity(): Promise<SanityReport> {
    return fetch(this.url("/api/sanity")).then((r) => asJson<SanityReport>(r));
  }

  counterfactual(
    clusterId: number,
    assignment: Assignment,
    reference: Assignment | null,
    signal?: AbortSignal,
  ): Promise<CounterfactualResult> {
    const body: Record<string, unknown> = { cluster_id: clusterId, assignment };
    if (reference) body.reference = reference;
    return fetch(this.url("/api/counterfactual"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal,
    }).then((r) => asJson<CounterfactualResult>(r));
  }
}
