// Controller: wires the API client, the what-if state, and the views.
// At most one counterfactual request is in flight; a newer submission
// aborts an older pending one.

import { ApiFailure, Client } from "./api.js";
import {
  WhatIfState,
  assignmentComplete,
  clearReference,
  initialState,
  pinReference,
  recordResult,
  selectCluster,
  setConcept,
  toggleConcept,
} from "./state.js";
import type { ClusterSummary, Meta } from "./types.js";
import { renderClusterOverview, renderUpset } from "./views/clusters.js";
import { renderSanityScatter } from "./views/sanity.js";
import { renderWhatIfPanel } from "./views/whatif.js";

export interface AppElements {
  clusters: HTMLElement;
  upset: HTMLElement;
  whatif: HTMLElement;
  sanity: HTMLElement;
  banner: HTMLElement;
}

export class App {
  private meta: Meta | null = null;
  private clusters: ClusterSummary[] = [];
  private state: WhatIfState = initialState();
  private inflight: AbortController | null = null;
  private whatifError: string | null = null;

  constructor(
    private readonly client: Client,
    private readonly elements: AppElements,
  ) {}

  async start(): Promise<void> {
    this.elements.banner.replaceChildren();
    try {
      this.meta = await this.client.meta();
      this.clusters = (await this.client.clusters()).clusters;
      const sanity = await this.client.sanity();
      renderSanityScatter(this.elements.sanity, sanity);
    } catch (error) {
      this.showRetryBanner(error);
      return;
    }
    this.renderClusters();
    this.renderWhatIf();
  }

  private showRetryBanner(error: unknown): void {
    // never show stale panels as fresh: blank them alongside the banner
    this.elements.clusters.replaceChildren();
    this.elements.upset.replaceChildren();
    this.elements.sanity.replaceChildren();
    const banner = this.elements.banner;
    banner.replaceChildren();
    banner.className = "retry-banner";
    const text = document.createElement("span");
    text.textContent = `Could not reach the service (${(error as Error).message}). `;
    const retry = document.createElement("button");
    retry.textContent = "Retry";
    retry.className = "retry-button";
    retry.addEventListener("click", () => void this.start());
    banner.append(text, retry);
  }

  private renderClusters(): void {
    renderClusterOverview(
      this.elements.clusters,
      this.clusters,
      this.state.cluster,
      (id) => void this.onSelectCluster(id),
    );
  }

  private renderWhatIf(): void {
    if (!this.meta) return;
    renderWhatIfPanel(
      this.elements.whatif,
      this.state,
      this.meta.concepts,
      {
        onToggle: (name) => {
          this.state = toggleConcept(this.state, this.meta!.concepts, name);
          this.renderWhatIf();
          void this.submit();
        },
        onSetCategory: (name, value) => {
          this.state = setConcept(this.state, this.meta!.concepts, name, value);
          this.renderWhatIf();
          void this.submit();
        },
        onSubmit: () => void this.submit(),
        onPinReference: () => {
          this.state = pinReference(this.state);
          this.renderWhatIf();
        },
        onClearReference: () => {
          this.state = clearReference(this.state);
          this.renderWhatIf();
        },
      },
      this.whatifError,
    );
  }

  private async onSelectCluster(id: number): Promise<void> {
    if (!this.meta) return;
    this.state = selectCluster(this.state, id, this.meta.concepts);
    this.whatifError = null;
    this.renderClusters();
    this.renderWhatIf();
    try {
      const table = await this.client.upset(id);
      renderUpset(this.elements.upset, table, this.meta.concepts);
    } catch (error) {
      this.showRetryBanner(error);
    }
  }

  async submit(): Promise<void> {
    if (!this.meta || this.state.cluster === null) return;
    if (!assignmentComplete(this.state, this.meta.concepts)) {
      this.whatifError = "assignment incomplete";
      this.renderWhatIf();
      return;
    }
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const result = await this.client.counterfactual(
        this.state.cluster,
        this.state.assignment,
        this.state.pinnedReference,
        controller.signal,
      );
      if (controller.signal.aborted) return;
      this.whatifError = null;
      this.state = recordResult(this.state, result);
    } catch (error) {
      if ((error as Error).name === "AbortError") return;
      if (error instanceof ApiFailure && error.error) {
        this.whatifError = error.error.message;
      } else {
        this.whatifError = (error as Error).message;
      }
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
    this.renderWhatIf();
  }

  // test hooks
  get currentState(): WhatIfState {
    return this.state;
  }
}
