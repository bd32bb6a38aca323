// Shared test plumbing: recorded fixtures and a scripted fetch mock.

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { vi } from "vitest";

export function fixture<T>(name: string): T {
  const path = join(__dirname, "fixtures", `${name}.json`);
  return JSON.parse(readFileSync(path, "utf-8")) as T;
}

export interface RouteTable {
  [pattern: string]: (init?: RequestInit) => { status?: number; body: unknown };
}

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
  signal: AbortSignal | undefined;
}

export function mockFetch(routes: RouteTable) {
  const calls: RecordedCall[] = [];
  const impl = vi.fn(async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    calls.push({
      url,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(String(init.body)) : undefined,
      signal: init?.signal ?? undefined,
    });
    if (init?.signal?.aborted) {
      throw Object.assign(new Error("aborted"), { name: "AbortError" });
    }
    for (const [pattern, responder] of Object.entries(routes)) {
      if (url.includes(pattern)) {
        const { status = 200, body } = responder(init);
        return new Response(JSON.stringify(body), {
          status,
          headers: { "Content-Type": "application/json" },
        });
      }
    }
    throw new Error(`unrouted url ${url}`);
  });
  vi.stubGlobal("fetch", impl);
  return { calls, impl };
}

export function dom(): {
  clusters: HTMLElement;
  upset: HTMLElement;
  whatif: HTMLElement;
  sanity: HTMLElement;
  banner: HTMLElement;
} {
  document.body.innerHTML = `
    <div id="banner"></div>
    <section id="clusters"></section>
    <section id="upset"></section>
    <section id="whatif"></section>
    <section id="sanity"></section>`;
  return {
    clusters: document.getElementById("clusters")!,
    upset: document.getElementById("upset")!,
    whatif: document.getElementById("whatif")!,
    sanity: document.getElementById("sanity")!,
    banner: document.getElementById("banner")!,
  };
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
