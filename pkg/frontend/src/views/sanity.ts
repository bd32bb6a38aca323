// Estimated-vs-observed risk-ratio scatter with the identity line;
// clusters with a missing observed RR are listed under the plot.

import type { SanityReport } from "../types.js";

const SIZE = 320;
const PAD = 36;

function svgEl(tag: string): SVGElement {
  return document.createElementNS("http://www.w3.org/2000/svg", tag) as SVGElement;
}

export function renderSanityScatter(container: HTMLElement, report: SanityReport): void {
  container.replaceChildren();
  const title = document.createElement("h2");
  title.className = "panel-title";
  title.textContent = report.exposure
    ? `Estimated vs observed risk ratio (${report.exposure})`
    : "Estimated vs observed risk ratio";
  container.appendChild(title);

  const plotted = report.rows.filter((r) => r.observed_rr !== null);
  const missing = report.rows.filter((r) => r.observed_rr === null);

  if (plotted.length === 0) {
    const note = document.createElement("p");
    note.className = "empty-state";
    note.textContent = report.notice ?? "No clusters with both risk ratios.";
    container.appendChild(note);
    return;
  }

  const values = plotted.flatMap((r) => [r.estimated_rr, r.observed_rr as number]);
  const hi = Math.max(...values) * 1.1;
  const lo = Math.min(0, Math.min(...values));
  const scale = (v: number) => PAD + ((v - lo) / (hi - lo)) * (SIZE - 2 * PAD);

  const svg = svgEl("svg");
  svg.setAttribute("viewBox", `0 0 ${SIZE} ${SIZE}`);
  svg.setAttribute("class", "sanity-scatter");

  const identity = svgEl("line");
  identity.setAttribute("class", "identity-line");
  identity.setAttribute("x1", String(scale(lo)));
  identity.setAttribute("y1", String(SIZE - scale(lo)));
  identity.setAttribute("x2", String(scale(hi)));
  identity.setAttribute("y2", String(SIZE - scale(hi)));
  svg.appendChild(identity);

  for (const row of plotted) {
    const point = svgEl("circle");
    point.setAttribute("class", "sanity-point");
    point.setAttribute("r", "5");
    point.setAttribute("cx", String(scale(row.estimated_rr)));
    point.setAttribute("cy", String(SIZE - scale(row.observed_rr as number)));
    point.dataset.cluster = String(row.cluster);
    const hover = svgEl("title");
    hover.textContent = `${row.code}: estimated ${row.estimated_rr.toFixed(2)}, observed ${(row.observed_rr as number).toFixed(2)}`;
    point.appendChild(hover);
    svg.appendChild(point);
  }
  container.appendChild(svg);

  if (report.spearman !== null) {
    const rho = document.createElement("p");
    rho.className = "readout spearman";
    rho.textContent = `Spearman rank correlation: ${report.spearman.toFixed(3)}`;
    container.appendChild(rho);
  } else if (report.notice) {
    const note = document.createElement("p");
    note.className = "sanity-notice";
    note.textContent = report.notice;
    container.appendChild(note);
  }

  if (missing.length > 0) {
    const heading = document.createElement("h3");
    heading.className = "panel-subtitle";
    heading.textContent = "No observed risk ratio";
    container.appendChild(heading);
    const list = document.createElement("ul");
    list.className = "missing-observed";
    for (const row of missing) {
      const item = document.createElement("li");
      item.textContent = `${row.code} (estimated ${row.estimated_rr.toFixed(2)})`;
      list.appendChild(item);
    }
    container.appendChild(list);
  }
}
