// Cluster overview (size bars, mean risk, major-coverage flag) and the
// UpSet panel (sorted count bars + membership matrix).

import type { ClusterSummary, ConceptMeta, UpsetTable } from "../types.js";

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

export function renderClusterOverview(
  container: HTMLElement,
  clusters: ClusterSummary[],
  selected: number | null,
  onSelect: (clusterId: number) => void,
): void {
  container.replaceChildren();
  container.appendChild(el("h2", "panel-title", "Clusters"));
  if (clusters.length === 0) {
    container.appendChild(el("p", "empty-state", "No clusters: the model is empty."));
    return;
  }
  const maxSize = Math.max(...clusters.map((c) => c.size));
  const list = el("ul", "cluster-list");
  for (const cluster of clusters) {
    const item = el("li", "cluster-row" + (cluster.id === selected ? " selected" : ""));
    item.dataset.clusterId = String(cluster.id);
    item.dataset.major = String(cluster.major);
    if (cluster.major) item.classList.add("major");

    const label = el("span", "cluster-code", cluster.code);
    label.title = cluster.major
      ? "major cluster (inside the coverage set)"
      : "minor cluster";
    const bar = el("span", "cluster-bar");
    bar.style.width = `${(100 * cluster.size) / maxSize}%`;
    const size = el("span", "cluster-size", String(cluster.size));
    const risk = el("span", "cluster-risk", cluster.mean_risk.toFixed(3));
    risk.title = "mean predicted risk";

    item.append(label, bar, size, risk);
    item.addEventListener("click", () => onSelect(cluster.id));
    list.appendChild(item);
  }
  container.appendChild(list);
}

export function renderUpset(
  container: HTMLElement,
  table: UpsetTable,
  concepts: ConceptMeta[],
): void {
  container.replaceChildren();
  container.appendChild(
    el("h2", "panel-title", `Cluster ${table.code} — ${table.size} patients`),
  );
  if (table.cells.length === 0) {
    container.appendChild(el("p", "empty-state", "Empty cluster."));
    return;
  }
  const maxCount = Math.max(...table.cells.map((c) => c.count));
  const grid = el("table", "upset-table");
  const head = el("tr");
  for (const concept of concepts) head.appendChild(el("th", "upset-concept", concept.name));
  head.appendChild(el("th", "", "count"));
  head.appendChild(el("th", "", "est. risk"));
  grid.appendChild(head);
  for (const cell of table.cells) {
    const row = el("tr", "upset-row");
    for (const concept of concepts) {
      const value = cell.combo[concept.name];
      const dot = el(
        "td",
        "membership" + (concept.kind === "binary" && value === 1 ? " on" : ""),
        concept.kind === "binary" ? (value === 1 ? "●" : "○") : String(value),
      );
      row.appendChild(dot);
    }
    const count = el("td", "upset-count");
    const bar = el("span", "upset-bar");
    bar.style.width = `${(100 * cell.count) / maxCount}%`;
    count.append(bar, el("span", "upset-count-label", String(cell.count)));
    row.appendChild(count);
    row.appendChild(el("td", "upset-risk", cell.estimated_risk.toFixed(4)));
    grid.appendChild(row);
  }
  container.appendChild(grid);
}
