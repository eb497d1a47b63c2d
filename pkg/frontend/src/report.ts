// Report pane: one row per class with a term badge, a signed strength bar,
// and the raw score. Badge styling is keyed only by the term.

import type { ReportEntry } from "./api.js";

export function orderRows(entries: ReportEntry[]): ReportEntry[] {
  // positive-label classes first, strongest first; then the rest
  const positives = entries.filter((e) => e.label === 1);
  const negatives = entries.filter((e) => e.label !== 1);
  const byStrength = (a: ReportEntry, b: ReportEntry) => b.strength - a.strength;
  return [...positives.sort(byStrength), ...negatives.sort(byStrength)];
}

export function renderReport(container: HTMLElement, entries: ReportEntry[]): void {
  container.replaceChildren();
  if (entries.length > 0 && entries.every((e) => e.term === "negligible")) {
    const banner = document.createElement("div");
    banner.className = "banner banner-clear";
    banner.textContent = "No abnormality flagged";
    container.appendChild(banner);
  }
  const list = document.createElement("div");
  list.className = "report-rows";
  for (const entry of orderRows(entries)) {
    list.appendChild(renderRow(entry));
  }
  container.appendChild(list);
}

function renderRow(entry: ReportEntry): HTMLElement {
  const row = document.createElement("div");
  row.className = "report-row";
  row.dataset.classCode = entry.class_code;

  const name = document.createElement("span");
  name.className = "class-name";
  name.textContent = entry.class_code;

  const badge = document.createElement("span");
  badge.className = `badge badge-${entry.term}`;
  badge.textContent = entry.term;

  const score = document.createElement("span");
  score.className = "raw-score";
  score.textContent = entry.score.toFixed(3);

  row.append(name, badge, renderStrengthBar(entry.strength), score);
  return row;
}

function renderStrengthBar(strength: number): HTMLElement {
  // signed bar: fills right of center for positive strength, left for
  // negative, making the sign convention visible at a glance
  const track = document.createElement("span");
  track.className = "strength-track";
  const fill = document.createElement("span");
  fill.className = strength >= 0 ? "strength-fill positive" : "strength-fill negative";
  const magnitude = Math.min(Math.abs(strength), 1);
  fill.style.width = `${(magnitude * 50).toFixed(1)}%`;
  if (strength >= 0) {
    fill.style.left = "50%";
  } else {
    fill.style.right = "50%";
  }
  fill.title = strength.toFixed(4);
  track.appendChild(fill);
  return track;
}

export function renderEmptyState(container: HTMLElement, message: string): void {
  container.replaceChildren();
  const empty = document.createElement("div");
  empty.className = "empty-state";
  empty.textContent = message;
  container.appendChild(empty);
}
