import type { ReportEntry, Term } from "../src/api.js";

// 24-class fixture mirroring a served report: a few flagged classes with
// positive labels, the rest negligible
export function fixtureReport(): ReportEntry[] {
  const flagged: Array<[string, number, Term, number]> = [
    ["164889003", 0.97, "severe", 0.96],
    ["59931005", 0.82, "high", 0.85],
    ["427084000", 0.55, "medium", 0.61],
  ];
  const entries: ReportEntry[] = flagged.map(([code, score, term, strength]) => ({
    class_code: code,
    score,
    label: 1,
    strength,
    term,
  }));
  for (let i = 0; i < 21; i += 1) {
    entries.push({
      class_code: `10000${String(i).padStart(3, "0")}`,
      score: 0.02 + i * 0.001,
      label: 0,
      strength: 0.98 - i * 0.002,
      term: "negligible",
    });
  }
  return entries;
}

export function allNegligibleReport(): ReportEntry[] {
  return fixtureReport().map((entry) => ({
    ...entry,
    label: 0,
    term: "negligible",
    score: 0.01,
    strength: 0.97,
  }));
}

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
