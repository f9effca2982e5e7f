// Relation review: cards, progress, and the run-analysis gate. Verdicts are
// persisted through the service before any local state advances, so a
// reload always reproduces the same view.

import type { ApiClient } from "./api";
import type { Candidate, RelationsPayload, Verdict } from "./types";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function relationLabel(candidate: Candidate): string {
  if (candidate.text) return candidate.text;
  const parts = candidate.relation.args.map((a) => a.event ?? a.prop ?? a.term ?? "?");
  const body = `${parts[0]} ${candidate.relation.kind} ${parts.slice(1).join(" ")}`;
  return candidate.relation.sign === "negative" ? `not (${body})` : body;
}

export interface Progress {
  decided: number;
  total: number;
}

export function reviewProgress(candidates: Candidate[]): Progress {
  const reviewable = candidates.filter((c) => !c.flipped);
  return {
    decided: reviewable.filter((c) => c.verdict !== "undecided").length,
    total: reviewable.length,
  };
}

export interface Gate {
  allowed: boolean;
  reason: string;
}

export function analysisGate(candidates: Candidate[]): Gate {
  const undecided = candidates.filter((c) => !c.flipped && c.verdict === "undecided");
  if (undecided.length > 0) {
    return {
      allowed: false,
      reason:
        `${undecided.length} candidate relation(s) still need a verdict; ` +
        "accept or reject every candidate before running the analysis",
    };
  }
  return { allowed: true, reason: "" };
}

export function renderRelationCard(candidate: Candidate): string {
  const label = escapeHtml(relationLabel(candidate));
  const justification = escapeHtml(candidate.justification || "(no model justification)");
  const flipped = candidate.flipped
    ? '<p class="flipped">removed by the consistency filter</p>'
    : "";
  const buttons = candidate.flipped
    ? ""
    : (["accept", "reject", "undecided"] as Verdict[])
        .map(
          (v) =>
            `<button data-id="${candidate.id}" data-verdict="${v}"` +
            `${candidate.verdict === v ? ' class="active"' : ""}>${v}</button>`,
        )
        .join(" ");
  return (
    `<article class="relation-card" data-id="${candidate.id}" data-verdict="${candidate.verdict}">` +
    `<code>${label}</code>` +
    `<p class="justification">${justification}</p>` +
    flipped +
    `<div class="verdict">${buttons}</div>` +
    `<input class="note" data-id="${candidate.id}" value="${escapeHtml(candidate.note)}" placeholder="note" />` +
    `</article>`
  );
}

export function renderReviewPanel(relations: RelationsPayload): string {
  const { decided, total } = reviewProgress(relations.candidates);
  const cards = relations.candidates.map(renderRelationCard).join("\n");
  const added = relations.added.map(renderRelationCard).join("\n");
  return (
    `<p class="progress">${decided} / ${total} candidates reviewed</p>` +
    `<section class="candidates">${cards}</section>` +
    (added ? `<h3>stakeholder additions</h3><section class="added">${added}</section>` : "")
  );
}

/** Persist a verdict, then (and only then) update the local copy. */
export async function submitVerdict(
  api: ApiClient,
  relations: RelationsPayload,
  id: string,
  verdict: Verdict,
  note = "",
): Promise<Candidate> {
  const saved = await api.postVerdict(id, verdict, note);
  for (const list of [relations.candidates, relations.added]) {
    const index = list.findIndex((c) => c.id === id);
    if (index >= 0) list[index] = { ...list[index], verdict: saved.verdict, note: saved.note };
  }
  return saved;
}
