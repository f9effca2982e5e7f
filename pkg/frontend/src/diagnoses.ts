// Diagnosis rendering: stage badges, source highlights from byte spans,
// witness timelines, and the client-side mirror of the stage gate.

import type { AnalysisEntry, DiagnosisPayload, Span, WitnessRow } from "./types";
import { escapeHtml } from "./review";

export const STAGE_NAMES: Record<number, string> = {
  1: "vacuous conflicts",
  2: "situational conflicts",
  3: "insufficiency & over-restrictiveness",
  4: "redundancies",
};

const encoder = new TextEncoder();
const decoder = new TextDecoder();

/** Slice a document by a byte range (spans are byte offsets, not chars). */
export function byteSlice(text: string, span: Span): string {
  return decoder.decode(encoder.encode(text).slice(span[0], span[1]));
}

export function highlightedSources(
  diagnosis: DiagnosisPayload,
  documentText: string,
): { id: string; excerpt: string; span: Span }[] {
  return Object.entries(diagnosis.spans)
    .sort(([, a], [, b]) => a[0] - b[0])
    .map(([id, span]) => ({ id, excerpt: byteSlice(documentText, span), span }));
}

export function renderTimeline(witness: WitnessRow[]): string {
  // events above the axis, measures as annotations, timestamps below
  if (witness.length === 0) return '<svg class="timeline" width="360" height="90"></svg>';
  const width = Math.max(360, witness.length * 120);
  const axisY = 55;
  const stepX = width / (witness.length + 1);
  const parts: string[] = [
    `<line x1="10" y1="${axisY}" x2="${width - 10}" y2="${axisY}" stroke="black" marker-end="url(#arrow)" />`,
  ];
  witness.forEach((row, index) => {
    const x = stepX * (index + 1);
    parts.push(`<line x1="${x}" y1="${axisY}" x2="${x}" y2="${axisY - 18}" stroke="black" />`);
    const events = row.events.length ? row.events.join(", ") : "∅";
    parts.push(`<text x="${x}" y="${axisY - 24}" text-anchor="middle">${escapeHtml(events)}</text>`);
    const measures = Object.entries(row.measures)
      .map(([k, v]) => `${k}=${v}`)
      .join(" ");
    if (measures) {
      parts.push(
        `<text x="${x}" y="${axisY - 38}" text-anchor="middle" class="measures">${escapeHtml(measures)}</text>`,
      );
    }
    parts.push(`<text x="${x}" y="${axisY + 16}" text-anchor="middle">${row.timestamp}</text>`);
  });
  return (
    `<svg class="timeline" width="${width}" height="90">` +
    `<defs><marker id="arrow" markerWidth="8" markerHeight="8" refX="6" refY="3" orient="auto">` +
    `<path d="M0,0 L6,3 L0,6 z"/></marker></defs>${parts.join("")}</svg>`
  );
}

export function renderDiagnosisCard(diagnosis: DiagnosisPayload, documentText: string): string {
  const badge = `<span class="stage-badge stage-${diagnosis.stage}">stage ${diagnosis.stage}</span>`;
  const verdictClass = diagnosis.verdict === "issueFound" ? "issue" : "clean";
  const sources = highlightedSources(diagnosis, documentText)
    .map(
      (s) =>
        `<li data-span="${s.span[0]}-${s.span[1]}"><code class="highlight">${escapeHtml(s.excerpt)}</code></li>`,
    )
    .join("");
  const coreNames = diagnosis.core_names ?? {};
  const core = diagnosis.core
    .map((id) => `<li>${escapeHtml(coreNames[id] ?? id)}</li>`)
    .join("");
  const witness = diagnosis.witness ? renderTimeline(diagnosis.witness) : "";
  const resolve =
    diagnosis.verdict === "issueFound"
      ? '<a class="resolve" href="#document">resolve and re-upload the document</a>'
      : "";
  return (
    `<article class="diagnosis ${verdictClass}" data-subject="${escapeHtml(diagnosis.subject)}" data-stage="${diagnosis.stage}">` +
    `${badge}<h4>${escapeHtml(diagnosis.kind)} — ${escapeHtml(diagnosis.subject)}: ${diagnosis.verdict}</h4>` +
    `<p>${escapeHtml(diagnosis.narrative)}</p>` +
    (sources ? `<ul class="sources">${sources}</ul>` : "") +
    (core ? `<details><summary>cause set</summary><ul class="core">${core}</ul></details>` : "") +
    witness +
    resolve +
    `</article>`
  );
}

export function renderStagePanels(entry: AnalysisEntry, documentText: string): string {
  const panels: string[] = [];
  for (const stage of [1, 2, 3, 4]) {
    const cards = entry.diagnoses.filter((d) => d.stage === stage);
    if (!entry.stages.includes(stage) && cards.length === 0) continue;
    const issues = cards.filter((d) => d.verdict === "issueFound").length;
    const cls = issues ? "issues" : "ok";
    panels.push(
      `<section class="stage ${cls}" data-stage="${stage}">` +
        `<h3>${stage}. ${STAGE_NAMES[stage]} ${issues ? `(${issues} issue${issues > 1 ? "s" : ""})` : "(clean)"}</h3>` +
        cards.map((d) => renderDiagnosisCard(d, documentText)).join("\n") +
        `</section>`,
    );
  }
  return panels.join("\n");
}

export interface StageGate {
  allowed: boolean;
  reason: string;
}

/** Client-side mirror of the server gate: a stage may be requested only when
 * every earlier stage was checked clean at the current document version.
 * The server re-checks regardless; its refusal is rendered verbatim. */
export function canRequestStage(
  stage: number,
  latest: AnalysisEntry | null,
  currentVersion: number,
): StageGate {
  for (let earlier = 1; earlier < stage; earlier += 1) {
    const entry = latest && latest.version === currentVersion ? latest : null;
    const covered = entry !== null && entry.stages.includes(earlier);
    if (!covered) {
      return {
        allowed: false,
        reason: `stage ${earlier} (${STAGE_NAMES[earlier]}) has not been checked for the current document`,
      };
    }
    const unresolved = entry!.diagnoses.some(
      (d) => d.stage === earlier && d.verdict === "issueFound",
    );
    if (unresolved) {
      return {
        allowed: false,
        reason: `stage ${earlier} (${STAGE_NAMES[earlier]}) still reports issues; resolve them and re-upload first`,
      };
    }
  }
  return { allowed: true, reason: "" };
}
