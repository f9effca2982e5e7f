// Contract tests against recorded API fixtures: the UI renders server
// responses and mirrors the stage gate, never computing verdicts itself.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import {
  byteSlice,
  canRequestStage,
  highlightedSources,
  renderDiagnosisCard,
  renderStagePanels,
  renderTimeline,
} from "../src/diagnoses";
import {
  analysisGate,
  relationLabel,
  renderRelationCard,
  renderReviewPanel,
  reviewProgress,
  submitVerdict,
} from "../src/review";
import type {
  AnalysisEntry,
  Candidate,
  DocumentPayload,
  RelationsPayload,
  Verdict,
} from "../src/types";

const here = dirname(fileURLToPath(import.meta.url));

function fixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(here, "..", "fixtures", `${name}.json`), "utf-8")) as T;
}

const doc = fixture<DocumentPayload>("document");
const relations = fixture<RelationsPayload>("relations");
const issues = fixture<AnalysisEntry>("analysis_issues");
const refusal = fixture<{ status: number; detail: string }>("gate_refusal");
const fixedDoc = fixture<DocumentPayload>("document_fixed");
const resolved = fixture<AnalysisEntry>("analysis_resolved");

describe("diagnosis rendering for the conflicted project", () => {
  it("renders two stage-1 issue cards", () => {
    const issueCards = issues.diagnoses.filter(
      (d) => d.stage === 1 && d.verdict === "issueFound",
    );
    expect(issueCards.map((d) => d.subject)).toEqual(["R1", "R3"]);
    const html = renderStagePanels(issues, doc.text);
    expect(html.match(/class="diagnosis issue"/g)).toHaveLength(2);
  });

  it("highlighted spans resolve to the correct byte ranges", () => {
    for (const diagnosis of issues.diagnoses.filter((d) => d.verdict === "issueFound")) {
      const sources = highlightedSources(diagnosis, doc.text);
      expect(sources.length).toBeGreaterThanOrEqual(3); // the three implicated rules
      for (const source of sources) {
        // every highlight is a real rule text slice out of the document
        expect(source.excerpt).toMatch(/^R\d when /);
        const [start, end] = source.span;
        expect(byteSlice(doc.text, [start, end])).toBe(source.excerpt);
      }
      const excerpts = sources.map((s) => s.excerpt.split(" ")[0]);
      expect(excerpts).toContain("R1");
      expect(excerpts).toContain("R3");
    }
  });

  it("issue cards carry the resolve-and-reupload call to action", () => {
    const issue = issues.diagnoses.find((d) => d.verdict === "issueFound")!;
    const html = renderDiagnosisCard(issue, doc.text);
    expect(html).toContain("resolve and re-upload");
    expect(html).toContain(`stage ${issue.stage}`);
    expect(html).toContain(issue.narrative.slice(0, 24));
  });

  it("clean diagnoses render without highlights or call to action", () => {
    const clean = issues.diagnoses.find((d) => d.verdict === "cleanUpToBound")!;
    const html = renderDiagnosisCard(clean, doc.text);
    expect(html).not.toContain("resolve and re-upload");
    expect(html).toContain("cleanUpToBound");
  });
});

describe("stage gate", () => {
  it("blocks stage-4 requests while stage-1 issues are unresolved", () => {
    const gate = canRequestStage(4, issues, issues.version);
    expect(gate.allowed).toBe(false);
    expect(gate.reason).toContain("vacuous conflicts");
  });

  it("renders the server refusal verbatim when a request slips through", () => {
    expect(refusal.status).toBe(409);
    expect(refusal.detail).toContain("earlier stages must be resolved first");
  });

  it("blocks when earlier stages were never checked for the current version", () => {
    const gate = canRequestStage(4, issues, issues.version + 1);
    expect(gate.allowed).toBe(false);
    expect(gate.reason).toContain("has not been checked");
  });

  it("allows stage 4 once the repaired document checks clean", () => {
    expect(resolved.version).toBe(fixedDoc.version);
    expect(resolved.diagnoses.every((d) => d.verdict !== "issueFound")).toBe(true);
    const gate = canRequestStage(4, resolved, fixedDoc.version);
    expect(gate.allowed).toBe(true);
  });
});

describe("relation review flow", () => {
  it("renders candidate cards in keyword syntax with justification", () => {
    expect(relations.candidates.length).toBeGreaterThanOrEqual(2);
    const card = relations.candidates.find((c) => c.relation.kind === "isContradictoryWith")!;
    expect(relationLabel(card)).toBe("B isContradictoryWith C");
    const html = renderRelationCard(card);
    expect(html).toContain("B isContradictoryWith C");
    expect(html).toContain(card.justification);
  });

  it("progress counts decided over total", () => {
    expect(reviewProgress(relations.candidates)).toEqual({
      decided: 0,
      total: relations.candidates.length,
    });
  });

  it("undecided candidates block the run-analysis button with a reason", () => {
    const gate = analysisGate(relations.candidates);
    expect(gate.allowed).toBe(false);
    expect(gate.reason).toContain("still need a verdict");
  });

  it("rejecting every candidate unblocks the analysis", () => {
    const all: Candidate[] = relations.candidates.map((c) => ({
      ...c,
      verdict: "reject" as Verdict,
    }));
    expect(analysisGate(all).allowed).toBe(true);
  });

  it("verdicts persist through the service before local state advances", async () => {
    const local: RelationsPayload = JSON.parse(JSON.stringify(relations));
    const target = local.candidates[0];
    const calls: string[] = [];
    const api = {
      postVerdict: async (id: string, verdict: Verdict, note: string) => {
        calls.push(`${id}:${verdict}`);
        return { ...target, verdict, note };
      },
    };
    await submitVerdict(api as never, local, target.id, "accept");
    expect(calls).toEqual([`${target.id}:accept`]);
    expect(local.candidates[0].verdict).toBe("accept");

    const failing = {
      postVerdict: async () => {
        throw { status: 0, detail: "offline" };
      },
    };
    await expect(
      submitVerdict(failing as never, local, target.id, "reject"),
    ).rejects.toMatchObject({ detail: "offline" });
    // no silent loss, no local advance on failure
    expect(local.candidates[0].verdict).toBe("accept");
  });

  it("review panel shows the progress line", () => {
    const html = renderReviewPanel(relations);
    expect(html).toContain(`0 / ${relations.candidates.length} candidates reviewed`);
  });
});

describe("witness timeline", () => {
  it("draws events above the axis and timestamps below", () => {
    const clean = issues.diagnoses.find((d) => d.witness && d.witness.length > 0);
    const witness = clean?.witness ?? [
      { timestamp: 3600, events: ["A"], measures: {} },
      { timestamp: 21600, events: ["B"], measures: { m: 1 } },
    ];
    const svg = renderTimeline(witness);
    expect(svg).toContain("<svg");
    for (const row of witness) {
      expect(svg).toContain(`>${row.timestamp}</text>`);
      for (const event of row.events) {
        expect(svg).toContain(event);
      }
    }
  });
});
