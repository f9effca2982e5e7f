// Page wiring. All durable state lives behind the HTTP API: a reload
// re-fetches everything and reproduces the same view.

import { ApiClient } from "./api";
import { canRequestStage, renderStagePanels } from "./diagnoses";
import { analysisGate, renderReviewPanel, submitVerdict } from "./review";
import type { AnalysisEntry, ApiError, DocumentPayload, RelationsPayload, Verdict } from "./types";

const api = new ApiClient("");

interface View {
  document: DocumentPayload;
  relations: RelationsPayload;
  analysis: AnalysisEntry;
}

async function load(): Promise<View> {
  const [document_, relations, analysis] = await Promise.all([
    api.getDocument(),
    api.getRelations(),
    api.getDiagnoses(),
  ]);
  return { document: document_, relations, analysis };
}

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function renderError(err: unknown): void {
  const banner = el("banner");
  const detail = (err as ApiError).detail ?? String(err);
  banner.textContent = detail;
  banner.classList.add("visible");
}

function clearError(): void {
  el("banner").classList.remove("visible");
  el("banner").textContent = "";
}

async function refresh(): Promise<void> {
  const view = await load();
  el("document").textContent = view.document.text;
  el("relations").innerHTML = renderReviewPanel(view.relations);
  el("diagnoses").innerHTML = renderStagePanels(view.analysis, view.document.text);

  const gate = analysisGate(view.relations.candidates);
  const runButton = el("run-analysis") as HTMLButtonElement;
  runButton.disabled = !gate.allowed;
  runButton.title = gate.reason;

  for (const button of el("relations").querySelectorAll<HTMLButtonElement>("button[data-verdict]")) {
    button.addEventListener("click", async () => {
      clearError();
      try {
        await submitVerdict(
          api,
          view.relations,
          button.dataset.id!,
          button.dataset.verdict as Verdict,
        );
        await refresh();
      } catch (err) {
        renderError(err); // offline or refused: nothing advanced locally
      }
    });
  }

  runButton.onclick = async () => {
    clearError();
    try {
      await api.postAnalyze(null, false);
      await refresh();
    } catch (err) {
      renderError(err);
    }
  };

  for (const stage of [1, 2, 3, 4]) {
    const button = el(`stage-${stage}`) as HTMLButtonElement;
    const stageGate = canRequestStage(stage, view.analysis, view.document.version);
    button.disabled = !stageGate.allowed;
    button.title = stageGate.reason;
    button.onclick = async () => {
      clearError();
      try {
        await api.postAnalyze(stage, false);
        await refresh();
      } catch (err) {
        renderError(err); // the server refusal text is shown verbatim
      }
    };
  }
}

refresh().catch(renderError);
