// Thin typed client over the service endpoints. Errors are surfaced with
// the server's own detail text so refusals can be rendered verbatim.

import type {
  AnalysisEntry,
  ApiError,
  Candidate,
  DocumentPayload,
  RelationsPayload,
  Verdict,
} from "./types";

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(path, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const detail =
      typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail ?? body);
    const error: ApiError = { status: response.status, detail };
    throw error;
  }
  return body as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  getDocument(): Promise<DocumentPayload> {
    return request(`${this.base}/document`);
  }

  getRelations(): Promise<RelationsPayload> {
    return request(`${this.base}/relations`);
  }

  getDiagnoses(): Promise<AnalysisEntry> {
    return request(`${this.base}/diagnoses`);
  }

  postVerdict(id: string, verdict: Verdict, note = ""): Promise<Candidate> {
    return request(`${this.base}/relations/${id}/verdict`, {
      method: "POST",
      body: JSON.stringify({ verdict, note }),
    });
  }

  postAnalyze(stage: number | null, force = false): Promise<AnalysisEntry> {
    return request(`${this.base}/analyze`, {
      method: "POST",
      body: JSON.stringify({ stage, force }),
    });
  }

  postDocument(text: string): Promise<unknown> {
    return request(`${this.base}/document`, { method: "POST", body: JSON.stringify({ text }) });
  }
}
