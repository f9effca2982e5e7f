// Payload shapes mirrored from the backend JSON API. The UI never computes
// verdicts; it only renders what the service returns.

export type Span = [number, number];

export interface DocumentPayload {
  text: string;
  version: number;
  spans: Record<string, Span>;
}

export interface RelationOperand {
  event?: string;
  prop?: string;
  term?: string;
}

export interface RelationData {
  kind: string;
  args: RelationOperand[];
  sign: "positive" | "negative";
  provenance: string;
}

export type Verdict = "undecided" | "accept" | "reject";

export interface Candidate {
  id: string;
  relation: RelationData;
  justification: string;
  verdict: Verdict;
  note: string;
  flipped: boolean;
  text?: string;
}

export interface RelationsPayload {
  candidates: Candidate[];
  added: Candidate[];
  document: RelationData[];
}

export interface WitnessRow {
  timestamp: number;
  events: string[];
  measures: Record<string, number>;
}

export interface DiagnosisPayload {
  kind: string;
  subject: string;
  verdict: string;
  stage: number;
  bound: [number, number];
  witness: WitnessRow[] | null;
  core: string[];
  narrative: string;
  spans: Record<string, Span>;
  core_names?: Record<string, string>;
}

export interface AnalysisEntry {
  version: number;
  stages: number[];
  forced?: boolean;
  bound?: [number, number];
  timestamp?: string;
  diagnoses: DiagnosisPayload[];
}

export interface ApiError {
  status: number;
  detail: string;
}
