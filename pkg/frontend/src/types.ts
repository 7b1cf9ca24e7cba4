// Payload shapes mirroring the /api/v1 response schema. The UI never
// rewrites these; rule text in particular is rendered byte-faithful.

export type Medium = 'snort' | 'yara';
export type RunState = 'running' | 'pending_review' | 'approved' | 'rejected' | 'failed';
export type Stage = 'syntax' | 'semantic' | 'performance' | 'analyst';
export type DecisionAction = 'approve' | 'reject' | 'regenerate';

export interface RunSummary {
  run_id: string;
  medium: Medium;
  state: RunState;
  iterations: number;
  threat_name?: string;
  deployed_rule_id?: string | null;
  created_at: string;
  updated_at: string;
}

export interface Finding {
  code: string;
  severity: 'critical' | 'warning' | 'info';
  message: string;
}

export interface FeedbackEntry {
  stage: Stage;
  status: boolean;
  score?: number;
  feedback?: string;
  findings?: Finding[];
}

export interface Candidate {
  rule_text: string;
  action: 'new' | 'update';
  updated_rule_id?: string | null;
  model_rationale?: string;
}

export interface Iteration {
  candidate: Candidate | null;
  feedback: FeedbackEntry[];
}

export interface CtiIoc {
  kind: string;
  value: string;
  label?: string;
}

export interface CtiDocument {
  id: string;
  threat_name: string;
  categories?: string[];
  iocs?: CtiIoc[];
  behaviors?: string[];
  free_text?: string;
}

export interface RetrievedRule {
  rule_id: string;
  raw_text: string;
}

export interface RunDetail {
  run_id: string;
  cti: CtiDocument;
  medium: Medium;
  state: RunState;
  retrieved_rule_ids: string[];
  retrieved_rules?: RetrievedRule[];
  iterations: Iteration[];
  analyst_notes: string[];
  likert_scores: number[];
  failure_reason?: string | null;
  deployed_rule_id?: string | null;
  created_at: string;
  updated_at: string;
}

export interface DecisionRequest {
  action: DecisionAction;
  note?: string;
  likert?: number;
}

export interface ScoreResponse {
  raw_cosine: number;
  scaled: number;
}

export const LIKERT_LABELS: readonly string[] = [
  'non-match',
  'syntactically correct',
  'semantically correct',
  'performance optimized',
];
