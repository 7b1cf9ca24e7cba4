// Thin typed client over /api/v1. All mutations go through here; the UI
// holds no authoritative state. Mutating calls carry an Idempotency-Key
// so retries and double-clicks replay instead of acting twice.

import type {
  CtiDocument,
  DecisionRequest,
  Medium,
  RunDetail,
  RunState,
  RunSummary,
  ScoreResponse,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private token: string | null = null,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private headers(idempotencyKey?: string): Record<string, string> {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' };
    if (this.token) headers['Authorization'] = `Bearer ${this.token}`;
    if (idempotencyKey) headers['Idempotency-Key'] = idempotencyKey;
    return headers;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, 'network_down', `API unreachable: ${String(err)}`);
    }
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const error = (body as { error?: { code?: string; message?: string } }).error ?? {};
      throw new ApiError(response.status, error.code ?? 'internal', error.message ?? 'request failed');
    }
    return body as T;
  }

  async listRuns(state?: RunState, medium?: Medium): Promise<RunSummary[]> {
    const params = new URLSearchParams();
    if (state) params.set('state', state);
    if (medium) params.set('medium', medium);
    const suffix = params.toString() ? `?${params.toString()}` : '';
    const body = await this.request<{ runs: RunSummary[] }>(`/api/v1/runs${suffix}`, {
      headers: this.headers(),
    });
    return body.runs;
  }

  async getRun(runId: string): Promise<RunDetail> {
    return this.request<RunDetail>(`/api/v1/runs/${runId}`, { headers: this.headers() });
  }

  async createRun(cti: CtiDocument, medium: Medium, idempotencyKey: string): Promise<{ run_id: string }> {
    return this.request<{ run_id: string }>(`/api/v1/runs`, {
      method: 'POST',
      headers: this.headers(idempotencyKey),
      body: JSON.stringify({ cti, medium }),
    });
  }

  async decide(runId: string, decision: DecisionRequest, idempotencyKey: string): Promise<RunSummary> {
    return this.request<RunSummary>(`/api/v1/runs/${runId}/analyst-decision`, {
      method: 'POST',
      headers: this.headers(idempotencyKey),
      body: JSON.stringify(decision),
    });
  }

  async score(cti: CtiDocument, ruleText: string): Promise<ScoreResponse> {
    return this.request<ScoreResponse>(`/api/v1/score`, {
      method: 'POST',
      headers: this.headers(),
      body: JSON.stringify({ cti, rule_text: ruleText }),
    });
  }
}
