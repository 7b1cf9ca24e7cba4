// Queue ordering, decision validation, and the one-transition-per-click
// guarantee. Pure logic, no DOM.

import type { DecisionAction, DecisionRequest, Medium, RunState, RunSummary } from './types.js';
import type { ApiClient } from './api.js';
import { ApiError } from './api.js';

export interface QueueFilter {
  medium?: Medium;
  state?: RunState;
}

/** Pending runs surface oldest-first so nothing rots at the bottom. */
export function sortQueue(runs: RunSummary[]): RunSummary[] {
  return [...runs].sort((a, b) =>
    a.created_at < b.created_at ? -1 : a.created_at > b.created_at ? 1 : a.run_id.localeCompare(b.run_id),
  );
}

export function applyFilter(runs: RunSummary[], filter: QueueFilter): RunSummary[] {
  return runs.filter(
    (r) => (!filter.medium || r.medium === filter.medium) && (!filter.state || r.state === filter.state),
  );
}

/** Client-side gate: regeneration without direction is not actionable. */
export function validateDecision(action: DecisionAction, note: string): string | null {
  if (action === 'regenerate' && note.trim() === '') {
    return 'regenerate requires a non-empty note for the next prompt';
  }
  return null;
}

export function newIdempotencyKey(): string {
  const rand =
    typeof crypto !== 'undefined' && 'randomUUID' in crypto
      ? crypto.randomUUID()
      : Math.random().toString(36).slice(2);
  return `ui-${Date.now()}-${rand}`;
}

export type DecisionOutcome =
  | { kind: 'submitted'; summary: import('./types.js').RunSummary }
  | { kind: 'duplicate' }
  | { kind: 'rejected'; reason: string }
  | { kind: 'conflict'; message: string };

/**
 * Serializes decision submission for one run. The first click mints the
 * idempotency key; every further click while in flight (or after success)
 * reuses it, so the server performs exactly one state transition no
 * matter how fast the button is hammered.
 */
export class DecisionController {
  private key: string | null = null;
  private inFlight: Promise<DecisionOutcome> | null = null;
  private settled: DecisionOutcome | null = null;

  constructor(
    private readonly client: ApiClient,
    private readonly runId: string,
  ) {}

  submit(decision: DecisionRequest): Promise<DecisionOutcome> {
    const invalid = validateDecision(decision.action, decision.note ?? '');
    if (invalid) {
      return Promise.resolve({ kind: 'rejected', reason: invalid });
    }
    if (this.settled && this.settled.kind === 'submitted') {
      return Promise.resolve({ kind: 'duplicate' });
    }
    if (this.inFlight) {
      return this.inFlight.then(() => ({ kind: 'duplicate' }));
    }
    this.key = this.key ?? newIdempotencyKey();
    this.inFlight = this.client
      .decide(this.runId, decision, this.key)
      .then((summary): DecisionOutcome => {
        this.settled = { kind: 'submitted', summary };
        return this.settled;
      })
      .catch((err): DecisionOutcome => {
        this.inFlight = null;
        if (err instanceof ApiError && err.status === 409) {
          // someone else moved the run; surface and let the view refresh
          return { kind: 'conflict', message: err.message };
        }
        // allow a retry with a fresh submission but the same key
        throw err;
      });
    return this.inFlight;
  }
}

export function likertLabel(score: number): string {
  const labels = ['non-match', 'syntactically correct', 'semantically correct', 'performance optimized'];
  return labels[score] ?? `score ${score}`;
}
