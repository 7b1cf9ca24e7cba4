import { describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import {
  applyFilter,
  DecisionController,
  likertLabel,
  newIdempotencyKey,
  sortQueue,
  validateDecision,
} from '../src/state.js';
import type { RunSummary } from '../src/types.js';
import { FakeServer } from './fake-server.js';

function summary(id: string, created: string, state = 'pending_review'): RunSummary {
  return {
    run_id: id,
    medium: 'yara',
    state: state as RunSummary['state'],
    iterations: 1,
    threat_name: `t-${id}`,
    created_at: created,
    updated_at: created,
  };
}

describe('queue ordering and filtering', () => {
  it('sorts oldest first', () => {
    const runs = [
      summary('newer', '2026-02-02T10:00:00Z'),
      summary('oldest', '2026-02-01T08:00:00Z'),
      summary('middle', '2026-02-01T12:00:00Z'),
    ];
    expect(sortQueue(runs).map((r) => r.run_id)).toEqual(['oldest', 'middle', 'newer']);
  });

  it('breaks created_at ties deterministically', () => {
    const runs = [summary('b', '2026-02-01T08:00:00Z'), summary('a', '2026-02-01T08:00:00Z')];
    expect(sortQueue(runs).map((r) => r.run_id)).toEqual(['a', 'b']);
  });

  it('filters by medium and state', () => {
    const runs = [
      { ...summary('r1', '2026-01-01'), medium: 'snort' as const },
      { ...summary('r2', '2026-01-02'), medium: 'yara' as const },
      { ...summary('r3', '2026-01-03'), state: 'approved' as const },
    ];
    expect(applyFilter(runs, { medium: 'yara', state: 'pending_review' }).map((r) => r.run_id)).toEqual(['r2']);
    expect(applyFilter(runs, {}).length).toBe(3);
  });
});

describe('decision validation', () => {
  it('blocks regenerate with an empty note', () => {
    expect(validateDecision('regenerate', '')).toMatch(/non-empty note/);
    expect(validateDecision('regenerate', '   ')).toMatch(/non-empty note/);
    expect(validateDecision('regenerate', 'add wide modifier')).toBeNull();
  });

  it('allows approve and reject without notes', () => {
    expect(validateDecision('approve', '')).toBeNull();
    expect(validateDecision('reject', '')).toBeNull();
  });
});

describe('likert labels', () => {
  it('maps the four anchor points', () => {
    expect(likertLabel(0)).toBe('non-match');
    expect(likertLabel(1)).toBe('syntactically correct');
    expect(likertLabel(2)).toBe('semantically correct');
    expect(likertLabel(3)).toBe('performance optimized');
  });
});

describe('idempotency keys', () => {
  it('generates unique keys', () => {
    const keys = new Set(Array.from({ length: 50 }, () => newIdempotencyKey()));
    expect(keys.size).toBe(50);
  });
});

describe('DecisionController', () => {
  async function pendingRun(server: FakeServer, client: ApiClient): Promise<string> {
    const { run_id } = await client.createRun(
      { id: 'c1', threat_name: 'T', iocs: [{ kind: 'ip', value: '10.0.0.1' }] },
      'yara',
      newIdempotencyKey(),
    );
    await client.listRuns(); // fake server advances running runs on poll
    await client.listRuns();
    return run_id;
  }

  it('double submission produces one transition', async () => {
    const server = new FakeServer();
    const client = new ApiClient('', null, server.createFetch());
    const runId = await pendingRun(server, client);
    const controller = new DecisionController(client, runId);

    const [first, second] = await Promise.all([
      controller.submit({ action: 'approve', likert: 3 }),
      controller.submit({ action: 'approve', likert: 3 }),
    ]);
    expect(first.kind === 'submitted' || second.kind === 'submitted').toBe(true);
    expect([first.kind, second.kind].filter((k) => k === 'submitted')).toHaveLength(1);
    expect(server.deployedRules).toHaveLength(1);

    // a third click after settling is a no-op
    const third = await controller.submit({ action: 'approve' });
    expect(third.kind).toBe('duplicate');
    expect(server.deployedRules).toHaveLength(1);
  });

  it('maps 409 conflicts for the view to explain', async () => {
    const server = new FakeServer();
    const client = new ApiClient('', null, server.createFetch());
    const runId = await pendingRun(server, client);
    // another analyst approves first, through a different controller
    await new DecisionController(client, runId).submit({ action: 'approve' });

    const mine = new DecisionController(client, runId);
    const outcome = await mine.submit({ action: 'reject' });
    expect(outcome.kind).toBe('conflict');
    if (outcome.kind === 'conflict') {
      expect(outcome.message).toMatch(/approved/);
    }
  });

  it('client-side validation never reaches the server', async () => {
    const server = new FakeServer();
    const client = new ApiClient('', null, server.createFetch());
    const runId = await pendingRun(server, client);
    const controller = new DecisionController(client, runId);
    const outcome = await controller.submit({ action: 'regenerate', note: '' });
    expect(outcome.kind).toBe('rejected');
    const run = await client.getRun(runId);
    expect(run.state).toBe('pending_review');
  });
});
