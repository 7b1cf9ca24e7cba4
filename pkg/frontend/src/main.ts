// Application bootstrap: queue view polling the API, a detail view per
// run, and the decision form wired through DecisionController so each
// decision causes exactly one server-side transition.

import { ApiClient } from './api.js';
import { Poller } from './poll.js';
import { applyFilter, DecisionController, sortQueue } from './state.js';
import type { DecisionAction, Medium, RunDetail, RunState, RunSummary } from './types.js';
import {
  renderBanner,
  renderCandidateDiff,
  renderCtiPanel,
  renderDecisionForm,
  renderEmptyQueue,
  renderIteration,
  renderQueueCard,
  renderRetrievedRules,
  type RedundancyRow,
} from './ui.js';

const app = document.getElementById('app');
if (!app) throw new Error('missing #app mount point');

const client = new ApiClient('', localStorage.getItem('falcon_token'));
const controllers = new Map<string, DecisionController>();

let filterMedium: Medium | undefined;
let filterState: RunState = 'pending_review';
let openRunId: string | null = null;
let bannerMessage: string | null = null;

function controllerFor(runId: string): DecisionController {
  let controller = controllers.get(runId);
  if (!controller) {
    controller = new DecisionController(client, runId);
    controllers.set(runId, controller);
  }
  return controller;
}

const header = document.createElement('header');
header.innerHTML = `
  <h1>rule review queue</h1>
  <div class="controls">
    <label>state
      <select id="state-filter">
        <option value="pending_review" selected>pending review</option>
        <option value="running">running</option>
        <option value="approved">approved</option>
        <option value="rejected">rejected</option>
        <option value="failed">failed</option>
      </select>
    </label>
    <label>medium
      <select id="medium-filter">
        <option value="">all</option>
        <option value="snort">snort</option>
        <option value="yara">yara</option>
      </select>
    </label>
    <label>token <input id="token" type="password" placeholder="bearer token"/></label>
  </div>`;
const bannerHost = document.createElement('div');
const queueHost = document.createElement('main');
queueHost.id = 'queue';
const detailHost = document.createElement('aside');
detailHost.id = 'detail';
app.append(header, bannerHost, queueHost, detailHost);

(header.querySelector('#state-filter') as HTMLSelectElement).addEventListener('change', (ev) => {
  filterState = (ev.target as HTMLSelectElement).value as RunState;
  void poller.tick();
});
(header.querySelector('#medium-filter') as HTMLSelectElement).addEventListener('change', (ev) => {
  const value = (ev.target as HTMLSelectElement).value;
  filterMedium = value ? (value as Medium) : undefined;
  void poller.tick();
});
const tokenInput = header.querySelector('#token') as HTMLInputElement;
tokenInput.value = localStorage.getItem('falcon_token') ?? '';
tokenInput.addEventListener('change', () => {
  const token = tokenInput.value.trim() || null;
  client.setToken(token);
  if (token) localStorage.setItem('falcon_token', token);
  else localStorage.removeItem('falcon_token');
  void poller.tick();
});

function renderQueue(runs: RunSummary[]): void {
  bannerHost.replaceChildren(renderBanner(bannerMessage));
  queueHost.replaceChildren();
  const visible = sortQueue(applyFilter(runs, { medium: filterMedium, state: filterState }));
  if (!visible.length) {
    queueHost.append(renderEmptyQueue());
  }
  for (const run of visible) {
    queueHost.append(renderQueueCard(run, (id) => void openRun(id)));
  }
  if (openRunId && !visible.some((r) => r.run_id === openRunId)) {
    // the open run left this view (approved elsewhere, filter change): keep
    // the detail pane but refresh its content
    void refreshDetail(openRunId);
  }
}

async function loadRedundancy(run: RunDetail): Promise<RedundancyRow[]> {
  const rows: RedundancyRow[] = [];
  const lastRule = [...run.iterations].reverse().find((it) => it.candidate)?.candidate?.rule_text;
  for (const retrieved of run.retrieved_rules ?? []) {
    let scaled: number | undefined;
    if (lastRule) {
      try {
        scaled = (await client.score(run.cti, retrieved.raw_text)).scaled;
      } catch {
        scaled = undefined; // scoring is decorative; the list still renders
      }
    }
    rows.push({ ...retrieved, scaled });
  }
  return rows;
}

async function refreshDetail(runId: string): Promise<void> {
  const run = await client.getRun(runId);
  const redundancy = await loadRedundancy(run);
  renderDetail(run, redundancy);
}

function renderDetail(run: RunDetail, redundancy: RedundancyRow[]): void {
  detailHost.replaceChildren();
  const title = document.createElement('h2');
  title.textContent = `${run.cti.threat_name} [${run.medium}] - ${run.state}`;
  detailHost.append(title);
  if (run.failure_reason) {
    const reason = document.createElement('p');
    reason.className = 'failure-reason';
    reason.textContent = run.failure_reason;
    detailHost.append(reason);
  }
  detailHost.append(renderCtiPanel(run.cti));
  run.iterations.forEach((iteration, index) => {
    detailHost.append(renderIteration(iteration, index));
  });
  const diff = renderCandidateDiff(run);
  if (diff) detailHost.append(diff);
  detailHost.append(renderRetrievedRules(redundancy));

  if (run.state === 'pending_review') {
    const form = renderDecisionForm();
    const submit = (action: DecisionAction) => {
      form.error.textContent = '';
      const likertRaw = form.likert.value;
      const decision = {
        action,
        note: form.note.value,
        ...(likertRaw === '' ? {} : { likert: Number(likertRaw) }),
      };
      void controllerFor(run.run_id)
        .submit(decision)
        .then((outcome) => {
          if (outcome.kind === 'rejected') {
            form.error.textContent = outcome.reason;
          } else if (outcome.kind === 'conflict') {
            form.error.textContent = `state changed elsewhere: ${outcome.message}`;
            void refreshDetail(run.run_id);
          } else {
            void poller.tick();
            void refreshDetail(run.run_id);
          }
        })
        .catch((err) => {
          form.error.textContent = err instanceof Error ? err.message : String(err);
        });
    };
    form.buttons.approve.addEventListener('click', () => submit('approve'));
    form.buttons.reject.addEventListener('click', () => submit('reject'));
    form.buttons.regenerate.addEventListener('click', () => submit('regenerate'));
    detailHost.append(form.root);
  }
}

async function openRun(runId: string): Promise<void> {
  openRunId = runId;
  await refreshDetail(runId);
}

const poller = new Poller<RunSummary[]>(
  {
    load: () => client.listRuns(filterState, filterMedium),
    onData: (runs) => {
      bannerMessage = null;
      renderQueue(runs);
    },
    onError: (message) => {
      bannerMessage = `API unreachable: ${message}`;
      bannerHost.replaceChildren(renderBanner(bannerMessage));
    },
    onRecovered: () => {
      bannerMessage = null;
    },
  },
  2000,
);

poller.start();
