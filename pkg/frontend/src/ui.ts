// DOM rendering. Rule text always goes through textContent on <pre>
// nodes: byte-faithful, no markup interpretation, no rewriting.

import type {
  CtiDocument,
  FeedbackEntry,
  Iteration,
  RunDetail,
  RunSummary,
} from './types.js';
import { diffLines } from './diff.js';
import { likertLabel } from './state.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderBanner(message: string | null): HTMLElement {
  const banner = el('div', message ? 'banner banner-error' : 'banner banner-hidden');
  if (message) {
    banner.append(el('span', undefined, message));
    banner.append(el('span', 'banner-retry', 'retrying automatically'));
  }
  return banner;
}

export function renderQueueCard(run: RunSummary, onOpen: (id: string) => void): HTMLElement {
  const card = el('article', `card state-${run.state}`);
  card.dataset['runId'] = run.run_id;
  const title = el('h3', undefined, run.threat_name || run.run_id);
  const meta = el('p', 'card-meta',
    `${run.medium} | ${run.state} | ${run.iterations} iteration(s) | created ${run.created_at}`);
  const open = el('button', 'open-run', 'review');
  open.addEventListener('click', () => onOpen(run.run_id));
  card.append(title, meta, open);
  return card;
}

export function renderEmptyQueue(): HTMLElement {
  const panel = el('div', 'empty-state');
  panel.append(el('h3', undefined, 'Nothing waiting for review'));
  panel.append(el('p', undefined, 'New runs appear here as soon as they clear the validators.'));
  return panel;
}

export function renderCtiPanel(cti: CtiDocument): HTMLElement {
  const panel = el('section', 'cti-panel');
  panel.append(el('h4', undefined, 'Threat intelligence'));
  panel.append(el('p', 'cti-name', `Threat Name: ${cti.threat_name}`));
  if (cti.categories?.length) {
    panel.append(el('p', undefined, 'Threat Category:'));
    const list = el('ul');
    for (const category of cti.categories) list.append(el('li', undefined, category));
    panel.append(list);
  }
  if (cti.iocs?.length) {
    panel.append(el('p', undefined, 'Indicators of Compromise (IoCs):'));
    const list = el('ul');
    for (const ioc of cti.iocs) {
      list.append(el('li', 'ioc', `${ioc.label ?? ioc.kind}: ${ioc.value}`));
    }
    panel.append(list);
  }
  if (cti.behaviors?.length) {
    panel.append(el('p', undefined, 'Observed Behavior:'));
    const list = el('ol');
    for (const behavior of cti.behaviors) list.append(el('li', undefined, behavior));
    panel.append(list);
  }
  return panel;
}

function feedbackChip(entry: FeedbackEntry): HTMLElement {
  const chip = el('span', `chip chip-${entry.stage} ${entry.status ? 'chip-pass' : 'chip-fail'}`);
  let label = `${entry.stage}: ${entry.status ? 'pass' : 'fail'}`;
  if (typeof entry.score === 'number') label += ` (${entry.score.toFixed(3)})`;
  chip.textContent = label;
  return chip;
}

export function renderIteration(iteration: Iteration, index: number): HTMLElement {
  const section = el('section', 'iteration');
  section.append(el('h5', undefined, `Iteration ${index + 1}`));
  const chips = el('div', 'chips');
  for (const entry of iteration.feedback) chips.append(feedbackChip(entry));
  section.append(chips);
  if (iteration.candidate) {
    const action = iteration.candidate.action === 'update'
      ? `update of ${iteration.candidate.updated_rule_id}`
      : 'new rule';
    section.append(el('p', 'candidate-action', action));
    const pre = el('pre', 'rule-text');
    pre.textContent = iteration.candidate.rule_text;
    section.append(pre);
  } else {
    section.append(el('p', 'candidate-missing', 'no rule extracted this iteration'));
  }
  for (const entry of iteration.feedback) {
    if (entry.feedback) {
      const block = el('pre', `feedback feedback-${entry.stage}`);
      block.textContent = `[${entry.stage}] ${entry.feedback}`;
      section.append(block);
    }
  }
  return section;
}

/** Read-only diff between the two most recent candidates, when both exist. */
export function renderCandidateDiff(run: RunDetail): HTMLElement | null {
  const candidates = run.iterations
    .map((it) => it.candidate?.rule_text)
    .filter((text): text is string => typeof text === 'string');
  if (candidates.length < 2) return null;
  const before = candidates[candidates.length - 2]!;
  const after = candidates[candidates.length - 1]!;
  const section = el('section', 'diff-view');
  section.append(el('h5', undefined, 'Diff vs previous candidate'));
  const pre = el('pre', 'diff');
  for (const line of diffLines(before, after)) {
    const row = el('div', `diff-line diff-${line.kind}`);
    const prefix = line.kind === 'add' ? '+ ' : line.kind === 'del' ? '- ' : '  ';
    row.textContent = prefix + line.text;
    pre.append(row);
  }
  section.append(pre);
  return section;
}

export interface RedundancyRow {
  rule_id: string;
  raw_text: string;
  scaled?: number;
}

export function renderRetrievedRules(rows: RedundancyRow[]): HTMLElement {
  const section = el('section', 'retrieved');
  section.append(el('h5', undefined, 'Deployed rules retrieved for context'));
  if (!rows.length) {
    section.append(el('p', undefined, 'none deployed'));
    return section;
  }
  for (const row of rows) {
    const item = el('details', 'retrieved-rule');
    const summary = el('summary');
    const score = typeof row.scaled === 'number' ? ` (similarity ${row.scaled.toFixed(3)})` : '';
    summary.textContent = `${row.rule_id}${score}`;
    const pre = el('pre', 'rule-text');
    pre.textContent = row.raw_text;
    item.append(summary, pre);
    section.append(item);
  }
  return section;
}

export interface DecisionFormHandles {
  root: HTMLElement;
  note: HTMLTextAreaElement;
  likert: HTMLSelectElement;
  buttons: Record<'approve' | 'reject' | 'regenerate', HTMLButtonElement>;
  error: HTMLElement;
}

export function renderDecisionForm(): DecisionFormHandles {
  const root = el('section', 'decision-form');
  root.append(el('h5', undefined, 'Analyst decision'));
  const note = el('textarea', 'note-editor') as HTMLTextAreaElement;
  note.placeholder = 'Note for the audit trail; required to steer a regeneration.';
  const likert = el('select', 'likert') as HTMLSelectElement;
  const none = el('option', undefined, 'no quality score');
  none.value = '';
  likert.append(none);
  for (let score = 0; score <= 3; score++) {
    const option = el('option', undefined, `${score} - ${likertLabel(score)}`);
    option.value = String(score);
    likert.append(option);
  }
  const row = el('div', 'decision-buttons');
  const buttons = {
    approve: el('button', 'approve', 'approve & deploy'),
    reject: el('button', 'reject', 'reject'),
    regenerate: el('button', 'regenerate', 'regenerate with note'),
  };
  row.append(buttons.approve, buttons.reject, buttons.regenerate);
  const error = el('p', 'decision-error');
  root.append(note, likert, row, error);
  return { root, note, likert, buttons, error };
}
