// Browser bootstrap: wires the pure renderers and state transitions to the
// DOM and the engine API. Everything testable lives in the other modules.

import * as api from './api.js';
import { QueryDraft, draftToQuery, emptyDraft, validateDraft } from './draft.js';
import { QueryKind } from './model.js';
import {
  renderBaselinePicker,
  renderDraftStatus,
  renderQueryBuilder,
  renderResults,
  renderSchema,
} from './render.js';
import * as S from './state.js';

let state = S.initialState();
const el = (id: string) => document.getElementById(id)!;

function redraw() {
  el('schema-view').innerHTML = state.schema ? renderSchema(state.schema) : '';
  el('builder').innerHTML = state.schema ? renderQueryBuilder(state.draft, state.schema) : '';
  el('draft-status').innerHTML = renderDraftStatus(validateDraft(state.draft, state.schema));
  const submit = el('submit') as HTMLButtonElement;
  submit.disabled = !state.datasetId || validateDraft(state.draft, state.schema) !== null;
  el('history').innerHTML = state.history
    .slice()
    .reverse()
    .map((r) => renderResults(r, state.schema))
    .join('<hr>');
}

async function refreshSamples() {
  if (!state.datasetId) return;
  const filterText = (el('sample-filter') as HTMLInputElement).value.trim();
  const filter = filterText ? JSON.parse(filterText) : null;
  const { rows, fallback } = await api.fetchSamples(state.datasetId, filter, 25);
  el('picker').innerHTML = renderBaselinePicker(rows, state.selectedBaseline, fallback);
}

async function pollJob(jobId: string) {
  for (;;) {
    const record = await api.fetchJob(jobId);
    state = S.withRecord(state, record);
    redraw();
    if (record.state === 'done' || record.state === 'failed' || record.state === 'target_unmet') {
      return;
    }
    await new Promise((r) => setTimeout(r, 750));
  }
}

function draftFieldUpdate(target: HTMLElement, draft: QueryDraft): QueryDraft {
  const field = target.getAttribute('data-field');
  if (!field) return draft;
  const value = (target as HTMLInputElement).value;
  const row = target.closest('[data-index]');
  const index = row ? Number(row.getAttribute('data-index')) : -1;
  const next = structuredClone(draft);
  if (row?.classList.contains('target-row') && next.targets[index]) {
    const t = next.targets[index];
    if (field === 'target') t.target = value;
    else if (field === 'mode') t.mode = value as never;
    else if (field === 'lo') t.lo = Number(value);
    else if (field === 'hi') t.hi = Number(value);
    else if (field === 'label') t.label = value;
  } else if (row?.classList.contains('assignment-row') && next.assignments[index]) {
    const a = next.assignments[index];
    if (field === 'feature') a.feature = value;
    else if (field === 'mode') a.mode = value as never;
    else if (field === 'value') a.value = coerce(value);
    else if (field === 'from') a.from = coerce(value);
    else if (field === 'to') a.to = value === '?' ? '?' : coerce(value);
  } else if (field === 'gamma') next.gamma = Number(value);
  else if (field === 'n') next.n = Number(value);
  else if (field === 'seed') next.seed = Number(value);
  else if (field.startsWith('lambda-')) {
    next.lambdas[field.slice(7) as keyof QueryDraft['lambdas']] = Number(value);
  }
  return next;
}

function coerce(value: string): number | string {
  const n = Number(value);
  return Number.isFinite(n) && value.trim() !== '' ? n : value;
}

function handleAction(target: HTMLElement) {
  const action = target.getAttribute('data-action');
  if (!action) return;
  const index = Number(target.getAttribute('data-index') ?? -1);
  const next = structuredClone(state.draft);
  if (action === 'set-kind') {
    const kind = target.getAttribute('data-kind') as QueryKind;
    const fresh = emptyDraft(kind);
    fresh.targets = next.targets;
    fresh.constraints = next.constraints;
    fresh.baselineRow = kind === 'recommend' ? null : state.selectedBaseline;
    state = { ...state, draft: fresh };
  } else if (action === 'add-target') {
    const first = state.schema?.columns.find((c) => c.role === 'target');
    next.targets.push({ target: first?.name ?? '', mode: 'minimize' });
    state = { ...state, draft: next };
  } else if (action === 'remove-target') {
    next.targets.splice(index, 1);
    state = { ...state, draft: next };
  } else if (action === 'add-assignment') {
    const first = state.schema?.columns.find((c) => c.role !== 'target');
    next.assignments.push({ feature: first?.name ?? '', mode: 'search' });
    state = { ...state, draft: next };
  } else if (action === 'remove-assignment') {
    next.assignments.splice(index, 1);
    state = { ...state, draft: next };
  } else if (action === 'add-constraint') {
    const input = document.querySelector('[data-field="constraint-json"]') as HTMLInputElement;
    try {
      next.constraints.push(JSON.parse(input.value));
      state = { ...state, draft: next };
    } catch {
      el('draft-status').innerHTML = renderDraftStatus({
        rule: 'constraints',
        message: 'constraint must be valid JSON',
      });
      return;
    }
  } else if (action === 'remove-constraint') {
    next.constraints.splice(index, 1);
    state = { ...state, draft: next };
  } else if (action === 'use-as-baseline' || action === 'perturb') {
    const jobDiv = target.closest('.job');
    const jobIndex = Array.from(document.querySelectorAll('#history .job')).indexOf(jobDiv!);
    const record = state.history.slice().reverse()[jobIndex];
    const candidate = record?.result?.top[index];
    if (candidate) {
      state =
        action === 'use-as-baseline'
          ? S.pivotToReconfigure(state, candidate)
          : S.pivotToWhatIf(state, candidate);
    }
  }
  redraw();
}

function boot() {
  el('upload-form').addEventListener('submit', async (ev) => {
    ev.preventDefault();
    const input = el('dataset-file') as HTMLInputElement;
    if (!input.files?.length) return;
    const hints = (el('hints-json') as HTMLTextAreaElement).value.trim() || null;
    try {
      const meta = await api.uploadDataset(input.files[0], hints);
      state = S.withDataset(state, meta.dataset_id, meta.schema);
      el('dataset-label').textContent =
        `${meta.dataset_id} (${meta.row_counts.train}+${meta.row_counts.validation} rows)`;
      redraw();
      await refreshSamples();
    } catch (err) {
      el('dataset-label').textContent = String(err);
    }
  });

  el('picker').addEventListener('click', (ev) => {
    const row = (ev.target as HTMLElement).closest('.sample');
    if (!row) return;
    state = S.withBaseline(state, Number(row.getAttribute('data-row-id')));
    redraw();
    void refreshSamples();
  });

  el('sample-filter').addEventListener('change', () => void refreshSamples());

  el('builder').addEventListener('change', (ev) => {
    state = { ...state, draft: draftFieldUpdate(ev.target as HTMLElement, state.draft) };
    redraw();
  });
  el('builder').addEventListener('click', (ev) => {
    const target = (ev.target as HTMLElement).closest('[data-action]');
    if (target) {
      ev.preventDefault();
      handleAction(target as HTMLElement);
    }
  });
  el('history').addEventListener('click', (ev) => {
    const target = (ev.target as HTMLElement).closest('[data-action]');
    if (target) handleAction(target as HTMLElement);
  });

  el('submit').addEventListener('click', async () => {
    if (!state.datasetId) return;
    const problem = validateDraft(state.draft, state.schema);
    el('draft-status').innerHTML = renderDraftStatus(problem);
    if (problem) return;
    const jobId = await api.submitQuery(state.datasetId, draftToQuery(state.draft));
    void pollJob(jobId);
  });

  redraw();
}

document.addEventListener('DOMContentLoaded', boot);
