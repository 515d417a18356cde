// Pure renderers: JSON payloads in, HTML strings out. Every displayed number
// comes straight from the payload; no client-side recomputation.

import { QueryDraft, DraftProblem } from './draft.js';
import {
  CandidateJson,
  JobRecord,
  SampleRow,
  Schema,
  TrustJson,
  featureColumns,
  targetColumns,
} from './model.js';

export function esc(value: unknown): string {
  return String(value)
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function badge(label: TrustJson['label']): string {
  return `<span class="badge badge-${label}">${label}</span>`;
}

export function scoreBar(name: string, value: number | null): string {
  if (value === null || value === undefined) {
    return `<div class="bar bar-absent" data-score="${name}">${name}: &ndash;</div>`;
  }
  const pct = Math.round(value * 100);
  return (
    `<div class="bar" data-score="${name}" data-value="${value}">` +
    `<span class="bar-label">${name} ${esc(value)}</span>` +
    `<span class="bar-fill" style="width:${pct}%"></span></div>`
  );
}

export function nextRunsCsv(runs: Record<string, number | string>[]): string {
  if (!runs.length) return '';
  const cols = Object.keys(runs[0]);
  const lines = [cols.join(',')];
  for (const run of runs) {
    lines.push(cols.map((c) => String(run[c])).join(','));
  }
  return lines.join('\n') + '\n';
}

function candidateRow(cand: CandidateJson, index: number, schema: Schema | null): string {
  const trust = cand.trust;
  const config = Object.entries(cand.config)
    .map(([k, v]) => `<span class="kv"><b>${esc(k)}</b>=${esc(v)}</span>`)
    .join(' ');
  const losses = cand.loss_terms;
  const nextRuns =
    trust && trust.label === 'unsupported' && trust.next_runs
      ? `<a class="next-runs" download="next-runs-${index}.csv" ` +
        `href="data:text/csv;base64,${btoa(nextRunsCsv(trust.next_runs))}">` +
        `download ${trust.next_runs.length} next runs</a>`
      : '';
  return `
  <tr class="candidate" data-index="${index}">
    <td>${index + 1}</td>
    <td class="config">${config}</td>
    <td class="prediction">${cand.prediction.map((v) => esc(v)).join(', ')}</td>
    <td class="trust-cell">
      ${trust ? badge(trust.label) : ''}
      ${trust ? scoreBar('ood', trust.ood) : ''}
      ${trust ? scoreBar('uq', trust.uq) : ''}
      ${trust ? `<span class="support-count">${trust.support_count} supporting samples</span>` : ''}
      ${trust ? `<div class="reason">${esc(trust.reason)}</div>` : ''}
      ${nextRuns}
    </td>
    <td class="losses">
      valid ${esc(losses.valid)} / prox ${esc(losses.prox)} / cons ${esc(losses.cons)}
      / div ${esc(losses.div)} / total ${esc(cand.total_loss)}
    </td>
    <td class="actions">
      <button data-action="use-as-baseline" data-index="${index}">use as baseline</button>
      <button data-action="perturb" data-index="${index}">perturb</button>
    </td>
  </tr>`;
}

export function renderResults(record: JobRecord, schema: Schema | null): string {
  if (record.state === 'failed') {
    return `<div class="job failed">job failed: ${esc(record.error ?? 'unknown error')}</div>`;
  }
  if (record.state === 'queued' || record.state === 'running') {
    const timings = Object.entries(record.timings ?? {})
      .map(([k, v]) => `${esc(k)}=${esc(v)}`)
      .join(' ');
    return `<div class="job pending">job ${esc(record.state)}&hellip; ${timings}</div>`;
  }
  const result = record.result!;
  const unmet = result.target_unmet
    ? '<div class="banner target-unmet">target not met within budget; best-effort candidates below</div>'
    : '';
  const deltas =
    result.kind === 'what_if' && result.deltas
      ? `<div class="deltas">predicted change: ${result.deltas.map((v) => esc(v)).join(', ')}</div>`
      : '';
  const rows = result.top.map((c, i) => candidateRow(c, i, schema)).join('');
  const timings = Object.entries(record.timings ?? {})
    .map(([k, v]) => `<span class="timing">${esc(k)}=${esc(v)}</span>`)
    .join(' ');
  return `
  <div class="job ${esc(record.state)}">
    <div class="job-head">state: <b>${esc(record.state)}</b> &middot;
      ${result.candidate_count} candidates retained &middot; showing top ${result.top.length}
      <span class="timings">${timings}</span>
    </div>
    ${unmet}${deltas}
    <table class="results">
      <thead><tr><th>#</th><th>configuration</th><th>prediction</th>
        <th>trust</th><th>loss decomposition</th><th></th></tr></thead>
      <tbody>${rows}</tbody>
    </table>
  </div>`;
}

export function renderBaselinePicker(rows: SampleRow[], selected: number | null,
                                     fallback: boolean): string {
  if (!rows.length) {
    return '<div class="picker-empty">no rows match this filter</div>';
  }
  const note = fallback
    ? '<div class="picker-note">no row satisfies every filter item; showing closest matches</div>'
    : '';
  const cols = Object.keys(rows[0].values);
  const head = cols.map((c) => `<th>${esc(c)}</th>`).join('');
  const body = rows
    .map(
      (r) => `
    <tr class="sample${r.row_id === selected ? ' selected' : ''}" data-row-id="${r.row_id}">
      <td>${r.row_id}</td>${cols.map((c) => `<td>${esc(r.values[c])}</td>`).join('')}
    </tr>`,
    )
    .join('');
  return `${note}<table class="samples"><thead><tr><th>row</th>${head}</tr></thead><tbody>${body}</tbody></table>`;
}

export function renderDraftStatus(problem: DraftProblem | null): string {
  if (!problem) {
    return '<div class="draft-status ok">query is ready to submit</div>';
  }
  return `<div class="draft-status invalid" data-rule="${esc(problem.rule)}">${esc(problem.message)}</div>`;
}

export function renderSchema(schema: Schema): string {
  const rows = schema.columns
    .map(
      (c) => `
    <tr><td>${esc(c.name)}</td><td>${c.kind}</td><td>${c.role}</td>
      <td>${c.role === 'target' ? esc(c.target_task ?? '') : ''}</td></tr>`,
    )
    .join('');
  return `<table class="schema"><thead><tr><th>column</th><th>kind</th><th>role</th><th>task</th></tr></thead><tbody>${rows}</tbody></table>`;
}

export function renderQueryBuilder(draft: QueryDraft, schema: Schema): string {
  const targets = targetColumns(schema);
  const features = featureColumns(schema);
  const targetRows = draft.targets
    .map(
      (t, i) => `
    <div class="target-row" data-index="${i}">
      <select data-field="target">${targets
        .map((c) => `<option${c.name === t.target ? ' selected' : ''}>${esc(c.name)}</option>`)
        .join('')}</select>
      <select data-field="mode">${['minimize', 'maximize', 'range', 'class']
        .map((m) => `<option${m === t.mode ? ' selected' : ''}>${m}</option>`)
        .join('')}</select>
      ${t.mode === 'range' ? `<input data-field="lo" value="${t.lo ?? ''}" placeholder="min">
        <input data-field="hi" value="${t.hi ?? ''}" placeholder="max">` : ''}
      ${t.mode === 'class' ? `<input data-field="label" value="${esc(t.label ?? '')}" placeholder="class">` : ''}
      <button data-action="remove-target" data-index="${i}">remove</button>
    </div>`,
    )
    .join('');
  const assignmentRows = draft.assignments
    .map(
      (a, i) => `
    <div class="assignment-row" data-index="${i}">
      <select data-field="feature">${features
        .map((c) => `<option${c.name === a.feature ? ' selected' : ''}>${esc(c.name)}</option>`)
        .join('')}</select>
      <select data-field="mode">${['search', 'pin', 'transition']
        .map((m) => `<option${m === a.mode ? ' selected' : ''}>${m}</option>`)
        .join('')}</select>
      ${a.mode === 'pin' ? `<input data-field="value" value="${esc(a.value ?? '')}" placeholder="value">` : ''}
      ${a.mode === 'transition'
        ? `<input data-field="from" value="${esc(a.from ?? '')}" placeholder="from">
           <input data-field="to" value="${esc(a.to ?? '?')}" placeholder="to or ?">`
        : ''}
      <button data-action="remove-assignment" data-index="${i}">remove</button>
    </div>`,
    )
    .join('');
  const constraintRows = draft.constraints
    .map(
      (c, i) => `
    <div class="constraint-row" data-index="${i}">
      <code>${esc(JSON.stringify(c))}</code>
      <button data-action="remove-constraint" data-index="${i}">remove</button>
    </div>`,
    )
    .join('');
  const baseline =
    draft.kind === 'recommend'
      ? ''
      : `<div class="baseline-slot">baseline row:
          <b data-field="baseline">${draft.baselineRow ?? 'none selected'}</b></div>`;
  return `
  <form class="query-builder" data-kind="${draft.kind}">
    <div class="kind-tabs">${(['recommend', 'reconfigure', 'what_if'] as const)
      .map((k) => `<button type="button" data-action="set-kind" data-kind="${k}"
        class="${k === draft.kind ? 'active' : ''}">${k}</button>`)
      .join('')}</div>
    ${baseline}
    <fieldset class="targets"><legend>targets</legend>${targetRows}
      <button type="button" data-action="add-target">add target</button></fieldset>
    <fieldset class="assignments"><legend>feature assignments</legend>${assignmentRows}
      <button type="button" data-action="add-assignment">add assignment</button></fieldset>
    <fieldset class="constraints"><legend>constraints</legend>${constraintRows}
      <input data-field="constraint-json" placeholder='{"feature":"...","op":"<=","value":1}'>
      <button type="button" data-action="add-constraint">add constraint</button></fieldset>
    <fieldset class="knobs"><legend>search</legend>
      gamma <input data-field="gamma" value="${draft.gamma}" size="4">
      candidates <input data-field="n" value="${draft.n}" size="6">
      seed <input data-field="seed" value="${draft.seed}" size="6">
      &lambda; valid <input data-field="lambda-valid" value="${draft.lambdas.valid}" size="3">
      prox <input data-field="lambda-prox" value="${draft.lambdas.prox}" size="3">
      cons <input data-field="lambda-cons" value="${draft.lambdas.cons}" size="3">
      div <input data-field="lambda-div" value="${draft.lambdas.div}" size="3">
    </fieldset>
  </form>`;
}
