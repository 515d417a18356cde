// Query draft state: always either serializes to a valid Query JSON or
// reports the violated rule for inline display. Mirrors the engine's own
// validation so a submit never bounces for a reason the form didn't show.

import {
  AssignmentJson,
  CandidateJson,
  ConstraintJson,
  ObjectiveJson,
  QueryJson,
  QueryKind,
  Schema,
  featureColumns,
  targetColumns,
} from './model.js';

export interface TargetDraft {
  target: string;
  mode: 'minimize' | 'maximize' | 'range' | 'class';
  lo?: number;
  hi?: number;
  label?: string;
}

export interface AssignmentDraft {
  feature: string;
  mode: 'search' | 'pin' | 'transition';
  value?: number | string;
  from?: number | string;
  to?: number | string | '?';
}

export interface QueryDraft {
  kind: QueryKind;
  targets: TargetDraft[];
  assignments: AssignmentDraft[];
  constraints: ConstraintJson[];
  baselineRow: number | null;
  gamma: number;
  n: number;
  lambdas: { valid: number; prox: number; cons: number; div: number };
  seed: number;
}

export function emptyDraft(kind: QueryKind = 'recommend'): QueryDraft {
  return {
    kind,
    targets: [],
    assignments: [],
    constraints: [],
    baselineRow: null,
    gamma: 5,
    n: 1000,
    lambdas: { valid: 1, prox: 1, cons: 1, div: 1 },
    seed: 0,
  };
}

export interface DraftProblem {
  rule: string;
  message: string;
}

export function validateDraft(draft: QueryDraft, schema: Schema | null): DraftProblem | null {
  if (draft.kind === 'recommend' && draft.baselineRow !== null) {
    return { rule: 'baseline_row', message: 'recommend queries must not carry a baseline row' };
  }
  if (draft.kind !== 'recommend' && draft.baselineRow === null) {
    return { rule: 'baseline_row', message: `${draft.kind} needs a baseline row; pick one below` };
  }
  if (draft.kind === 'what_if') {
    const concrete = draft.assignments.some(
      (a) => a.mode === 'transition' && a.to !== undefined && a.to !== '?',
    );
    if (!concrete) {
      return { rule: 'transition', message: 'what-if needs at least one concrete transition' };
    }
  } else if (draft.targets.length === 0) {
    return { rule: 'targets', message: 'add at least one target objective' };
  }
  for (const t of draft.targets) {
    if (t.mode === 'range' && !(Number.isFinite(t.lo) && Number.isFinite(t.hi))) {
      return { rule: 'objective', message: `target ${t.target}: range needs both bounds` };
    }
    if (t.mode === 'class' && !t.label) {
      return { rule: 'objective', message: `target ${t.target}: pick a class` };
    }
  }
  if (draft.gamma < 1) {
    return { rule: 'gamma', message: 'gamma must be at least 1' };
  }
  if (draft.n < 1) {
    return { rule: 'num_candidates', message: 'candidate count must be at least 1' };
  }
  for (const key of ['valid', 'prox', 'cons', 'div'] as const) {
    if (draft.lambdas[key] < 0) {
      return { rule: 'weights', message: `lambda ${key} must be non-negative` };
    }
  }
  if (schema) {
    const targets = new Set(targetColumns(schema).map((c) => c.name));
    const features = new Set(featureColumns(schema).map((c) => c.name));
    for (const t of draft.targets) {
      if (!targets.has(t.target)) {
        return { rule: 'targets', message: `unknown target column ${t.target}` };
      }
    }
    for (const a of draft.assignments) {
      if (!features.has(a.feature)) {
        return { rule: 'assignments', message: `unknown feature ${a.feature}` };
      }
    }
  }
  return null;
}

export function draftToQuery(draft: QueryDraft): QueryJson {
  const assignments: Record<string, AssignmentJson> = {};
  for (const a of draft.assignments) {
    if (a.mode === 'search') {
      assignments[a.feature] = '?';
    } else if (a.mode === 'pin') {
      assignments[a.feature] = { value: a.value! };
    } else {
      assignments[a.feature] = { from: a.from!, to: a.to ?? '?' };
    }
  }
  const targets = draft.targets.map((t) => ({ target: t.target, objective: objectiveJson(t) }));
  const query: QueryJson = {
    kind: draft.kind,
    targets,
    assignments,
    constraints: draft.constraints,
    gamma: draft.gamma,
    n: draft.n,
    lambdas: { ...draft.lambdas },
    seed: draft.seed,
  };
  if (draft.kind !== 'recommend') {
    query.baseline_row = draft.baselineRow;
  }
  return query;
}

function objectiveJson(t: TargetDraft): ObjectiveJson {
  if (t.mode === 'range') return { range: [t.lo!, t.hi!] };
  if (t.mode === 'class') return { class: t.label! };
  return t.mode;
}

export function queryToDraft(query: QueryJson): QueryDraft {
  const targets: TargetDraft[] = query.targets.map((t) => {
    const o = t.objective;
    if (o === 'minimize' || o === 'maximize') return { target: t.target, mode: o };
    if ('range' in o) return { target: t.target, mode: 'range', lo: o.range[0], hi: o.range[1] };
    return { target: t.target, mode: 'class', label: o.class };
  });
  const assignments: AssignmentDraft[] = Object.entries(query.assignments).map(([feature, a]) => {
    if (a === '?') return { feature, mode: 'search' };
    if (typeof a === 'object' && 'from' in a) {
      return { feature, mode: 'transition', from: a.from, to: a.to };
    }
    return { feature, mode: 'pin', value: (a as { value: number | string }).value };
  });
  return {
    kind: query.kind,
    targets,
    assignments,
    constraints: query.constraints ?? [],
    baselineRow: query.baseline_row ?? null,
    gamma: query.gamma,
    n: query.n,
    lambdas: { ...query.lambdas },
    seed: query.seed,
  };
}

/** "use as baseline": pivot a returned candidate into a reconfigure draft.

The engine's baseline must be an observed row, so the candidate's nearest
supporting training row anchors the draft (falling back to the previous
baseline when the candidate has no support evidence). */
export function reconfigureFrom(candidate: CandidateJson, fallbackRow: number | null,
                                schema: Schema, previous: QueryDraft): QueryDraft {
  const draft = emptyDraft('reconfigure');
  draft.baselineRow = candidate.trust?.support?.[0]?.[0] ?? fallbackRow;
  draft.targets = previous.targets.map((t) => ({ ...t }));
  draft.constraints = previous.constraints.map((c) => ({ ...c }));
  draft.seed = previous.seed;
  draft.assignments = featureColumns(schema)
    .filter((c) => c.mutable !== false && c.role === 'user_feature')
    .map((c) => ({
      feature: c.name,
      mode: 'transition' as const,
      from: candidate.config[c.name],
      to: '?' as const,
    }));
  return draft;
}

/** "perturb": pivot a candidate into a what-if draft with prefilled old values. */
export function whatIfFrom(candidate: CandidateJson, fallbackRow: number | null,
                           schema: Schema, previous: QueryDraft): QueryDraft {
  const draft = emptyDraft('what_if');
  draft.baselineRow = candidate.trust?.support?.[0]?.[0] ?? fallbackRow;
  draft.constraints = previous.constraints.map((c) => ({ ...c }));
  draft.seed = previous.seed;
  draft.assignments = featureColumns(schema)
    .filter((c) => c.role === 'user_feature')
    .map((c) => ({
      feature: c.name,
      mode: 'transition' as const,
      from: candidate.config[c.name],
      to: candidate.config[c.name],
    }));
  return draft;
}
