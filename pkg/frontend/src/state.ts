// Session state: the iterative decision loop lives here. Pure transitions so
// tests can drive the loop without a DOM.

import { QueryDraft, emptyDraft, reconfigureFrom, whatIfFrom } from './draft.js';
import { CandidateJson, JobRecord, Schema } from './model.js';

export interface SessionState {
  datasetId: string | null;
  schema: Schema | null;
  draft: QueryDraft;
  selectedBaseline: number | null;
  history: JobRecord[];
}

export function initialState(): SessionState {
  return {
    datasetId: null,
    schema: null,
    draft: emptyDraft(),
    selectedBaseline: null,
    history: [],
  };
}

export function withDataset(state: SessionState, datasetId: string, schema: Schema): SessionState {
  return { ...state, datasetId, schema, draft: emptyDraft(), selectedBaseline: null, history: [] };
}

export function withBaseline(state: SessionState, rowId: number): SessionState {
  const draft = { ...state.draft, baselineRow: state.draft.kind === 'recommend' ? null : rowId };
  return { ...state, selectedBaseline: rowId, draft };
}

export function withRecord(state: SessionState, record: JobRecord): SessionState {
  const history = state.history.filter((r) => r.job_id !== record.job_id);
  history.push(record);
  return { ...state, history };
}

export function pivotToReconfigure(state: SessionState, candidate: CandidateJson): SessionState {
  const draft = reconfigureFrom(candidate, state.selectedBaseline, state.schema!, state.draft);
  return { ...state, draft, selectedBaseline: draft.baselineRow };
}

export function pivotToWhatIf(state: SessionState, candidate: CandidateJson): SessionState {
  const draft = whatIfFrom(candidate, state.selectedBaseline, state.schema!, state.draft);
  return { ...state, draft, selectedBaseline: draft.baselineRow };
}
