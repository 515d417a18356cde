// Types mirroring the engine's HTTP/JSON contract (docs/api/*.schema.json).

export type ColumnKind = 'numeric' | 'categorical';
export type ColumnRole = 'user_feature' | 'system_feature' | 'target';
export type QueryKind = 'recommend' | 'reconfigure' | 'what_if';
export type TrustLabel = 'trusted' | 'caution' | 'unsupported';
export type JobState = 'queued' | 'running' | 'done' | 'failed' | 'target_unmet';

export interface ColumnSpec {
  name: string;
  kind: ColumnKind;
  role: ColumnRole;
  target_task?: 'regression' | 'classification';
  mutable?: boolean;
  categories?: string[];
  min?: number;
  max?: number;
}

export interface Schema {
  columns: ColumnSpec[];
}

export interface DatasetMeta {
  dataset_id: string;
  fingerprint: string;
  schema: Schema;
  row_counts: { train: number; validation: number };
}

export type ObjectiveJson =
  | 'minimize'
  | 'maximize'
  | { range: [number, number] }
  | { class: string };

export type AssignmentJson =
  | '?'
  | { value: number | string }
  | { from: number | string; to: number | string | '?' };

export interface ConstraintJson {
  feature: string;
  op: '<=' | '>=' | '==';
  value?: number | string;
  coef?: number;
  rhs_feature?: string;
  offset?: number;
  penalty_scale?: number;
}

export interface QueryJson {
  kind: QueryKind;
  targets: { target: string; objective: ObjectiveJson }[];
  assignments: Record<string, AssignmentJson>;
  constraints: ConstraintJson[];
  baseline_row?: number | null;
  gamma: number;
  n: number;
  lambdas: { valid: number; prox: number; cons: number; div: number };
  seed: number;
}

export interface TrustJson {
  label: TrustLabel;
  ood: number;
  uq: number | null;
  support: [number, number][];
  support_count: number;
  reason: string;
  next_runs: Record<string, number | string>[] | null;
}

export interface CandidateJson {
  config: Record<string, number | string>;
  prediction: number[];
  loss_terms: { valid: number; prox: number; cons: number; div: number };
  total_loss: number;
  trust: TrustJson | null;
}

export interface ResultJson {
  kind: QueryKind;
  target_unmet: boolean;
  baseline: Record<string, number | string>;
  baseline_row: number | null;
  baseline_prediction: number[];
  resolved_targets: { target: string; objective: ObjectiveJson }[];
  top: CandidateJson[];
  candidate_count: number;
  deltas?: number[] | null;
  seed: number;
}

export interface JobRecord {
  job_id: string;
  dataset_id: string;
  state: JobState;
  query: QueryJson;
  result: ResultJson | null;
  error: string | null;
  timings: Record<string, number>;
}

export interface SampleRow {
  row_id: number;
  values: Record<string, number | string>;
}

export function featureColumns(schema: Schema): ColumnSpec[] {
  return schema.columns.filter((c) => c.role !== 'target');
}

export function targetColumns(schema: Schema): ColumnSpec[] {
  return schema.columns.filter((c) => c.role === 'target');
}
