// Thin client for the engine's HTTP contract.

import { ConstraintJson, DatasetMeta, JobRecord, QueryJson, SampleRow } from './model.js';

export class ApiError extends Error {
  constructor(public status: number, public body: unknown) {
    super(`HTTP ${status}: ${JSON.stringify(body)}`);
  }
}

async function unwrap<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => null);
  if (!resp.ok) throw new ApiError(resp.status, body);
  return body as T;
}

export async function uploadDataset(file: File, hints: string | null): Promise<DatasetMeta> {
  const form = new FormData();
  form.append('file', file);
  if (hints) form.append('hints', hints);
  return unwrap(await fetch('/datasets', { method: 'POST', body: form }));
}

export async function fetchSamples(
  datasetId: string,
  filter: ConstraintJson[] | null,
  limit = 20,
): Promise<{ rows: SampleRow[]; fallback: boolean }> {
  const params = new URLSearchParams({ limit: String(limit) });
  if (filter && filter.length) params.set('filter', JSON.stringify(filter));
  return unwrap(await fetch(`/datasets/${datasetId}/samples?${params}`));
}

export async function submitQuery(datasetId: string, query: QueryJson): Promise<string> {
  const resp = await fetch(`/datasets/${datasetId}/queries`, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify(query),
  });
  const body = await unwrap<{ job_id: string }>(resp);
  return body.job_id;
}

export async function fetchJob(jobId: string): Promise<JobRecord> {
  return unwrap(await fetch(`/queries/${jobId}`));
}

export async function trainDataset(datasetId: string): Promise<unknown> {
  return unwrap(await fetch(`/datasets/${datasetId}/train`, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: '{}',
  }));
}
