// Golden-fixture rendering: every displayed number must come from the
// payload verbatim, badges and evidence must land in the right rows.

import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { describe, expect, it } from 'vitest';

import { nextRunsCsv, renderResults, scoreBar } from '../src/render.js';
import { JobRecord, Schema } from '../src/model.js';

const fixdir = join(__dirname, '..', 'fixtures');
const record: JobRecord = JSON.parse(readFileSync(join(fixdir, 'job-record.json'), 'utf8'));
const schema: Schema = JSON.parse(readFileSync(join(fixdir, 'schema.json'), 'utf8'));

function rowsOf(html: string): string[] {
  return html.split('<tr class="candidate"').slice(1);
}

describe('results view', () => {
  const html = renderResults(record, schema);
  const rows = rowsOf(html);

  it('renders one row per returned candidate', () => {
    expect(rows).toHaveLength(record.result!.top.length);
  });

  it('shows the right badge on each row', () => {
    const labels = record.result!.top.map((c) => c.trust!.label);
    labels.forEach((label, i) => {
      expect(rows[i]).toContain(`badge-${label}">${label}</span>`);
      for (const other of ['trusted', 'caution', 'unsupported']) {
        if (other !== label) expect(rows[i]).not.toContain(`badge-${other}`);
      }
    });
  });

  it('shows support counts and reasons verbatim', () => {
    record.result!.top.forEach((cand, i) => {
      expect(rows[i]).toContain(`${cand.trust!.support_count} supporting samples`);
      expect(rows[i]).toContain(cand.trust!.reason);
    });
  });

  it('embeds ood/uq scores exactly as sent', () => {
    record.result!.top.forEach((cand, i) => {
      expect(rows[i]).toContain(`data-score="ood" data-value="${cand.trust!.ood}"`);
      if (cand.trust!.uq === null) {
        expect(rows[i]).toContain('data-score="uq"');
        expect(rows[i]).not.toContain('data-score="uq" data-value');
      } else {
        expect(rows[i]).toContain(`data-score="uq" data-value="${cand.trust!.uq}"`);
      }
    });
  });

  it('shows the loss decomposition and predictions from the payload', () => {
    record.result!.top.forEach((cand, i) => {
      const t = cand.loss_terms;
      expect(rows[i]).toContain(`valid ${t.valid}`);
      expect(rows[i]).toContain(`total ${cand.total_loss}`);
      for (const v of cand.prediction) expect(rows[i]).toContain(String(v));
    });
  });

  it('offers a next-runs download only on the unsupported row', () => {
    record.result!.top.forEach((cand, i) => {
      if (cand.trust!.label === 'unsupported') {
        expect(rows[i]).toContain('class="next-runs"');
        expect(rows[i]).toContain('download="next-runs-');
        expect(rows[i]).toContain('data:text/csv;base64,');
        const payload = rows[i].match(/base64,([A-Za-z0-9+/=]+)/)![1];
        const csv = Buffer.from(payload, 'base64').toString('utf8');
        expect(csv).toBe(nextRunsCsv(cand.trust!.next_runs!));
        expect(csv.split('\n')[0].split(',').sort()).toEqual(
          Object.keys(cand.trust!.next_runs![0]).sort(),
        );
      } else {
        expect(rows[i]).not.toContain('class="next-runs"');
      }
    });
  });

  it('offers the pivot actions on every row', () => {
    rows.forEach((row, i) => {
      expect(row).toContain(`data-action="use-as-baseline" data-index="${i}"`);
      expect(row).toContain(`data-action="perturb" data-index="${i}"`);
    });
  });

  it('matches the golden snapshot', () => {
    expect(html).toMatchSnapshot();
  });
});

describe('score bars', () => {
  it('renders absent uq as a dash', () => {
    expect(scoreBar('uq', null)).toContain('&ndash;');
  });
  it('scales fill width from the raw score', () => {
    expect(scoreBar('ood', 0.25)).toContain('width:25%');
  });
});

describe('pending and failed jobs', () => {
  it('renders queued state with timings', () => {
    const pending = { ...record, state: 'queued' as const, result: null };
    expect(renderResults(pending, schema)).toContain('job queued');
  });
  it('renders failures with the error text', () => {
    const failed = { ...record, state: 'failed' as const, result: null, error: 'boom <script>' };
    const html = renderResults(failed, schema);
    expect(html).toContain('job failed');
    expect(html).toContain('boom &lt;script&gt;');
  });
});
