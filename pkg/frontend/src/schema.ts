/**
 * Quantile CSV schema: parsing and validation.
 *
 * The expected file is exactly what the benchmark CLI emits:
 * header `method,n_train,metric,q50,q90,q100`, one row per
 * (method, training size, metric) with nondecreasing quantile levels.
 */

import Papa from 'papaparse';
import { z } from 'zod';

export const QUANTILE_COLUMNS = ['method', 'n_train', 'metric', 'q50', 'q90', 'q100'] as const;

export const METRICS = ['J_hat_train', 'J_test', 'e_hat_train', 'e_test'] as const;
export type Metric = (typeof METRICS)[number];

export class SchemaError extends Error {}

const finiteNumber = z
  .string()
  .transform((s, ctx) => {
    const v = Number(s);
    if (s.trim() === '' || !Number.isFinite(v)) {
      ctx.addIssue({ code: z.ZodIssueCode.custom, message: `not a finite number: '${s}'` });
      return z.NEVER;
    }
    return v;
  });

const rowSchema = z
  .object({
    method: z.string().min(1),
    n_train: z.string().transform((s, ctx) => {
      const v = Number(s);
      if (!Number.isInteger(v) || v < 1) {
        ctx.addIssue({ code: z.ZodIssueCode.custom, message: `invalid n_train: '${s}'` });
        return z.NEVER;
      }
      return v;
    }),
    metric: z.enum(METRICS),
    q50: finiteNumber,
    q90: finiteNumber,
    q100: finiteNumber,
  })
  .refine((r) => r.q50 <= r.q90 && r.q90 <= r.q100, {
    message: 'quantiles must be nondecreasing in level (q50 <= q90 <= q100)',
  });

export interface QuantileRow {
  method: string;
  n_train: number;
  metric: Metric;
  q50: number;
  q90: number;
  q100: number;
}

/** Parse and validate a quantile CSV; throws SchemaError on any mismatch. */
export function parseQuantileCsv(text: string): QuantileRow[] {
  const parsed = Papa.parse<string[]>(text.trim(), { skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    throw new SchemaError(`CSV parse error: ${parsed.errors[0].message}`);
  }
  const rows = parsed.data;
  if (rows.length === 0) {
    throw new SchemaError('empty CSV');
  }
  const header = rows[0];
  if (header.length !== QUANTILE_COLUMNS.length || header.some((h, i) => h !== QUANTILE_COLUMNS[i])) {
    throw new SchemaError(
      `malformed header: expected '${QUANTILE_COLUMNS.join(',')}', got '${header.join(',')}'`,
    );
  }
  if (rows.length === 1) {
    throw new SchemaError('CSV has a header but no data rows');
  }
  const out: QuantileRow[] = [];
  for (let i = 1; i < rows.length; i++) {
    const cells = rows[i];
    if (cells.length !== QUANTILE_COLUMNS.length) {
      throw new SchemaError(`row ${i + 1}: expected ${QUANTILE_COLUMNS.length} fields, got ${cells.length}`);
    }
    const candidate = Object.fromEntries(QUANTILE_COLUMNS.map((c, k) => [c, cells[k]]));
    const result = rowSchema.safeParse(candidate);
    if (!result.success) {
      const issue = result.error.issues[0];
      throw new SchemaError(`row ${i + 1}: ${issue.path.join('.')} ${issue.message}`.trim());
    }
    out.push(result.data as QuantileRow);
  }
  return out;
}
