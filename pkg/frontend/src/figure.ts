/**
 * Multi-panel quantile-band figure as an SVG string.
 *
 * One panel per metric, one color per method, one line style per
 * quantile level: solid for the median, dashed for the 90% level,
 * dotted for the maximum.  The y axis is logarithmic unless linearY
 * is requested; the x axis is the training-set size.
 */

import { METRICS, Metric, QuantileRow } from './schema';

export interface FigureOptions {
  linearY?: boolean;
  width?: number;
  panelHeight?: number;
}

export const METHOD_COLORS = ['#1f77b4', '#ff7f0e', '#2ca02c', '#d62728', '#9467bd'];

export const QUANTILE_STYLES: { key: 'q50' | 'q90' | 'q100'; label: string; dash: string }[] = [
  { key: 'q50', label: '50%', dash: '' },
  { key: 'q90', label: '90%', dash: '7 4' },
  { key: 'q100', label: '100%', dash: '1.5 3.5' },
];

const FONT = 'DejaVu Sans, Helvetica, Arial, sans-serif';

interface Scale {
  (v: number): number;
  ticks: number[];
  kind: 'linear' | 'log';
}

function linearScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  if (hi === lo) {
    lo -= 1;
    hi += 1;
  }
  const f = ((v: number) => outLo + ((v - lo) / (hi - lo)) * (outHi - outLo)) as Scale;
  f.kind = 'linear';
  f.ticks = niceTicks(lo, hi, 5);
  return f;
}

function logScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  const llo = Math.log10(lo);
  const lhi = Math.log10(hi);
  const span = lhi === llo ? 1 : lhi - llo;
  const f = ((v: number) => outLo + ((Math.log10(v) - llo) / span) * (outHi - outLo)) as Scale;
  f.kind = 'log';
  const ticks: number[] = [];
  const step = Math.max(1, Math.ceil((Math.ceil(lhi) - Math.floor(llo)) / 8));
  for (let e = Math.ceil(llo); e <= Math.floor(lhi + 1e-9); e += step) {
    ticks.push(Math.pow(10, e));
  }
  f.ticks = ticks.length > 0 ? ticks : [Math.pow(10, Math.round(llo))];
  return f;
}

/** Round-ish tick positions with a 1/2/5 stepping. */
export function niceTicks(lo: number, hi: number, target: number): number[] {
  const span = hi - lo;
  if (span <= 0) return [lo];
  const raw = span / target;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const norm = raw / mag;
  const step = (norm > 5 ? 10 : norm > 2 ? 5 : norm > 1 ? 2 : 1) * mag;
  const ticks: number[] = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-12 * span; t += step) {
    ticks.push(Math.abs(t) < 1e-12 * span ? 0 : t);
  }
  return ticks;
}

function formatTick(v: number, kind: 'linear' | 'log'): string {
  if (kind === 'log') {
    const e = Math.round(Math.log10(v));
    return `1e${e}`;
  }
  if (Number.isInteger(v)) return String(v);
  return v.toPrecision(3);
}

function escapeXml(s: string): string {
  return s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;').replace(/"/g, '&quot;');
}

/**
 * Compose the figure.  Only metrics present in the rows get a panel,
 * in the canonical metric order; methods are ordered by first
 * appearance in the file.
 */
export function buildFigure(rows: QuantileRow[], options: FigureOptions = {}): string {
  if (rows.length === 0) {
    throw new Error('no rows to plot');
  }
  const metrics = METRICS.filter((m) => rows.some((r) => r.metric === m));
  const methods: string[] = [];
  for (const r of rows) {
    if (!methods.includes(r.method)) methods.push(r.method);
  }

  const panelW = options.width ?? 420;
  const panelH = options.panelHeight ?? 300;
  const margin = { left: 72, right: 16, top: 34, bottom: 46 };
  const cols = Math.min(2, metrics.length);
  const rowsOfPanels = Math.ceil(metrics.length / cols);
  const legendH = 28 + 18 * Math.ceil(methods.length / 2);
  const figW = cols * panelW + 20;
  const figH = rowsOfPanels * panelH + legendH + 16;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${figW}" height="${figH}" ` +
      `viewBox="0 0 ${figW} ${figH}" font-family="${FONT}">`,
  );
  parts.push(`<rect width="${figW}" height="${figH}" fill="white"/>`);

  metrics.forEach((metric, idx) => {
    const px = 10 + (idx % cols) * panelW;
    const py = legendH + Math.floor(idx / cols) * panelH;
    parts.push(renderPanel(rows, metric, methods, px, py, panelW, panelH, margin, options));
  });

  parts.push(renderLegend(methods, figW));
  parts.push('</svg>');
  return parts.join('\n');
}

function renderPanel(
  rows: QuantileRow[],
  metric: Metric,
  methods: string[],
  px: number,
  py: number,
  panelW: number,
  panelH: number,
  margin: { left: number; right: number; top: number; bottom: number },
  options: FigureOptions,
): string {
  const data = rows.filter((r) => r.metric === metric);
  const innerW = panelW - margin.left - margin.right;
  const innerH = panelH - margin.top - margin.bottom;

  const xs = data.map((r) => r.n_train);
  const xScale = linearScale(Math.min(...xs), Math.max(...xs), 0, innerW);

  const values = data.flatMap((r) => [r.q50, r.q90, r.q100]);
  const positives = values.filter((v) => v > 0);
  let yScale: Scale;
  let clampFloor = NaN;
  if (!options.linearY && positives.length > 0) {
    // a log axis cannot place zeros: clamp nonpositive values just
    // below the smallest positive one
    const lo = Math.min(...positives);
    const hi = Math.max(...positives);
    clampFloor = lo * 0.5;
    yScale = logScale(Math.min(lo, clampFloor), Math.max(hi, lo * 2), innerH, 0);
  } else {
    yScale = linearScale(Math.min(...values), Math.max(...values), innerH, 0);
  }
  const yValue = (v: number) => (yScale.kind === 'log' && v <= 0 ? clampFloor : v);

  const parts: string[] = [];
  parts.push(`<g class="panel" data-metric="${metric}" data-yaxis="${yScale.kind}" ` +
    `transform="translate(${px + margin.left},${py + margin.top})">`);
  parts.push(`<rect x="0" y="0" width="${innerW}" height="${innerH}" fill="none" stroke="#444"/>`);
  parts.push(`<text x="${innerW / 2}" y="-10" text-anchor="middle" font-size="14" font-weight="bold">` +
    `${escapeXml(metric)}</text>`);

  for (const t of xScale.ticks) {
    const x = xScale(t);
    if (x < -1e-6 || x > innerW + 1e-6) continue;
    parts.push(`<line x1="${x.toFixed(2)}" y1="${innerH}" x2="${x.toFixed(2)}" y2="${innerH + 5}" stroke="#444"/>`);
    parts.push(`<text x="${x.toFixed(2)}" y="${innerH + 18}" text-anchor="middle" font-size="11">` +
      `${formatTick(t, 'linear')}</text>`);
  }
  parts.push(`<text x="${innerW / 2}" y="${innerH + 36}" text-anchor="middle" font-size="12">training size</text>`);

  for (const t of yScale.ticks) {
    const y = yScale(t);
    if (y < -1e-6 || y > innerH + 1e-6) continue;
    parts.push(`<line x1="-5" y1="${y.toFixed(2)}" x2="0" y2="${y.toFixed(2)}" stroke="#444"/>`);
    parts.push(`<line x1="0" y1="${y.toFixed(2)}" x2="${innerW}" y2="${y.toFixed(2)}" stroke="#ddd" stroke-width="0.5"/>`);
    parts.push(`<text x="-8" y="${(y + 4).toFixed(2)}" text-anchor="end" font-size="11">` +
      `${formatTick(t, yScale.kind)}</text>`);
  }

  methods.forEach((method, mi) => {
    const color = METHOD_COLORS[mi % METHOD_COLORS.length];
    const series = data
      .filter((r) => r.method === method)
      .sort((a, b) => a.n_train - b.n_train);
    if (series.length === 0) return;
    for (const q of QUANTILE_STYLES) {
      const pts = series.map((r) => `${xScale(r.n_train).toFixed(2)},${yScale(yValue(r[q.key])).toFixed(2)}`);
      const dash = q.dash ? ` stroke-dasharray="${q.dash}"` : '';
      parts.push(`<polyline class="series" data-method="${escapeXml(method)}" data-quantile="${q.label}" ` +
        `points="${pts.join(' ')}" fill="none" stroke="${color}" stroke-width="1.6"${dash} stroke-linecap="round"/>`);
      for (const r of series) {
        parts.push(`<circle class="marker" cx="${xScale(r.n_train).toFixed(2)}" ` +
          `cy="${yScale(yValue(r[q.key])).toFixed(2)}" r="2.4" fill="${color}"/>`);
      }
    }
  });

  parts.push('</g>');
  return parts.join('\n');
}

function renderLegend(methods: string[], figW: number): string {
  const parts: string[] = [`<g class="legend" transform="translate(14,16)">`];
  methods.forEach((method, mi) => {
    const color = METHOD_COLORS[mi % METHOD_COLORS.length];
    const x = (mi % 2) * 180;
    const y = Math.floor(mi / 2) * 18;
    parts.push(`<line x1="${x}" y1="${y}" x2="${x + 26}" y2="${y}" stroke="${color}" stroke-width="3"/>`);
    parts.push(`<text x="${x + 32}" y="${y + 4}" font-size="12">${escapeXml(method)}</text>`);
  });
  const qx = figW - 320;
  QUANTILE_STYLES.forEach((q, qi) => {
    const x = qx + qi * 100;
    const dash = q.dash ? ` stroke-dasharray="${q.dash}"` : '';
    parts.push(`<line x1="${x}" y1="0" x2="${x + 26}" y2="0" stroke="#444" stroke-width="1.6"${dash}/>`);
    parts.push(`<text x="${x + 32}" y="4" font-size="12">${q.label}</text>`);
  });
  parts.push('</g>');
  return parts.join('\n');
}
