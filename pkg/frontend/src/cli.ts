#!/usr/bin/env node
/**
 * Render quantile-band figures from a benchmark quantile CSV.
 *
 * Exit codes: 0 success, 1 input/schema error, 2 runtime error.
 */

import { readFileSync } from 'fs';
import yargs from 'yargs';

import { buildFigure } from './figure';
import { Format, renderToFile } from './render';
import { METRICS, SchemaError, parseQuantileCsv } from './schema';

export interface CliArgs {
  csv: string;
  out: string;
  format: Format;
  linearY: boolean;
}

export function parseArgs(argv: string[]): CliArgs {
  const parsed = yargs(argv)
    .option('csv', { type: 'string', demandOption: true, describe: 'quantile CSV path' })
    .option('out', { type: 'string', demandOption: true, describe: 'output figure path' })
    .option('format', {
      type: 'string',
      choices: ['svg', 'png'] as const,
      default: 'svg' as const,
      describe: 'output format',
    })
    .option('linear-y', { type: 'boolean', default: false, describe: 'linear instead of log y axis' })
    .strict()
    .exitProcess(false)
    .parseSync();
  return {
    csv: parsed.csv,
    out: parsed.out,
    format: parsed.format as Format,
    linearY: parsed['linear-y'],
  };
}

export function main(argv: string[]): number {
  let args: CliArgs;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`argument error: ${(err as Error).message}`);
    return 1;
  }

  let text: string;
  try {
    text = readFileSync(args.csv, 'utf-8');
  } catch (err) {
    console.error(`cannot read CSV: ${(err as Error).message}`);
    return 1;
  }

  let rows;
  try {
    rows = parseQuantileCsv(text);
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
      return 1;
    }
    throw err;
  }

  try {
    const svg = buildFigure(rows, { linearY: args.linearY });
    renderToFile(svg, args.out, args.format);
    const metrics = METRICS.filter((m) => rows.some((r) => r.metric === m));
    console.log(`wrote ${args.format} figure with ${metrics.length} panel(s) ` +
      `from ${rows.length} rows to ${args.out}`);
    return 0;
  } catch (err) {
    console.error(`render error: ${(err as Error).message}`);
    return 2;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
