/** File output: SVG as-is, PNG through resvg rasterization. */

import { writeFileSync } from 'fs';

export type Format = 'svg' | 'png';

export function renderToFile(svg: string, outPath: string, format: Format): void {
  if (format === 'svg') {
    writeFileSync(outPath, svg, 'utf-8');
    return;
  }
  // required lazily so SVG-only use never touches the native binding
  const { Resvg } = require('@resvg/resvg-js') as typeof import('@resvg/resvg-js');
  const resvg = new Resvg(svg, { font: { loadSystemFonts: true } });
  writeFileSync(outPath, resvg.render().asPng());
}
