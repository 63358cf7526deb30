// Minimal dependency-free SVG line chart. Pure string generation so the
// mapping from data to plotted coordinates is unit-testable.

import type { StudyView, TrialSeries } from './series.js';

export interface ChartOptions {
  width: number;
  height: number;
  margin: number;
}

const DEFAULTS: ChartOptions = { width: 720, height: 320, margin: 40 };

interface Extent {
  x0: number;
  x1: number;
  y0: number;
  y1: number;
}

export function dataExtent(view: StudyView): Extent | null {
  let x0 = Infinity, x1 = -Infinity, y0 = Infinity, y1 = -Infinity;
  for (const s of view.series) {
    for (const [x, y] of s.points) {
      if (x < x0) x0 = x;
      if (x > x1) x1 = x;
      if (y < y0) y0 = y;
      if (y > y1) y1 = y;
    }
  }
  if (x0 === Infinity) return null;
  if (x0 === x1) x1 = x0 + 1;
  if (y0 === y1) y1 = y0 + 1;
  return { x0, x1, y0, y1 };
}

export function scalePoint(
  [x, y]: [number, number],
  extent: Extent,
  opts: ChartOptions,
): [number, number] {
  const { width, height, margin } = opts;
  const px = margin + ((x - extent.x0) / (extent.x1 - extent.x0)) * (width - 2 * margin);
  const py = height - margin -
    ((y - extent.y0) / (extent.y1 - extent.y0)) * (height - 2 * margin);
  return [round2(px), round2(py)];
}

function round2(v: number): number {
  return Math.round(v * 100) / 100;
}

export function seriesPath(s: TrialSeries, extent: Extent, opts: ChartOptions): string {
  return s.points
    .map((p, i) => {
      const [px, py] = scalePoint(p, extent, opts);
      return `${i === 0 ? 'M' : 'L'}${px},${py}`;
    })
    .join(' ');
}

export function renderChart(view: StudyView, options?: Partial<ChartOptions>): string {
  const opts = { ...DEFAULTS, ...options };
  const extent = dataExtent(view);
  const parts: string[] = [
    `<svg viewBox="0 0 ${opts.width} ${opts.height}" xmlns="http://www.w3.org/2000/svg">`,
  ];
  if (extent) {
    for (const s of view.series) {
      if (!s.points.length) continue;
      parts.push(
        `<path d="${seriesPath(s, extent, opts)}" fill="none" ` +
          `stroke="${s.color}" stroke-width="1.5" data-trial="${s.trialId}"/>`,
      );
      if (s.endMarker) {
        const [px, py] = scalePoint(s.endMarker, extent, opts);
        parts.push(
          `<circle cx="${px}" cy="${py}" r="4" fill="${s.color}" ` +
            `data-pruned="${s.trialId}"/>`,
        );
      }
    }
    if (view.bestSeries !== null) {
      const s = view.series[view.bestSeries];
      if (s.points.length) {
        const [px, py] = scalePoint(s.points[s.points.length - 1], extent, opts);
        parts.push(
          `<circle cx="${px}" cy="${py}" r="5" fill="none" stroke="#000" ` +
            `stroke-width="2" data-best="${s.trialId}"/>`,
        );
      }
    }
  }
  parts.push('</svg>');
  return parts.join('');
}
