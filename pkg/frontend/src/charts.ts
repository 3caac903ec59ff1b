// Inline-SVG chart builders. They return markup strings so they can be
// unit-tested without a DOM and re-rendered from cached stats data while
// the slider moves.

import type { StatsPayload } from './api.js';
import { argmaxF1 } from './threshold.js';

const W = 420;
const H = 200;
const PAD = 34;

function esc(value: number): string {
  return Number.isFinite(value) ? value.toFixed(2) : '0';
}

export function histogramSvg(stats: StatsPayload, delta: number): string {
  const { edges, pos_counts, corpus_counts } = stats.histogram;
  const maxCount = Math.max(1, ...pos_counts, ...corpus_counts);
  const xMax = edges[edges.length - 1] || 1;
  const sx = (v: number) => PAD + (v / xMax) * (W - 2 * PAD);
  const sy = (c: number) => H - PAD - (c / maxCount) * (H - 2 * PAD);

  const bars: string[] = [];
  for (let i = 0; i < pos_counts.length; i++) {
    const x0 = sx(edges[i]);
    const width = Math.max(sx(edges[i + 1]) - x0, 1);
    if (corpus_counts[i] > 0) {
      bars.push(
        `<rect x="${esc(x0)}" y="${esc(sy(corpus_counts[i]))}" width="${esc(width)}" ` +
          `height="${esc(H - PAD - sy(corpus_counts[i]))}" class="bar-corpus"/>`,
      );
    }
    if (pos_counts[i] > 0) {
      bars.push(
        `<rect x="${esc(x0)}" y="${esc(sy(pos_counts[i]))}" width="${esc(width)}" ` +
          `height="${esc(H - PAD - sy(pos_counts[i]))}" class="bar-pos"/>`,
      );
    }
  }
  const cut = stats.tau + delta;
  const marker =
    `<line x1="${esc(sx(cut))}" y1="${PAD}" x2="${esc(sx(cut))}" y2="${H - PAD}" class="tau-marker"/>` +
    `<text x="${esc(sx(cut) + 4)}" y="${PAD + 10}" class="tau-label">cut ${cut.toFixed(2)}</text>`;
  return (
    `<svg viewBox="0 0 ${W} ${H}" xmlns="http://www.w3.org/2000/svg" class="chart">` +
    `<line x1="${PAD}" y1="${H - PAD}" x2="${W - PAD}" y2="${H - PAD}" class="axis"/>` +
    bars.join('') +
    marker +
    `<text x="${W / 2}" y="${H - 8}" class="axis-label">latent norm</text>` +
    `</svg>`
  );
}

export function calibrationSvg(stats: StatsPayload, delta: number): string {
  const rows = stats.calibration;
  const sx = (d: number) => PAD + ((d + 0.5) / 1.0) * (W - 2 * PAD);
  const sy = (v: number) => H - PAD - v * (H - 2 * PAD);

  const path = (idx: 1 | 2 | 3, cls: string) =>
    `<polyline class="${cls}" fill="none" points="` +
    rows.map((r) => `${esc(sx(r[0]))},${esc(sy(r[idx]))}`).join(' ') +
    `"/>`;

  const best = rows[argmaxF1(rows)];
  const marker =
    `<line x1="${esc(sx(delta))}" y1="${PAD}" x2="${esc(sx(delta))}" y2="${H - PAD}" class="tau-marker"/>` +
    `<circle cx="${esc(sx(best[0]))}" cy="${esc(sy(best[3]))}" r="4" class="f1-max"/>` +
    `<text x="${esc(sx(best[0]) + 6)}" y="${esc(sy(best[3]) - 6)}" class="tau-label">` +
    `best F1 ${best[3].toFixed(3)} @ ${best[0].toFixed(2)}</text>`;

  return (
    `<svg viewBox="0 0 ${W} ${H}" xmlns="http://www.w3.org/2000/svg" class="chart">` +
    `<line x1="${PAD}" y1="${H - PAD}" x2="${W - PAD}" y2="${H - PAD}" class="axis"/>` +
    `<line x1="${PAD}" y1="${PAD}" x2="${PAD}" y2="${H - PAD}" class="axis"/>` +
    path(1, 'line-precision') +
    path(2, 'line-recall') +
    path(3, 'line-f1') +
    marker +
    `<text x="${W / 2}" y="${H - 8}" class="axis-label">threshold offset</text>` +
    `</svg>`
  );
}
