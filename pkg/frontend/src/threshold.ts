// Pure threshold logic shared by the slider, the card grid, and the
// charts. The server is the source of truth for logged decisions; these
// functions only recolor what is already on screen, so slider moves cost
// no round-trips.

import type { CandidateCard, StatsPayload } from './api.js';

export const DELTA_MIN = -0.5;
export const DELTA_MAX = 0.5;

export function clampDelta(delta: number): number {
  return Math.min(DELTA_MAX, Math.max(DELTA_MIN, delta));
}

/** Clone flag at an adjusted operating point: score >= -(tau + delta). */
export function isClone(score: number, tau: number, delta: number): boolean {
  return score >= -(tau + clampDelta(delta));
}

export function flagCards(cards: CandidateCard[], tau: number, delta: number): boolean[] {
  return cards.map((card) => isClone(card.score, tau, delta));
}

/**
 * Flags for each card across a delta sweep; row i is the sweep for
 * cards[i]. Raising delta can only turn flags on, never off, so every
 * row is monotone false -> true.
 */
export function sweepFlags(cards: CandidateCard[], tau: number, deltas: number[]): boolean[][] {
  return cards.map((card) => deltas.map((delta) => isClone(card.score, tau, delta)));
}

/** True when a flag sequence never reverts from clone back to non-clone. */
export function isMonotoneSweep(flags: boolean[]): boolean {
  for (let i = 1; i < flags.length; i++) {
    if (flags[i - 1] && !flags[i]) return false;
  }
  return true;
}

/** The calibration row whose delta grid point is nearest to the slider. */
export function nearestCalibrationRow(
  stats: Pick<StatsPayload, 'calibration'>,
  delta: number,
): { delta: number; precision: number; recall: number; f1: number } {
  const target = clampDelta(delta);
  let best = stats.calibration[0];
  for (const row of stats.calibration) {
    if (Math.abs(row[0] - target) < Math.abs(best[0] - target)) best = row;
  }
  return { delta: best[0], precision: best[1], recall: best[2], f1: best[3] };
}

/** Index of the sweep row with the highest F1 (first on ties). */
export function argmaxF1(calibration: [number, number, number, number][]): number {
  let best = 0;
  for (let i = 1; i < calibration.length; i++) {
    if (calibration[i][3] > calibration[best][3]) best = i;
  }
  return best;
}
