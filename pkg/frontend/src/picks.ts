// Candidate-pick state. The server sends candidates already permuted for this
// rater and keeps the permutation; the client displays them in the given
// order and submits the true candidate id of whichever card was chosen.

import { PickCandidate } from './types.js';

export interface PickState {
  chosen: string | null;
}

export function choose(candidates: PickCandidate[], displayIndex: number): string {
  const candidate = candidates[displayIndex];
  if (candidate === undefined) {
    throw new Error(`no candidate at display position ${displayIndex}`);
  }
  return candidate.id;
}

export function canSubmitPick(state: PickState): boolean {
  return state.chosen !== null;
}
