// Score-form state: eight dimensions, each one of {1, 3, 5}, all required
// before submission is possible. The radio controls enforce the value set;
// this module enforces the completeness gate.

import { DIM_KEYS, DimKey, SCORE_LEVELS, ScoreLevel } from './types.js';

export type ScoreSelection = Partial<Record<DimKey, ScoreLevel>>;

export function setDimension(
  selection: ScoreSelection,
  key: DimKey,
  level: number,
): ScoreSelection {
  if (!SCORE_LEVELS.includes(level as ScoreLevel)) {
    throw new Error(`level ${level} not in {1, 3, 5}`);
  }
  return { ...selection, [key]: level as ScoreLevel };
}

export function missingDimensions(selection: ScoreSelection): DimKey[] {
  return DIM_KEYS.filter((k) => selection[k] === undefined);
}

export function canSubmit(selection: ScoreSelection): boolean {
  return missingDimensions(selection).length === 0;
}

export function toSubmission(selection: ScoreSelection): Record<DimKey, ScoreLevel> {
  const missing = missingDimensions(selection);
  if (missing.length > 0) {
    throw new Error(`cannot submit: missing ${missing.join(', ')}`);
  }
  return { ...selection } as Record<DimKey, ScoreLevel>;
}
