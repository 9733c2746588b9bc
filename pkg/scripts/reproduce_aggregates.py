#!/usr/bin/env python3
"""Recompute the published user-study averages from their published sub-scores.

For each (method, evaluator) row the overall score is the mean of the
preference, text and image sub-scores. Five published Avg values do not match
the mean of their own published sub-scores (they were presumably computed
from unrounded data); this script shows the comparison row by row.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from xcompose.evaluation import overall_from_subscores, round2

ROWS = [
    ("Qwen-14B", "human", 0.62, 0.52, 0.80, 0.54),
    ("Intern-20B", "human", 0.64, 0.54, 0.82, 0.56),
    ("GPT3.5", "human", 0.71, 0.64, 0.88, 0.59),
    ("Ours", "human", 0.74, 0.65, 0.90, 0.67),
    ("GPT4-V", "human", 0.77, 0.73, 0.95, 0.64),
    ("Qwen-14B", "gpt4v", 0.82, 0.78, 0.91, 0.72),
    ("Intern-20B", "gpt4v", 0.81, 0.82, 0.89, 0.70),
    ("GPT3.5", "gpt4v", 0.84, 0.84, 0.91, 0.75),
    ("Ours", "gpt4v", 0.87, 0.90, 0.93, 0.79),
    ("GPT4-V", "gpt4v", 0.89, 0.88, 0.96, 0.78),
]


def main():
    print(f"{'method':<12} {'evaluator':<9} {'pref':>5} {'text':>5} {'image':>5} "
          f"{'computed':>8} {'published':>9}  status")
    closes = 0
    for method, evaluator, avg, pref, text, image in ROWS:
        computed = round2(overall_from_subscores(pref, text, image))
        ok = abs(computed - avg) <= 0.005
        closes += ok
        print(f"{method:<12} {evaluator:<9} {pref:>5.2f} {text:>5.2f} {image:>5.2f} "
              f"{computed:>8.2f} {avg:>9.2f}  {'ok' if ok else 'MISMATCH'}")
    print(f"\n{closes}/10 rows close under the published-sub-score arithmetic.")


if __name__ == "__main__":
    main()
