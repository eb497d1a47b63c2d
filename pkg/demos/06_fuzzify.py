#!/usr/bin/env python3
"""Scores and labels -> signed strengths -> five linguistic terms."""

import numpy as np

from cardi.fuzzy import fuzzify, report_to_json, strength, term

# strength squashes logit(score^0.4) through tanh; the label picks the sign.
# under the corrected convention a confident positive approaches +1
# ("severe") and a confident negative also approaches +1 ("negligible")
print("score | strength(label=1) | term      | strength(label=0) | term")
for score in (0.999, 0.9, 0.5, 0.176777, 0.05, 0.001):
    s1, s0 = strength(score, 1), strength(score, 0)
    print(f"{score:5.3f} | {s1:+17.6f} | {term(s1, 1):9s} | {s0:+17.6f} | {term(s0, 0)}")

print(f"\nzero crossing at score = 0.5^2.5 = {0.5**2.5:.6f} "
      f"(its 0.4-power is exactly 0.5, so the logit vanishes)")

# the literal sign convention sends confident positives toward -1, which
# makes the upper bands unreachable; kept only for fidelity experiments
print(f"literal convention at (0.9, label=1): {strength(0.9, 1, 'literal'):+.6f} "
      f"-> {term(strength(0.9, 1, 'literal'), 1)}")

# a full report: threshold the probabilities (boundary inclusive), then
# attach strength and term per class
rng = np.random.default_rng(3)
probs = rng.random(8)
codes = [f"dx{i:02d}" for i in range(8)]
assessments = fuzzify(probs, threshold=0.5, class_codes=codes)
print("\nclass | score | label | strength | term")
for a in assessments:
    print(f"{a.class_code} | {a.score:5.3f} | {a.label:5d} | {a.strength:+8.4f} | {a.term}")

print("\nreport JSON (first entry):")
print(report_to_json(assessments).splitlines()[1:9])
