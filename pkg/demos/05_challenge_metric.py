#!/usr/bin/env python3
"""The clinically weighted accuracy score C and its reference predictors."""

import numpy as np

from cardi.metric import (
    PredictionSet,
    challenge_score,
    inactive_predictions,
    synthetic_weights,
    weighted_confusion,
    weighted_score,
)

# two classes, partial credit 0.5 between them
wm = synthetic_weights(["normal", "afib"], similar_pair=(0, 1))
print(f"weight matrix:\n{wm.values}")

# four single-label records: two normal, two afib; one afib record is missed
y_true = np.array([[1, 0], [1, 0], [0, 1], [0, 1]])
y_pred = np.array([[1, 0], [1, 0], [0, 1], [1, 0]])
ps = PredictionSet(y_true, y_pred, normal_class_index=0)

confusion = weighted_confusion(ps)
print(f"\nweighted confusion A (literal mode):\n{confusion}")
print(f"S_observed = sum(W * A) = {weighted_score(confusion, wm.values)}")

report = challenge_score(ps, wm)
print(f"\nscore report: {report.to_dict()}")
print("C = (S_obs - S_inact) / (S_corr - S_inact) "
      f"= ({report.s_observed} - {report.s_inactive}) / "
      f"({report.s_correct} - {report.s_inactive}) = {report.c}")

# anchors: the perfect predictor scores 1, the always-normal predictor 0
perfect = challenge_score(PredictionSet(y_true, y_true, 0), wm)
inactive = challenge_score(PredictionSet(y_true, inactive_predictions(ps), 0), wm)
print(f"\nperfect predictor C = {perfect.c}, inactive predictor C = {inactive.c}")

# multi-label records differ between the two accumulation modes: the
# record-normalized mode divides each record's contribution by the size of
# the union of its true and predicted positive sets
multi_true = np.array([[1, 1], [1, 0]])
multi_pred = np.array([[1, 0], [1, 1]])
mps = PredictionSet(multi_true, multi_pred, 0)
literal = challenge_score(mps, wm, mode="literal")
official = challenge_score(mps, wm, mode="record-normalized")
print(f"\nmulti-label example: C_literal = {literal.c:.4f}, "
      f"C_record_normalized = {official.c:.4f}")
