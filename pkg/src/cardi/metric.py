"""Clinically weighted accuracy metric for multi-label ECG classification.

The score rewards misclassifications into clinically similar classes via a
weight matrix W, then normalizes the observed weighted score between an
"inactive" reference predictor (always outputs the normal class) and the
perfect predictor:

    C = (S_observed - S_inactive) / (S_correct - S_inactive)

Two accumulation modes for the weighted confusion matrix A are provided:

- ``literal``: every record contributes 1 to A[j, k] for each pair of a
  positive true class j and a positive predicted class k, scaled by 1/N.
- ``record-normalized``: each record's contribution is divided by the size
  of the union of its true and predicted positive sets (the public
  challenge convention for multi-label records).

Both modes coincide on single-label data, and C is invariant to the
overall 1/N scaling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODES = ("literal", "record-normalized")


class MetricError(ValueError):
    """Raised for degenerate or malformed metric inputs."""


@dataclass(frozen=True)
class WeightMatrix:
    """Class-similarity weights, indexed consistently with the label space.

    Attributes:
        values: (K, K) array with unit diagonal, symmetric, entries in [0, 1].
        classes: class codes in index order (row i and column i are classes[i]).
    """

    values: np.ndarray
    classes: tuple[str, ...]

    def __post_init__(self):
        w = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", w)
        k = len(self.classes)
        if w.shape != (k, k):
            raise MetricError(f"weight matrix shape {w.shape} does not match {k} classes")
        if not np.allclose(np.diag(w), 1.0):
            raise MetricError("weight matrix diagonal must be 1")
        if not np.allclose(w, w.T):
            raise MetricError("weight matrix must be symmetric")
        if w.min() < 0 or w.max() > 1:
            raise MetricError("weight matrix entries must lie in [0, 1]")


@dataclass
class PredictionSet:
    """Paired binary truth/prediction matrices plus the normal-class column."""

    y_true: np.ndarray
    y_pred: np.ndarray
    normal_class_index: int

    def __post_init__(self):
        self.y_true = np.asarray(self.y_true, dtype=int)
        self.y_pred = np.asarray(self.y_pred, dtype=int)
        if self.y_true.ndim != 2:
            raise MetricError("y_true must be a 2-d binary matrix")
        if self.y_true.shape != self.y_pred.shape:
            raise MetricError(
                f"shape mismatch: y_true {self.y_true.shape} vs y_pred {self.y_pred.shape}"
            )
        if self.y_true.shape[0] < 1:
            raise MetricError("prediction set is empty (N = 0)")
        k = self.y_true.shape[1]
        if not 0 <= self.normal_class_index < k:
            raise MetricError(f"normal_class_index {self.normal_class_index} outside [0, {k})")
        for name, arr in (("y_true", self.y_true), ("y_pred", self.y_pred)):
            if not np.isin(arr, (0, 1)).all():
                raise MetricError(f"{name} must contain only 0/1 entries")


def weighted_confusion(ps: PredictionSet, mode: str = "literal") -> np.ndarray:
    """Accumulate the weighted confusion matrix A over a prediction set.

    A[j, k] collects (1/N) * sum_i c_i * 1[true j positive and pred k positive
    in record i], where c_i = 1 in ``literal`` mode and c_i = 1/|union of
    positive true and predicted classes of record i| in ``record-normalized``
    mode.
    """
    if mode not in MODES:
        raise MetricError(f"unknown mode {mode!r}; expected one of {MODES}")
    yt = ps.y_true.astype(float)
    yp = ps.y_pred.astype(float)
    n = yt.shape[0]
    if mode == "record-normalized":
        union = np.maximum((yt.astype(bool) | yp.astype(bool)).sum(axis=1), 1).astype(float)
        yt = yt / union[:, None]
    return yt.T @ yp / n


def weighted_score(confusion: np.ndarray, weights: np.ndarray) -> float:
    """Elementwise-product sum S = sum_jk W[j,k] * A[j,k]."""
    confusion = np.asarray(confusion, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if confusion.shape != weights.shape:
        raise MetricError(
            f"shape mismatch: confusion {confusion.shape} vs weights {weights.shape}"
        )
    return float(np.sum(weights * confusion))


def inactive_predictions(ps: PredictionSet) -> np.ndarray:
    """Output of the inactive predictor: only the normal class, every record."""
    out = np.zeros_like(ps.y_true)
    out[:, ps.normal_class_index] = 1
    return out


@dataclass
class ScoreReport:
    """Score components alongside the normalized challenge score C."""

    s_observed: float
    s_correct: float
    s_inactive: float
    c: float
    mode: str
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "S_observed": self.s_observed,
            "S_correct": self.s_correct,
            "S_inactive": self.s_inactive,
            "C": self.c,
            "mode": self.mode,
        }
        d.update(self.extras)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def challenge_score(
    ps: PredictionSet,
    weights: np.ndarray | WeightMatrix,
    mode: str = "literal",
) -> ScoreReport:
    """Normalized weighted accuracy C = (S_obs - S_inact) / (S_corr - S_inact).

    S_correct uses y_pred := y_true; S_inactive uses the always-normal
    predictor. C is 1 for a perfect predictor, 0 for the inactive one, and
    may be negative for predictors worse than inactive (never clamped).

    Raises:
        MetricError: if S_correct == S_inactive (every record is normal-only,
            so the normalization is degenerate).
    """
    w = weights.values if isinstance(weights, WeightMatrix) else np.asarray(weights, dtype=float)
    s_obs = weighted_score(weighted_confusion(ps, mode), w)
    correct = PredictionSet(ps.y_true, ps.y_true, ps.normal_class_index)
    s_corr = weighted_score(weighted_confusion(correct, mode), w)
    inactive = PredictionSet(ps.y_true, inactive_predictions(ps), ps.normal_class_index)
    s_inact = weighted_score(weighted_confusion(inactive, mode), w)
    if s_corr == s_inact:
        raise MetricError(
            "degenerate normalization: S_correct == S_inactive "
            "(dataset indistinguishable from all-normal)"
        )
    c = (s_obs - s_inact) / (s_corr - s_inact)
    return ScoreReport(s_obs, s_corr, s_inact, c, mode)


def per_class_roc_auc(y_true: np.ndarray, y_score: np.ndarray) -> np.ndarray:
    """ROC-AUC per class via the rank statistic; NaN for single-class columns.

    Used only for chart-ready exports; the challenge score does not depend
    on it.
    """
    y_true = np.asarray(y_true, dtype=int)
    y_score = np.asarray(y_score, dtype=float)
    n, k = y_true.shape
    out = np.full(k, np.nan)
    for j in range(k):
        pos = y_true[:, j] == 1
        n_pos = int(pos.sum())
        n_neg = n - n_pos
        if n_pos == 0 or n_neg == 0:
            continue
        order = np.argsort(y_score[:, j], kind="stable")
        ranks = np.empty(n, dtype=float)
        # average ranks over ties
        sorted_scores = y_score[order, j]
        i = 0
        while i < n:
            jx = i
            while jx + 1 < n and sorted_scores[jx + 1] == sorted_scores[i]:
                jx += 1
            ranks[order[i : jx + 1]] = (i + jx) / 2.0 + 1.0
            i = jx + 1
        out[j] = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return out


def load_weights_csv(path: str | Path) -> WeightMatrix:
    """Load a weight matrix CSV with a header row and column of class codes."""
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise MetricError(f"empty weights file: {path}")
    header = [c.strip() for c in lines[0].split(",")]
    # leading cell of the header row is a corner label (possibly empty)
    classes = header[1:]
    rows = []
    row_codes = []
    for ln in lines[1:]:
        cells = [c.strip() for c in ln.split(",")]
        row_codes.append(cells[0])
        rows.append([float(c) for c in cells[1:]])
    if row_codes != classes:
        raise MetricError(f"weights file row/column codes disagree in {path}")
    return WeightMatrix(np.array(rows, dtype=float), tuple(classes))


def save_weights_csv(wm: WeightMatrix, path: str | Path) -> None:
    path = Path(path)
    lines = ["," + ",".join(wm.classes)]
    for code, row in zip(wm.classes, wm.values):
        lines.append(code + "," + ",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def synthetic_weights(classes: list[str] | tuple[str, ...], similar_pair: tuple[int, int] | None = None) -> WeightMatrix:
    """Test-friendly weight matrix: identity plus 0.5 between one similar pair."""
    k = len(classes)
    w = np.eye(k)
    if similar_pair is not None:
        i, j = similar_pair
        w[i, j] = w[j, i] = 0.5
    return WeightMatrix(w, tuple(classes))
