"""Linguistic severity layer: per-class (score, label) -> strength -> term.

A sigmoid score in [0, 1] is compressed through an exponent-0.4 power, its
logit taken, the sign chosen by the binary label, and the result squashed
with tanh into a signed "strength" in (-1, 1). The strength and label then
select one of five linguistic terms.

Sign conventions. Under the ``corrected`` convention (default) the sign is
(-1)^(1 - label): a confidently positive class near score 1 gets strength
near +1 and lands in "severe", and a confidently absent class near score 0
gets strength near +1 and lands in "negligible". The ``literal`` convention
uses (-1)^label, which sends confident positives toward -1, making the
upper term bands unreachable; it is kept selectable for fidelity
experiments only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from typing import Iterable, Sequence

import numpy as np

CONVENTIONS = ("corrected", "literal")
TERMS = ("negligible", "low", "medium", "high", "severe")

_SCORE_CLAMP = 1e-15
_EXPONENT = 0.4


class FuzzifierError(ValueError):
    """Raised for out-of-domain fuzzifier inputs."""


def strength(score: float, label: int, convention: str = "corrected") -> float:
    """Signed confidence in the assigned label, in (-1, 1).

    strength = tanh(sign * logit(clamp(score)^0.4)) with the sign picked by
    the label under the chosen convention. In exact arithmetic |strength|
    is strictly below 1; in float64 the clamp at score = 1 produces a logit
    of about 35.4, where tanh rounds to exactly 1.0.
    """
    if convention not in CONVENTIONS:
        raise FuzzifierError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")
    if not 0.0 <= score <= 1.0:
        raise FuzzifierError(f"score {score} outside [0, 1]")
    if label not in (0, 1):
        raise FuzzifierError(f"label {label} not binary")
    clamped = min(max(score, _SCORE_CLAMP), 1.0 - _SCORE_CLAMP)
    p = clamped**_EXPONENT
    logit = math.log(p / (1.0 - p))
    sign = (-1.0) ** label if convention == "literal" else (-1.0) ** (1 - label)
    return math.tanh(sign * logit)


def term(strength_value: float, label: int) -> str:
    """Map (strength, label) to a linguistic term.

    Bands are inclusive at their lower edge and exclusive at the upper,
    except that 1.0 still belongs to the top band. Strengths below 0 fall
    into the catch-all "medium".
    """
    if not -1.0 <= strength_value <= 1.0:
        raise FuzzifierError(f"strength {strength_value} outside [-1, 1]")
    if label not in (0, 1):
        raise FuzzifierError(f"label {label} not binary")
    if strength_value >= 0.9:
        return "severe" if label == 1 else "negligible"
    if 0.79 <= strength_value < 0.9:
        return "high" if label == 1 else "low"
    return "medium"


@dataclass(frozen=True)
class ClassAssessment:
    """Fuzzified verdict for one class."""

    class_code: str
    score: float
    label: int
    strength: float
    term: str


def fuzzify(
    probs: Sequence[float] | np.ndarray,
    threshold: float = 0.5,
    class_codes: Sequence[str] | None = None,
    convention: str = "corrected",
) -> list[ClassAssessment]:
    """Fuzzify a probability vector into per-class assessments.

    Labels are thresholded inclusively (prob >= threshold -> 1), then each
    class gets its strength and term. Entries are ordered by class index,
    matching the report consumed downstream by the chat service.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1:
        raise FuzzifierError("probs must be a 1-d vector")
    if probs.size and (probs.min() < 0 or probs.max() > 1):
        raise FuzzifierError("probs must lie in [0, 1]")
    if not 0.0 < threshold < 1.0:
        raise FuzzifierError(f"threshold {threshold} outside (0, 1)")
    if class_codes is None:
        class_codes = [f"class_{i:02d}" for i in range(probs.size)]
    if len(class_codes) != probs.size:
        raise FuzzifierError("class_codes length does not match probs")
    out = []
    for code, p in zip(class_codes, probs):
        label = int(p >= threshold)
        s = strength(float(p), label, convention)
        out.append(ClassAssessment(str(code), float(p), label, s, term(s, label)))
    return out


def report_to_json(assessments: Iterable[ClassAssessment]) -> str:
    """Serialize a fuzzy report as a JSON array ordered by class index."""
    return json.dumps([asdict(a) for a in assessments], indent=2)


def report_from_json(text: str) -> list[ClassAssessment]:
    return [ClassAssessment(**entry) for entry in json.loads(text)]
