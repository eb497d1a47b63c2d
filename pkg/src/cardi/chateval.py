"""Response-quality scoring: coverage, grounding, coherence.

Each question is decomposed into sub-parts; coverage is the fraction of
sub-parts whose embedding lies within cosine threshold tau of the
response embedding. Grounding is the mean (floored at zero) cosine
between the retrieved documents and the response. Coherence is a
deterministic well-formedness heuristic (pluggable for model-based
scorers). The final score mixes them 60/30/10.

The reference embedder hashes tokens into a fixed 256-dimensional signed
bag-of-words and L2-normalizes, so the whole evaluation is deterministic,
dependency-free, and bit-reproducible across platforms.
"""

from __future__ import annotations

import hashlib
import json
import re
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Protocol

import numpy as np

COVERAGE_WEIGHT, GROUNDING_WEIGHT, COHERENCE_WEIGHT = 0.6, 0.3, 0.1
DEFAULT_TAU = 0.5

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_INTERROGATIVE_LEADS = {
    "what", "which", "who", "whom", "whose", "when", "where", "why", "how",
    "is", "are", "was", "were", "do", "does", "did", "can", "could", "should",
    "would", "will", "shall", "may", "might", "must",
}
# small closed-class verb inventory for the fragment heuristic
_FINITE_VERB_HINTS = {
    "is", "are", "was", "were", "be", "been", "being", "am",
    "have", "has", "had", "do", "does", "did",
    "can", "could", "will", "would", "shall", "should", "may", "might", "must",
    "means", "shows", "indicates", "suggests", "reflects", "measures",
    "represents", "occurs", "appears", "remains", "requires", "includes",
}


class ChatEvalError(ValueError):
    pass


class Embedder(Protocol):
    embedder_id: str

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Deterministic signed bag-of-tokens embedding, L2-normalized.

    Token buckets and signs come from MD5 digests, so vectors are identical
    across runs, processes, and platforms.
    """

    def __init__(self, dim: int = 256):
        self.dim = dim
        self.embedder_id = f"hashing-bow-{dim}"

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token in _TOKEN_RE.findall(text.lower()):
            digest = hashlib.md5(token.encode()).digest()
            bucket = int.from_bytes(digest[:4], "big") % self.dim
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[0] = 1.0  # degenerate text: fixed unit vector keeps the contract
            return vec
        return vec / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b))


def decompose(question: str, splitter: Callable[[str], list[str]] | None = None) -> list[str]:
    """Split a question into the sub-parts a good answer must address.

    The reference strategy splits at sentence boundaries and at
    coordinating conjunctions that join interrogative clauses; a custom
    ``splitter`` callable may replace it (e.g. a model-based decomposer).
    Always returns at least one part.
    """
    if not question.strip():
        raise ChatEvalError("question is empty")
    if splitter is not None:
        parts = [p for p in splitter(question) if p.strip()]
        return parts or [question.strip()]
    parts: list[str] = []
    for sentence in re.split(r"(?<=[.?!])\s+", question.strip()):
        sentence = sentence.strip()
        if not sentence:
            continue
        parts.extend(_split_conjoined(sentence))
    return parts or [question.strip()]


def _split_conjoined(sentence: str) -> list[str]:
    """Break 'what does X mean and how severe is it' style clauses apart."""
    pieces = re.split(r"\s+(?:and|or)\s+", sentence, flags=re.IGNORECASE)
    out = [pieces[0]]
    for piece in pieces[1:]:
        first_word = piece.split()[0].lower() if piece.split() else ""
        if first_word in _INTERROGATIVE_LEADS:
            out.append(piece)
        else:
            out[-1] = f"{out[-1]} and {piece}"
    return [p.strip() for p in out if p.strip()]


def coverage(subparts: list[str], response: str, embedder: Embedder,
             tau: float = DEFAULT_TAU) -> float:
    """Fraction of sub-parts whose cosine to the response reaches tau."""
    if not subparts:
        raise ChatEvalError("coverage needs at least one sub-part")
    response_vec = embedder.embed(response)
    hits = sum(1 for part in subparts if cosine(embedder.embed(part), response_vec) >= tau)
    return hits / len(subparts)


def grounding(docs: list[str], response: str, embedder: Embedder) -> float:
    """Mean over documents of max(0, cosine(doc, response)).

    An empty document list is defined as 0.0 and warns: the response had
    nothing to be grounded in.
    """
    if not docs:
        warnings.warn("grounding computed with no retrieved documents", stacklevel=2)
        return 0.0
    response_vec = embedder.embed(response)
    sims = [max(0.0, cosine(embedder.embed(doc), response_vec)) for doc in docs]
    return float(np.mean(sims))


def coherence(response: str, scorer: Callable[[str], float] | None = None) -> float:
    """Well-formedness score in [0, 1].

    The reference heuristic penalizes sentences with no finite verb,
    unbalanced brackets/quotes, and immediately repeated tokens. A custom
    ``scorer`` (e.g. a grammar-tuned language model) may replace it.
    """
    if not response.strip():
        raise ChatEvalError("response is empty")
    if scorer is not None:
        value = float(scorer(response))
        if not 0.0 <= value <= 1.0:
            raise ChatEvalError(f"coherence scorer returned {value}, outside [0, 1]")
        return value
    score = 1.0
    sentences = [s for s in re.split(r"(?<=[.?!])\s+", response.strip()) if s.strip()]
    if sentences:
        missing_verb = sum(1 for s in sentences if not _has_finite_verb(s))
        score -= 0.4 * missing_verb / len(sentences)
    for open_ch, close_ch in (("(", ")"), ("[", "]"), ("{", "}")):
        if response.count(open_ch) != response.count(close_ch):
            score -= 0.2
    if response.count('"') % 2:
        score -= 0.1
    tokens = _TOKEN_RE.findall(response.lower())
    repeats = sum(1 for a, b in zip(tokens, tokens[1:]) if a == b)
    if tokens:
        score -= min(0.3, 0.3 * repeats / max(1, len(tokens) // 8))
    return float(min(1.0, max(0.0, score)))


def _has_finite_verb(sentence: str) -> bool:
    tokens = _TOKEN_RE.findall(sentence.lower())
    if any(t in _FINITE_VERB_HINTS for t in tokens):
        return True
    # inflectional fallback: an -s/-ed/-ing form past the first token
    return any(t.endswith(("ed", "ing", "es")) and len(t) > 4 for t in tokens[1:])


def final_score(coverage_value: float, grounding_value: float, coherence_value: float) -> float:
    """0.6 * coverage + 0.3 * grounding + 0.1 * coherence, exactly.

    Computed in exact rational arithmetic with a single rounding at the
    end, so decimal-friendly inputs produce their exact decimal result
    ((1, 1, 1) -> 1.0, not 0.9999999999999999).
    """
    for name, v in (("coverage", coverage_value), ("grounding", grounding_value),
                    ("coherence", coherence_value)):
        if not 0.0 <= v <= 1.0:
            raise ChatEvalError(f"{name} value {v} outside [0, 1]")
    total = (6 * Fraction(coverage_value) + 3 * Fraction(grounding_value)
             + Fraction(coherence_value)) / 10
    return float(total)


@dataclass(frozen=True)
class QAPair:
    """One question/response exchange with its retrieval context."""

    pair_id: str
    question: str
    response: str
    docs: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.question.strip():
            raise ChatEvalError(f"pair {self.pair_id}: question is empty")
        if not self.response.strip():
            raise ChatEvalError(f"pair {self.pair_id}: response is empty")
        object.__setattr__(self, "docs", tuple(self.docs))


@dataclass(frozen=True)
class EvalScores:
    coverage: float
    grounding: float
    coherence: float
    final: float
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = {"coverage": self.coverage, "grounding": self.grounding,
             "coherence": self.coherence, "final": self.final}
        if self.flags:
            d["flags"] = list(self.flags)
        return d


def evaluate_pair(pair: QAPair, embedder: Embedder, tau: float = DEFAULT_TAU,
                  coherence_scorer: Callable[[str], float] | None = None) -> EvalScores:
    subparts = decompose(pair.question)
    c = coverage(subparts, pair.response, embedder, tau)
    flags: tuple[str, ...] = ()
    if pair.docs:
        g = grounding(list(pair.docs), pair.response, embedder)
    else:
        g, flags = 0.0, ("no_docs",)
    h = coherence(pair.response, coherence_scorer)
    return EvalScores(c, g, h, final_score(c, g, h), flags)


@dataclass
class DatasetEvaluation:
    per_pair: list[tuple[str, EvalScores]]
    tau: float
    embedder_id: str

    @property
    def means(self) -> dict[str, float]:
        n = len(self.per_pair)
        return {
            "mean_coverage": sum(s.coverage for _, s in self.per_pair) / n,
            "mean_grounding": sum(s.grounding for _, s in self.per_pair) / n,
            "mean_coherence": sum(s.coherence for _, s in self.per_pair) / n,
            "mean_final": sum(s.final for _, s in self.per_pair) / n,
        }

    def summary(self) -> dict:
        return {**self.means, "tau": self.tau, "embedder_id": self.embedder_id,
                "n_pairs": len(self.per_pair)}


def evaluate_dataset(pairs: Iterable[QAPair], embedder: Embedder,
                     tau: float = DEFAULT_TAU) -> DatasetEvaluation:
    """Score every pair and aggregate arithmetic means (ordered reduction)."""
    pairs = list(pairs)
    if not pairs:
        raise ChatEvalError("dataset is empty")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # per-pair no_docs flags carry the signal
        scored = [(p.pair_id, evaluate_pair(p, embedder, tau)) for p in pairs]
    return DatasetEvaluation(scored, tau, embedder.embedder_id)


# --- JSON-lines formats -----------------------------------------------------

def read_pairs_jsonl(path: str | Path) -> list[QAPair]:
    """One pair per line: {"id", "question", "response", "docs": [...]}."""
    pairs = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ChatEvalError(f"{path}:{line_no}: invalid JSON ({exc})") from None
        pairs.append(QAPair(str(row["id"]), row["question"], row["response"],
                            tuple(row.get("docs", ()))))
    return pairs


def write_scores_jsonl(evaluation: DatasetEvaluation, path: str | Path) -> None:
    lines = [json.dumps({"id": pair_id, **scores.to_dict()}, sort_keys=True)
             for pair_id, scores in evaluation.per_pair]
    Path(path).write_text("\n".join(lines) + "\n")
