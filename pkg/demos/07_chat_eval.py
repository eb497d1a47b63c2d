#!/usr/bin/env python3
"""Scoring chat responses: coverage, grounding, coherence, final mix."""

from cardi.chateval import (
    HashingEmbedder,
    QAPair,
    coherence,
    coverage,
    decompose,
    evaluate_dataset,
    final_score,
    grounding,
)

embedder = HashingEmbedder()
print(f"reference embedder: {embedder.embedder_id} (deterministic, offline)")

# questions decompose at sentence boundaries and at conjunctions that join
# interrogative clauses
for q in ("What is the QT interval?",
          "What does AF mean and how severe is it?",
          "Explain lead II. What about lead V5?"):
    print(f"{q!r} -> {decompose(q)}")

question = "What does AF mean and how severe is it?"
response = ("AF stands for atrial fibrillation, an irregular rhythm. "
            "In this record it is severe, with a strength above 0.9.")
docs = ["Atrial fibrillation (AF) is an irregular, often rapid atrial rhythm.",
        "Severity terms range from negligible to severe."]

subparts = decompose(question)
c = coverage(subparts, response, embedder)
g = grounding(docs, response, embedder)
h = coherence(response)
print(f"\ncoverage  = {c:.3f}  (fraction of sub-parts within cosine 0.5)")
print(f"grounding = {g:.3f}  (mean non-negative cosine to retrieved docs)")
print(f"coherence = {h:.3f}  (well-formedness heuristic)")
print(f"final     = 0.6c + 0.3g + 0.1h = {final_score(c, g, h):.3f}")

# dataset-level evaluation averages each component over all pairs
pairs = [
    QAPair("p1", question, response, tuple(docs)),
    QAPair("p2", "Is this rhythm normal?", "No, the rhythm is irregular.", (docs[0],)),
    QAPair("p3", "What should happen next?", "A clinician should review the record.", ()),
]
evaluation = evaluate_dataset(pairs, embedder)
print(f"\ndataset summary: {evaluation.summary()}")
for pair_id, scores in evaluation.per_pair:
    flag = f"  flags={list(scores.flags)}" if scores.flags else ""
    print(f"  {pair_id}: final={scores.final:.3f}{flag}")
