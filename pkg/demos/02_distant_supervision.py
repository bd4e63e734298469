"""Distant labels from answer annotations, Hits@k, and oracle reordering.

No human relevance judgments anywhere: a candidate is relevant to the degree
that the question's answer annotations appear in its text.
"""

from kivqa.corpus import Question
from kivqa.retrieval import RankedList
from kivqa.supervision import (
    Label,
    LabelSet,
    distant_label,
    hits_at_k,
    match_count,
    oracle_rank,
    vqa_accuracy,
)

# ── 1. Counting annotation matches ─────────────────────────────────────────
answers = ["chicago"] * 7 + ["new york"] * 3
for text in [
    "Chicago-style deep dish pizza",
    "A New York slice, thin and wide",
    "A map of Illinois",
]:
    o = match_count(answers, text)
    print(f"o={o:2d}  relevance={distant_label(o):.3f}  <- {text!r}")

# ── 2. VQA accuracy uses the same clamp ────────────────────────────────────
print("\npredicting 'chicago':", vqa_accuracy("chicago", answers))
print("predicting 'new york':", vqa_accuracy("New York!", answers))
print("predicting 'boston':", vqa_accuracy("boston", answers))

# ── 3. Hits@k and the oracle upper bound ───────────────────────────────────
question = Question("q1", "img1", "what city is this pizza from", answers)
retrieved = RankedList("q1", [("map", 0.95), ("ny-slice", 0.90), ("deep-dish", 0.85)])
labels = LabelSet(
    [
        Label("q1", "deep-dish", 1.0),
        Label("q1", "ny-slice", 1.0),
        Label("q1", "map", 0.0),
    ]
)
print("\nretrieval order:", retrieved.candidate_ids())
print("Hits@1 =", hits_at_k(retrieved, labels, 1), " (top item is the unhelpful map)")

oracle = oracle_rank(retrieved, labels)
print("oracle order:  ", oracle.candidate_ids())
print("Hits@1 =", hits_at_k(oracle, labels, 1), " (labels pulled the good items up)")
