"""Distant-supervision labels, VQA accuracy, Hits@k, and oracle ranking.

Relevance labels are derived automatically: an annotation "occurs" in a
candidate's text when its normalized token sequence appears contiguously, on
token boundaries, inside the normalized text.  Matching against caption plus
section text is the default; ``include_section=False`` restricts matching to
the caption alone.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import lru_cache

from .corpus import Candidate, Question, normalize_answer
from .retrieval import RankedList


class SupervisionError(ValueError):
    """Raised for malformed label files and invalid metric arguments."""


@dataclass(frozen=True)
class Label:
    question_id: str
    candidate_id: str
    relevance: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.relevance <= 1.0:
            raise SupervisionError(
                f"relevance {self.relevance} outside [0, 1] for "
                f"({self.question_id}, {self.candidate_id})"
            )


class LabelSet:
    """(question_id, candidate_id) -> relevance, defaulting to 0 when absent."""

    def __init__(self, labels: list[Label] | None = None):
        self._by_question: dict[str, dict[str, float]] = {}
        for label in labels or []:
            self.add(label)

    def add(self, label: Label) -> None:
        per_q = self._by_question.setdefault(label.question_id, {})
        if label.candidate_id in per_q:
            raise SupervisionError(
                f"duplicate label for ({label.question_id}, {label.candidate_id})"
            )
        per_q[label.candidate_id] = label.relevance

    def get(self, question_id: str, candidate_id: str) -> float:
        return self._by_question.get(question_id, {}).get(candidate_id, 0.0)

    def has_question(self, question_id: str) -> bool:
        return question_id in self._by_question

    def question_ids(self) -> list[str]:
        return list(self._by_question)

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_question.values())

    def save(self, path: str, meta: dict | None = None) -> None:
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as handle:
            if meta is not None:
                handle.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
            for qid, per_q in self._by_question.items():
                for cid, rel in per_q.items():
                    handle.write(
                        json.dumps(
                            {"question_id": qid, "candidate_id": cid, "relevance": rel}
                        )
                        + "\n"
                    )
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "LabelSet":
        labels = cls()
        with open(path, "r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SupervisionError(
                        f"{path}: malformed JSON at line {lineno}: {exc}"
                    ) from exc
                if "_meta" in obj:
                    continue
                labels.add(
                    Label(obj["question_id"], obj["candidate_id"], float(obj["relevance"]))
                )
        return labels


# ---------------------------------------------------------------------------
# Token-boundary matching
# ---------------------------------------------------------------------------

@lru_cache(maxsize=65536)
def norm_tokens(text: str) -> tuple[str, ...]:
    """Normalized token tuple of a string; cached, the hot path of labeling."""
    return tuple(normalize_answer(text).split())


def contains_tokens(text_tokens, needle_tokens) -> bool:
    """True when the needle appears as a contiguous token subsequence."""
    needle = tuple(needle_tokens)
    if not needle:
        return False
    hay = tuple(text_tokens)
    n = len(needle)
    return any(hay[start : start + n] == needle for start in range(len(hay) - n + 1))


def match_count(answers: list[str], candidate_text: str) -> int:
    """Number of annotations (with multiplicity) occurring in the text."""
    text_tokens = norm_tokens(candidate_text)
    count = 0
    for answer in answers:
        if contains_tokens(text_tokens, norm_tokens(answer)):
            count += 1
    return count


def distant_label(o: int) -> float:
    """Distant relevance min(o/3, 1) for an annotation match count o."""
    if o < 0:
        raise SupervisionError(f"match count must be >= 0, got {o}")
    return min(o / 3, 1.0)


def label_question(
    question: Question,
    candidates: list[Candidate],
    include_section: bool = True,
) -> list[Label]:
    """Distant labels for one question against a candidate list."""
    labels = []
    for candidate in candidates:
        o = match_count(question.answers, candidate.knowledge_text(include_section))
        labels.append(Label(question.question_id, candidate.candidate_id, distant_label(o)))
    return labels


def build_label_set(
    questions: list[Question],
    candidates: list[Candidate],
    include_section: bool = True,
) -> LabelSet:
    """Distant labels for every (question, candidate) pair."""
    labels = LabelSet()
    for question in questions:
        for label in label_question(question, candidates, include_section):
            labels.add(label)
    return labels


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def vqa_accuracy(prediction: str, answers: list[str]) -> float:
    """min(m/3, 1) where m counts annotations equal to the prediction.

    Equality is on normalized strings; shares distant_label's clamp so the two
    stay consistent by construction.
    """
    normalized = normalize_answer(prediction)
    m = sum(1 for answer in answers if normalize_answer(answer) == normalized)
    return distant_label(m)


# Smallest nonzero distant label; a candidate at or above it counts as a hit.
HIT_THRESHOLD = 1 / 3


def hits_at_k(ranked: RankedList, labels: LabelSet, k: int) -> int:
    """1 iff any of the top-k candidates has relevance >= 1/3."""
    if k < 1:
        raise SupervisionError(f"k must be >= 1, got {k}")
    for cid, _ in ranked.items[: k]:
        if labels.get(ranked.question_id, cid) >= HIT_THRESHOLD:
            return 1
    return 0


def mean_hits_at_k(lists: list[RankedList], labels: LabelSet, k: int) -> float:
    if not lists:
        raise SupervisionError("mean_hits_at_k over an empty question set")
    return sum(hits_at_k(ranked, labels, k) for ranked in lists) / len(lists)


def oracle_rank(ranked: RankedList, labels: LabelSet) -> RankedList:
    """Reorder a list by relevance; an upper bound on ranking quality.

    Ties in relevance are broken by the original retrieval score (descending),
    then ascending id.  Output scores are the relevance values, keeping the
    non-increasing score invariant.
    """
    keyed = [
        (labels.get(ranked.question_id, cid), score, cid) for cid, score in ranked.items
    ]
    keyed.sort(key=lambda item: (-item[0], -item[1], item[2]))
    return RankedList(
        question_id=ranked.question_id,
        items=[(cid, relevance) for relevance, _, cid in keyed],
    )


# ---------------------------------------------------------------------------
# Distillation labels (reader leave-one-out deltas)
# ---------------------------------------------------------------------------

def distillation_labels(reader, question: Question, ranked: RankedList, texts: dict[str, str]) -> dict[str, float]:
    """Alternative labels from a trained reader's leave-one-out answer deltas.

    For each candidate, the raw score is the drop in the reader's probability
    of its own full-list prediction when that candidate is removed.  The
    answer set is fixed from the full list so the per-candidate probabilities
    are comparable.  Raw scores are min-max normalized to [0, 1] within the
    question; when all are equal every candidate gets 0.5.
    """
    from .reader import answer_probability, predict

    if not getattr(reader, "trained", False):
        raise SupervisionError("distillation_labels requires a trained reader")

    prediction, answer_set = predict(reader, question, ranked, texts, return_answer_set=True)
    full_prob = answer_probability(reader, question, ranked, texts, prediction, answer_set)
    raw: dict[str, float] = {}
    for leave_out, _ in ranked.items:
        reduced = RankedList(
            question_id=ranked.question_id,
            items=[(cid, s) for cid, s in ranked.items if cid != leave_out],
        )
        reduced_prob = answer_probability(
            reader, question, reduced, texts, prediction, answer_set
        )
        raw[leave_out] = full_prob - reduced_prob

    values = list(raw.values())
    low, high = min(values), max(values)
    if high == low:
        return {cid: 0.5 for cid in raw}
    return {cid: (value - low) / (high - low) for cid, value in raw.items()}
