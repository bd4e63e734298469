"""Desk-scale answer reader over ranked knowledge candidates.

A log-linear scorer over seven rank/score/occurrence features substitutes for
a sequence generator while keeping the same interface: question plus the top-K
candidates of a ranked list in, answer string out.  With K=0 only the answer
prior and question-text features carry signal -- the no-knowledge path -- so
a "no retrieval" baseline falls out of the same model.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import Candidate, Question, normalize_answer
from .optim import Adam
from .retrieval import RankedList
from .supervision import contains_tokens, norm_tokens, vqa_accuracy

READER_FEATURE_DIM = 7
DEFAULT_PRIOR_POOL = 100  # top-V vocab entries by prior always considered


class ReaderError(ValueError):
    """Raised for empty vocabularies and invalid training inputs."""


@dataclass
class AnswerVocab:
    """Normalized answer strings with log(1 + count) priors."""

    entries: list[str]
    prior_logfreq: np.ndarray

    def __post_init__(self) -> None:
        if len(self.entries) != len(self.prior_logfreq):
            raise ReaderError("entries and priors must align")
        self._index = {a: i for i, a in enumerate(self.entries)}
        if len(self._index) != len(self.entries):
            raise ReaderError("vocab entries must be unique")

    def prior(self, answer: str) -> float:
        i = self._index.get(answer)
        return float(self.prior_logfreq[i]) if i is not None else 0.0

    def top_by_prior(self, v: int) -> list[str]:
        order = sorted(self.entries, key=lambda a: (-self.prior(a), a))
        return order[: v]


def build_answer_vocab(questions: list[Question]) -> AnswerVocab:
    """Vocabulary of all normalized training annotations with log priors."""
    if not questions:
        raise ReaderError("cannot build a vocabulary from an empty training set")
    counts: Counter[str] = Counter()
    order: list[str] = []
    for question in questions:
        for answer in question.answers:
            normalized = normalize_answer(answer)
            if not normalized:
                continue
            if normalized not in counts:
                order.append(normalized)
            counts[normalized] += 1
    if not order:
        raise ReaderError("training annotations normalize to nothing")
    priors = np.array([np.log1p(counts[a]) for a in order])
    return AnswerVocab(entries=order, prior_logfreq=priors)


@dataclass
class ReaderModel:
    """Log-linear weights over the 7 reader features."""

    weights: np.ndarray
    vocab: AnswerVocab
    K: int
    trained: bool = False

    @classmethod
    def initialize(cls, vocab: AnswerVocab, K: int) -> "ReaderModel":
        if K < 0:
            raise ReaderError(f"K must be >= 0, got {K}")
        return cls(weights=np.zeros(READER_FEATURE_DIM), vocab=vocab, K=K)

    def save(self, path: str, config: dict | None = None) -> None:
        obj = {
            "weights": self.weights.tolist(),
            "K": self.K,
            "trained": self.trained,
            "vocab": {
                "entries": self.vocab.entries,
                "prior_logfreq": self.vocab.prior_logfreq.tolist(),
            },
        }
        if config is not None:
            obj["config"] = config
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as handle:
            json.dump(obj, handle, sort_keys=True, indent=1)
            handle.write("\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "ReaderModel":
        with open(path, "r", encoding="utf-8") as handle:
            obj = json.load(handle)
        weights = np.array(obj["weights"], dtype=np.float64)
        if weights.shape != (READER_FEATURE_DIM,):
            raise ReaderError(f"checkpoint weights shape {weights.shape} invalid")
        vocab = AnswerVocab(
            entries=list(obj["vocab"]["entries"]),
            prior_logfreq=np.array(obj["vocab"]["prior_logfreq"], dtype=np.float64),
        )
        return cls(weights=weights, vocab=vocab, K=int(obj["K"]), trained=bool(obj["trained"]))


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

def _minmax(scores: list[float]) -> list[float]:
    if not scores:
        return []
    low, high = min(scores), max(scores)
    if high == low:
        return [0.5] * len(scores)
    return [(s - low) / (high - low) for s in scores]


def reader_features(
    question: Question,
    candidates: list[tuple[str, float, str]],
    answer: str,
    vocab: AnswerVocab,
) -> np.ndarray:
    """7 features for (question, top-K candidates, answer).

    ``candidates`` holds (candidate_id, list score, knowledge text) for the
    top-K items, in rank order.  ``answer`` must already be normalized.
    Features: any-occurrence flag, occurrence count / K, rank-discounted
    occurrence sum 1/log2(rank+2), best min-max-normalized score among
    occurrences, answer prior, question-text occurrence flag, and a constant
    bias.  With K=0 only the last three can be nonzero.
    """
    answer_tokens = tuple(answer.split())
    k = len(candidates)
    occurrence = []
    for _, _, text in candidates:
        occurrence.append(contains_tokens(norm_tokens(text), answer_tokens))
    normalized_scores = _minmax([score for _, score, _ in candidates])

    features = np.zeros(READER_FEATURE_DIM)
    if any(occurrence):
        features[0] = 1.0
        features[1] = sum(occurrence) / k
        features[2] = sum(
            1.0 / np.log2(rank + 2) for rank, hit in enumerate(occurrence, start=1) if hit
        )
        features[3] = max(s for s, hit in zip(normalized_scores, occurrence) if hit)
    features[4] = vocab.prior(answer)
    features[5] = (
        1.0 if contains_tokens(norm_tokens(question.text), answer_tokens) else 0.0
    )
    features[6] = 1.0
    return features


def _candidate_rows(
    ranked: RankedList, texts: dict[str, str], K: int
) -> list[tuple[str, float, str]]:
    rows = []
    for cid, score in ranked.items[: K]:
        if cid not in texts:
            raise ReaderError(f"missing candidate text for {cid}")
        rows.append((cid, score, texts[cid]))
    return rows


def answer_set_for(
    model: ReaderModel,
    ranked: RankedList,
    texts: dict[str, str],
    prior_pool: int = DEFAULT_PRIOR_POOL,
) -> list[str]:
    """Vocab entries occurring in the top-K texts, plus the top-V by prior."""
    rows = _candidate_rows(ranked, texts, model.K)
    token_lists = [norm_tokens(text) for _, _, text in rows]
    present = [
        entry
        for entry in model.vocab.entries
        if any(contains_tokens(tokens, entry.split()) for tokens in token_lists)
    ]
    pool = set(present) | set(model.vocab.top_by_prior(prior_pool))
    return sorted(pool)


def _feature_matrix(
    model: ReaderModel,
    question: Question,
    ranked: RankedList,
    texts: dict[str, str],
    answers: list[str],
) -> np.ndarray:
    rows = _candidate_rows(ranked, texts, model.K)
    return np.stack([reader_features(question, rows, a, model.vocab) for a in answers])


def predict(
    model: ReaderModel,
    question: Question,
    ranked: RankedList,
    texts: dict[str, str],
    prior_pool: int = DEFAULT_PRIOR_POOL,
    return_answer_set: bool = False,
):
    """Highest-scoring answer over the candidate answer set.

    Ties in the linear score break lexicographically, so prediction is
    deterministic even for a fresh zero-weight model.
    """
    if not model.vocab.entries:
        raise ReaderError("empty vocabulary")
    answers = answer_set_for(model, ranked, texts, prior_pool)
    matrix = _feature_matrix(model, question, ranked, texts, answers)
    scores = matrix @ model.weights
    best = min(range(len(answers)), key=lambda i: (-scores[i], answers[i]))
    if return_answer_set:
        return answers[best], answers
    return answers[best]


def answer_probability(
    model: ReaderModel,
    question: Question,
    ranked: RankedList,
    texts: dict[str, str],
    answer: str,
    answer_set: list[str],
) -> float:
    """Softmax probability of ``answer`` within a fixed answer set."""
    if answer not in answer_set:
        return 0.0
    matrix = _feature_matrix(model, question, ranked, texts, answer_set)
    scores = matrix @ model.weights
    scores -= scores.max()
    weights = np.exp(scores)
    return float(weights[answer_set.index(answer)] / weights.sum())


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class ReaderTrainConfig:
    """Defaults mirror the documented generator setup (batch 32, 10K steps,
    lr 1e-4); the experiment harness uses a faster desk-scale profile."""

    steps: int = 10000
    lr: float = 1e-4
    batch_size: int = 32
    prior_pool: int = DEFAULT_PRIOR_POOL
    seed: int = 0


@dataclass
class ReaderExample:
    """Precomputed per-question training record."""

    question_id: str
    features: np.ndarray  # (n_answers, 7)
    target: np.ndarray  # (n_answers,) soft target, sums to 1


def build_reader_examples(
    model: ReaderModel,
    questions: list[Question],
    lists: dict[str, RankedList],
    texts: dict[str, str],
    prior_pool: int = DEFAULT_PRIOR_POOL,
) -> list[ReaderExample]:
    """Soft-target examples; questions with all-zero accuracy are skipped."""
    examples = []
    for question in questions:
        qid = question.question_id
        if qid not in lists:
            raise ReaderError(f"question {qid} has no candidate list")
        ranked = lists[qid]
        answers = answer_set_for(model, ranked, texts, prior_pool)
        target = np.array([vqa_accuracy(a, question.answers) for a in answers])
        total = target.sum()
        if total == 0.0:
            continue
        matrix = _feature_matrix(model, question, ranked, texts, answers)
        examples.append(ReaderExample(qid, matrix, target / total))
    return examples


def train_reader(
    model: ReaderModel,
    examples: list[ReaderExample],
    config: ReaderTrainConfig,
) -> ReaderModel:
    """Cross-entropy against soft VQA-accuracy targets, Adam updates.

    Mutates and returns ``model``; zero steps leaves the (zero-initialized)
    weights untouched but still marks the model trained.
    """
    if not examples:
        raise ReaderError("no trainable questions (all-zero targets everywhere)")
    rng = np.random.default_rng(config.seed)
    params = [model.weights]
    optimizer = Adam(params, lr=config.lr)
    for _ in range(config.steps):
        picks = rng.integers(0, len(examples), size=config.batch_size)
        grad = np.zeros(READER_FEATURE_DIM)
        for pick in picks:
            example = examples[int(pick)]
            scores = example.features @ model.weights
            scores = scores - scores.max()
            expd = np.exp(scores)
            probs = expd / expd.sum()
            grad += example.features.T @ (probs - example.target)
        grad /= config.batch_size
        optimizer.step([grad])
    model.trained = True
    return model


def fit_reader(
    questions: list[Question],
    lists: dict[str, RankedList],
    texts: dict[str, str],
    K: int,
    config: ReaderTrainConfig,
    vocab: AnswerVocab | None = None,
) -> ReaderModel:
    """Build vocab (unless given), assemble targets, and train a reader.

    ``lists`` is the candidate source for training -- which source feeds
    training is the experiment's central knob, so it is always explicit.
    """
    if vocab is None:
        vocab = build_answer_vocab(questions)
    model = ReaderModel.initialize(vocab, K)
    examples = build_reader_examples(model, questions, lists, texts, config.prior_pool)
    return train_reader(model, examples, config)


def reader_loss(model: ReaderModel, examples: list[ReaderExample]) -> float:
    """Mean cross-entropy between softmax scores and soft targets."""
    total = 0.0
    for example in examples:
        scores = example.features @ model.weights
        scores = scores - scores.max()
        log_z = np.log(np.exp(scores).sum())
        total += float(-(example.target * (scores - log_z)).sum())
    return total / len(examples)


# ---------------------------------------------------------------------------
# External candidate injection
# ---------------------------------------------------------------------------

def inject_candidates(
    ranked: RankedList, external: list[Candidate], m: int
) -> RankedList:
    """Replace the last m items with the first m external candidates.

    Injected items carry no retrieval score of their own; they receive scores
    continuing strictly below the last kept item (each 1e-6 less than the
    previous) so the list's non-increasing invariant holds.
    """
    if m < 0:
        raise ReaderError(f"m must be >= 0, got {m}")
    if m > len(ranked.items):
        raise ReaderError(f"cannot replace {m} items of a {len(ranked.items)}-item list")
    if len(external) < m:
        raise ReaderError(f"need {m} external candidates, got {len(external)}")
    if m == 0:
        return RankedList(question_id=ranked.question_id, items=list(ranked.items))
    kept = ranked.items[: len(ranked.items) - m]
    base = kept[-1][1] if kept else 0.0
    items = list(kept)
    for i, candidate in enumerate(external[: m], start=1):
        items.append((candidate.candidate_id, base - 1e-6 * i))
    return RankedList(question_id=ranked.question_id, items=items)
