"""Cross-item reranking: feature construction, a small scorer, and training.

The scorer consumes both modalities of both items at once -- pooled and
per-patch question image vectors, the question text vector, and the
candidate's image and text vectors -- so relevance reflects the whole
question-candidate pair rather than a single patch.  It is a 16-feature
interaction model with one tanh hidden layer producing a single unnormalized
scalar per pair, trained with a pairwise logistic ranking loss over distant
labels and checkpoint-selected by dev Hits@k.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .corpus import Candidate, EmbeddingTable, Question, patch_ids
from .optim import Adam
from .retrieval import RankedList
from .supervision import LabelSet, mean_hits_at_k

FEATURE_DIM = 16


class RerankerError(ValueError):
    """Raised for inconsistent dimensions and invalid training inputs."""


@dataclass
class QuestionContext:
    """Question-side vectors: pooled patches, individual patches, text."""

    pooled_patch_vec: np.ndarray
    patch_vecs: np.ndarray  # (n_patches, dim)
    qtext_vec: np.ndarray

    def __post_init__(self) -> None:
        if len(self.patch_vecs) == 0:
            raise RerankerError("patch_vecs must be non-empty")


@dataclass
class CandidateContext:
    """Candidate-side vectors; image vector absent for text-only items."""

    ctext_vec: np.ndarray
    cimg_vec: np.ndarray | None = None


def build_question_context(
    question: Question, patch_table: EmbeddingTable, qtext_table: EmbeddingTable
) -> QuestionContext:
    vecs = np.stack(
        [patch_table[pid] for pid in patch_ids(question.image_id, patch_table)]
    ).astype(np.float64)
    return QuestionContext(
        pooled_patch_vec=vecs.mean(axis=0),
        patch_vecs=vecs,
        qtext_vec=qtext_table[question.question_id].astype(np.float64),
    )


def build_candidate_context(
    candidate: Candidate,
    cand_image_table: EmbeddingTable,
    cand_text_table: EmbeddingTable,
) -> CandidateContext:
    cimg = None
    if candidate.image_id is not None and candidate.image_id in cand_image_table:
        cimg = cand_image_table[candidate.image_id].astype(np.float64)
    return CandidateContext(
        ctext_vec=cand_text_table[candidate.candidate_id].astype(np.float64),
        cimg_vec=cimg,
    )


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def build_features(
    q: QuestionContext, c: CandidateContext, retrieval_score: float
) -> np.ndarray:
    """Fixed 16-feature interaction vector for one question-candidate pair.

    Layout: [dot, cosine] for each of pooled*cimg, pooled*ctext, qtext*cimg,
    qtext*ctext (8), then max/mean/min of per-patch dots with cimg (3) and
    with ctext (3), the retrieval score (1), and an image-absence flag (1).
    A missing candidate image acts as a zero vector with the flag set.
    """
    dim = q.pooled_patch_vec.shape[0]
    absent = c.cimg_vec is None
    cimg = np.zeros(dim) if absent else np.asarray(c.cimg_vec, dtype=np.float64)
    ctext = np.asarray(c.ctext_vec, dtype=np.float64)
    if cimg.shape != (dim,) or ctext.shape != (dim,):
        raise RerankerError(
            f"candidate vectors must have dim {dim}, got {cimg.shape} / {ctext.shape}"
        )
    pooled = np.asarray(q.pooled_patch_vec, dtype=np.float64)
    qtext = np.asarray(q.qtext_vec, dtype=np.float64)
    if qtext.shape != (dim,):
        raise RerankerError(f"qtext dim {qtext.shape} != patch dim {dim}")

    patch_dots_img = np.asarray(q.patch_vecs, dtype=np.float64) @ cimg
    patch_dots_txt = np.asarray(q.patch_vecs, dtype=np.float64) @ ctext

    features = np.empty(FEATURE_DIM, dtype=np.float64)
    features[0] = pooled @ cimg
    features[1] = _cosine(pooled, cimg)
    features[2] = pooled @ ctext
    features[3] = _cosine(pooled, ctext)
    features[4] = qtext @ cimg
    features[5] = _cosine(qtext, cimg)
    features[6] = qtext @ ctext
    features[7] = _cosine(qtext, ctext)
    features[8] = patch_dots_img.max()
    features[9] = patch_dots_img.mean()
    features[10] = patch_dots_img.min()
    features[11] = patch_dots_txt.max()
    features[12] = patch_dots_txt.mean()
    features[13] = patch_dots_txt.min()
    features[14] = retrieval_score
    features[15] = 1.0 if absent else 0.0
    return features


# ---------------------------------------------------------------------------
# Scoring model
# ---------------------------------------------------------------------------

@dataclass
class RerankerModel:
    """One tanh hidden layer to a single unnormalized relevance scalar."""

    feature_dim: int
    hidden_width: int
    w1: np.ndarray  # (hidden_width, feature_dim)
    b1: np.ndarray  # (hidden_width,)
    w2: np.ndarray  # (hidden_width,)
    b2: float
    seed: int = 0

    @classmethod
    def initialize(
        cls, feature_dim: int = FEATURE_DIM, hidden_width: int = 32, seed: int = 0
    ) -> "RerankerModel":
        """Symmetric uniform init scaled by 1/sqrt(fan-in); biases zero."""
        rng = np.random.default_rng(seed)
        bound1 = 1.0 / np.sqrt(feature_dim)
        bound2 = 1.0 / np.sqrt(hidden_width)
        return cls(
            feature_dim=feature_dim,
            hidden_width=hidden_width,
            w1=rng.uniform(-bound1, bound1, size=(hidden_width, feature_dim)),
            b1=np.zeros(hidden_width),
            w2=rng.uniform(-bound2, bound2, size=hidden_width),
            b2=0.0,
            seed=seed,
        )

    def clone(self) -> "RerankerModel":
        return RerankerModel(
            feature_dim=self.feature_dim,
            hidden_width=self.hidden_width,
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2,
            seed=self.seed,
        )

    def save(self, path: str, config: dict | None = None) -> None:
        obj = {
            "feature_dim": self.feature_dim,
            "hidden_width": self.hidden_width,
            "seed": self.seed,
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2,
        }
        if config is not None:
            obj["config"] = config
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as handle:
            json.dump(obj, handle, sort_keys=True, indent=1)
            handle.write("\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "RerankerModel":
        with open(path, "r", encoding="utf-8") as handle:
            obj = json.load(handle)
        model = cls(
            feature_dim=int(obj["feature_dim"]),
            hidden_width=int(obj["hidden_width"]),
            w1=np.array(obj["w1"], dtype=np.float64),
            b1=np.array(obj["b1"], dtype=np.float64),
            w2=np.array(obj["w2"], dtype=np.float64),
            b2=float(obj["b2"]),
            seed=int(obj.get("seed", 0)),
        )
        if model.w1.shape != (model.hidden_width, model.feature_dim):
            raise RerankerError(f"checkpoint w1 shape {model.w1.shape} inconsistent")
        if model.b1.shape != (model.hidden_width,) or model.w2.shape != (model.hidden_width,):
            raise RerankerError("checkpoint bias/output shapes inconsistent")
        return model


def score(model: RerankerModel, features: np.ndarray) -> float:
    """Scalar relevance w2 . tanh(W1 f + b1) + b2."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (model.feature_dim,):
        raise RerankerError(
            f"feature dim {features.shape} != model feature_dim {model.feature_dim}"
        )
    hidden = np.tanh(model.w1 @ features + model.b1)
    return float(model.w2 @ hidden + model.b2)


def score_matrix(model: RerankerModel, features: np.ndarray) -> np.ndarray:
    """Scores for an (n, feature_dim) feature matrix."""
    hidden = np.tanh(features @ model.w1.T + model.b1)
    return hidden @ model.w2 + model.b2


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def pairwise_loss(labels: np.ndarray, scores: np.ndarray) -> float:
    """Pairwise logistic ranking loss over all label-ordered pairs.

    For every ordered pair with a strictly greater label, adds
    softplus(s_lower - s_higher), evaluated stably via logaddexp.
    """
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise RerankerError(f"labels shape {labels.shape} != scores shape {scores.shape}")
    diff = scores[None, :] - scores[:, None]  # diff[i, j] = s_j - s_i
    mask = labels[:, None] > labels[None, :]
    if not mask.any():
        return 0.0
    return float(np.logaddexp(0.0, diff[mask]).sum())


def pairwise_grad(labels: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """d(pairwise_loss)/d(scores)."""
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise RerankerError(f"labels shape {labels.shape} != scores shape {scores.shape}")
    diff = scores[None, :] - scores[:, None]
    mask = labels[:, None] > labels[None, :]
    p = _sigmoid(diff) * mask
    # Pair (i, j) with r_i > r_j contributes -p to ds_i and +p to ds_j.
    return p.sum(axis=0) - p.sum(axis=1)


def model_grads(
    model: RerankerModel, features: np.ndarray, dscores: np.ndarray
) -> list[np.ndarray]:
    """Backprop dloss/dscores through the scorer to [w1, b1, w2, b2] grads."""
    pre = features @ model.w1.T + model.b1  # (n, hidden)
    hidden = np.tanh(pre)
    g_w2 = hidden.T @ dscores
    g_b2 = np.array([dscores.sum()])
    d_hidden = np.outer(dscores, model.w2) * (1.0 - hidden ** 2)
    g_w1 = d_hidden.T @ features
    g_b1 = d_hidden.sum(axis=0)
    return [g_w1, g_b1, g_w2, g_b2]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class RerankExample:
    """Precomputed per-question training record."""

    question_id: str
    candidate_ids: list[str]
    features: np.ndarray  # (n_candidates, FEATURE_DIM)
    labels: np.ndarray  # (n_candidates,)


@dataclass
class RerankerTrainConfig:
    """Defaults follow the documented training setup (lr 1e-4, batch 8,
    20K steps, 20 sampled candidates, Hits@k checkpointing); the experiment
    harness swaps in a faster desk-scale profile."""

    steps: int = 20000
    lr: float = 1e-4
    batch_size: int = 8
    sample_size: int = 20
    eval_interval: int = 500
    hits_k: int = 5
    hidden_width: int = 32
    seed: int = 0


@dataclass
class RerankerTrainResult:
    model: RerankerModel
    best_step: int
    best_dev_hits: float
    history: list[tuple[int, float]] = field(default_factory=list)


def build_examples(
    questions: list[Question],
    lists: dict[str, RankedList],
    labels: LabelSet,
    question_contexts: dict[str, QuestionContext],
    candidate_contexts: dict[str, CandidateContext],
) -> list[RerankExample]:
    """Assemble feature matrices and label vectors per question."""
    examples = []
    for question in questions:
        qid = question.question_id
        if qid not in lists:
            raise RerankerError(f"question {qid} has no retrieval list")
        if not labels.has_question(qid):
            raise RerankerError(f"question {qid} has no labels")
        ranked = lists[qid]
        qctx = question_contexts[qid]
        feats = np.stack(
            [
                build_features(qctx, candidate_contexts[cid], score)
                for cid, score in ranked.items
            ]
        )
        rel = np.array([labels.get(qid, cid) for cid, _ in ranked.items])
        examples.append(
            RerankExample(
                question_id=qid,
                candidate_ids=ranked.candidate_ids(),
                features=feats,
                labels=rel,
            )
        )
    return examples


def train_reranker(
    train_examples: list[RerankExample],
    dev_examples: list[RerankExample],
    dev_lists: list[RankedList],
    dev_labels: LabelSet,
    config: RerankerTrainConfig,
) -> RerankerTrainResult:
    """Pairwise-logistic training with Hits@k checkpoint selection.

    Each step samples ``batch_size`` questions uniformly, samples up to
    ``sample_size`` of each question's retrieved candidates without
    replacement, and applies one Adam update on the mean pairwise loss
    gradient.  Every ``eval_interval`` steps the current model reranks the dev
    lists; the parameters with the best dev Hits@k are returned.  Fully
    deterministic for a fixed config.
    """
    if not train_examples:
        raise RerankerError("empty training set")
    rng = np.random.default_rng(config.seed)
    model = RerankerModel.initialize(
        feature_dim=FEATURE_DIM, hidden_width=config.hidden_width, seed=config.seed
    )
    b2_box = np.array([model.b2], dtype=np.float64)
    params = [model.w1, model.b1, model.w2, b2_box]
    optimizer = Adam(params, lr=config.lr)

    def dev_hits(current: RerankerModel) -> float:
        reranked = [rerank_example(current, ex) for ex in dev_examples]
        return mean_hits_at_k(reranked, dev_labels, config.hits_k)

    best = model.clone()
    best_hits = dev_hits(model) if dev_examples else float("-inf")
    best_step = 0
    history = [(0, best_hits)] if dev_examples else []

    for step in range(1, config.steps + 1):
        grads = [np.zeros_like(p) for p in params]
        picks = rng.integers(0, len(train_examples), size=config.batch_size)
        for pick in picks:
            example = train_examples[int(pick)]
            n = len(example.candidate_ids)
            take = min(config.sample_size, n)
            sel = rng.choice(n, size=take, replace=False)
            feats = example.features[sel]
            rel = example.labels[sel]
            scores = score_matrix(model, feats)
            dscores = pairwise_grad(rel, scores)
            for total, part in zip(grads, model_grads(model, feats, dscores)):
                total += part
        for g in grads:
            g /= config.batch_size
        optimizer.step(grads)
        model.b2 = float(b2_box[0])

        if dev_examples and (step % config.eval_interval == 0 or step == config.steps):
            hits = dev_hits(model)
            history.append((step, hits))
            # Ties keep the later checkpoint: of the checkpoints achieving the
            # best dev Hits@k, prefer the one trained longest.
            if hits >= best_hits:
                best_hits = hits
                best = model.clone()
                best_step = step

    if not dev_examples:
        best, best_hits, best_step = model, float("nan"), config.steps
    return RerankerTrainResult(
        model=best, best_step=best_step, best_dev_hits=best_hits, history=history
    )


# ---------------------------------------------------------------------------
# Applying the model
# ---------------------------------------------------------------------------

def rerank_example(model: RerankerModel, example: RerankExample) -> RankedList:
    """Rerank a precomputed example; scores become the model outputs."""
    scores = score_matrix(model, example.features)
    order = sorted(
        range(len(example.candidate_ids)),
        key=lambda i: (-scores[i], example.candidate_ids[i]),
    )
    return RankedList(
        question_id=example.question_id,
        items=[(example.candidate_ids[i], float(scores[i])) for i in order],
    )


def rerank(
    model: RerankerModel,
    qctx: QuestionContext,
    ranked: RankedList,
    candidate_contexts: dict[str, CandidateContext],
) -> RankedList:
    """Reorder a retrieval list by model score; ties break on ascending id."""
    scored: list[tuple[str, float]] = []
    for cid, retrieval_score in ranked.items:
        if cid not in candidate_contexts:
            raise RerankerError(f"missing candidate context for {cid}")
        features = build_features(qctx, candidate_contexts[cid], retrieval_score)
        scored.append((cid, score(model, features)))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return RankedList(question_id=ranked.question_id, items=scored)
