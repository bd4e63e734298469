"""Sliding-window patch grids and exact inner-product retrieval.

Retrieval is deliberately exact (full matmul against the candidate table, no
approximate index): desk-scale candidate sets are small and exactness lets the
tests compare against brute-force oracles, including tie-breaks.

Ranked lists serialize as JSON Lines ``{"question_id", "items": [[cid, score],
...]}`` with scores written at full float64 precision (well past the required
nine significant digits) so reloading reproduces them exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .corpus import EmbeddingTable


class RetrievalError(ValueError):
    """Raised for invalid grid parameters or mismatched dimensions."""


@dataclass(frozen=True)
class PatchRect:
    """One sliding-window position; (x, y) is the top-left corner."""

    patch_index: int
    x: int
    y: int
    kernel: int


@dataclass
class RankedList:
    """Ordered (candidate_id, score) pairs for one question."""

    question_id: str
    items: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        prev = None
        for cid, score in self.items:
            if cid in seen:
                raise RetrievalError(f"duplicate candidate {cid} in list {self.question_id}")
            seen.add(cid)
            if prev is not None and score > prev:
                raise RetrievalError(
                    f"scores not non-increasing in list {self.question_id} at {cid}"
                )
            prev = score

    def candidate_ids(self) -> list[str]:
        return [cid for cid, _ in self.items]


def _axis_offsets(extent: int, kernel: int, stride: int) -> list[int]:
    last = extent - kernel
    offsets = list(range(0, last + 1, stride))
    if offsets[-1] != last:
        offsets.append(last)  # flush to the edge so borders are covered
    return offsets


def patch_grid(width: int, height: int, kernel: int, stride: int) -> list[PatchRect]:
    """Sliding-window positions over an image, row-major.

    Offsets along each axis are multiples of ``stride`` up to ``extent -
    kernel``; when the stride does not divide that span, a final flush
    position at ``extent - kernel`` is appended.
    """
    if kernel < 1:
        raise RetrievalError(f"kernel must be positive, got {kernel}")
    if stride < 1:
        raise RetrievalError(f"stride must be positive, got {stride}")
    if kernel > width or kernel > height:
        raise RetrievalError(
            f"kernel {kernel} exceeds image extent {width}x{height}"
        )
    xs = _axis_offsets(width, kernel, stride)
    ys = _axis_offsets(height, kernel, stride)
    patches = []
    index = 0
    for y in ys:
        for x in xs:
            patches.append(PatchRect(patch_index=index, x=x, y=y, kernel=kernel))
            index += 1
    return patches


def top_k(query: np.ndarray, table: EmbeddingTable, k: int) -> list[tuple[str, float]]:
    """Exact top-k by inner product; ties broken by ascending id."""
    query = np.asarray(query)
    if query.shape != (table.dim,):
        raise RetrievalError(f"query dim {query.shape} != table dim {table.dim}")
    if k < 1:
        raise RetrievalError(f"k must be >= 1, got {k}")
    if len(table) == 0:
        return []
    scores = table.vectors.astype(np.float64) @ query.astype(np.float64)
    ids = np.asarray(table.ids)
    # lexsort: last key is primary, so sort by -score then id ascending.
    order = np.lexsort((ids, -scores))[: k]
    return [(str(ids[i]), float(scores[i])) for i in order]


def retrieve_and_aggregate(
    question_id: str,
    patch_vectors: list[np.ndarray],
    table: EmbeddingTable,
    k: int,
    per_patch_k: int | None = None,
) -> RankedList:
    """Merge per-patch top-k lists, keeping each candidate's maximum score.

    ``per_patch_k`` defaults to ``k``; the two are exposed separately because
    the per-patch depth and the final aggregate depth need not agree.
    """
    if not patch_vectors:
        raise RetrievalError(f"question {question_id}: empty patch list")
    if per_patch_k is None:
        per_patch_k = k
    best: dict[str, float] = {}
    for vec in patch_vectors:
        for cid, score in top_k(vec, table, per_patch_k):
            if cid not in best or score > best[cid]:
                best[cid] = score
    merged = sorted(best.items(), key=lambda item: (-item[1], item[0]))[: k]
    return RankedList(question_id=question_id, items=[(cid, s) for cid, s in merged])


def retrieve_for_questions(
    questions,
    patch_table: EmbeddingTable,
    table: EmbeddingTable,
    k: int,
    per_patch_k: int | None = None,
    jobs: int = 1,
) -> dict[str, "RankedList"]:
    """Aggregate retrieval for every question's patch set.

    Per-question work is pure, so ``jobs > 1`` fans out over a thread pool;
    results are reduced in question order either way, keeping output
    independent of the worker count.
    """
    from .corpus import patch_ids

    def _one(question) -> tuple[str, RankedList]:
        vectors = [
            patch_table[pid] for pid in patch_ids(question.image_id, patch_table)
        ]
        ranked = retrieve_and_aggregate(
            question.question_id, vectors, table, k, per_patch_k
        )
        return question.question_id, ranked

    if jobs <= 1:
        return dict(_one(q) for q in questions)
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return dict(pool.map(_one, questions))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_ranked_lists(lists: list[RankedList], path: str, meta: dict | None = None) -> None:
    """Write ranked lists as JSON Lines atomically."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as handle:
        if meta is not None:
            handle.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for ranked in lists:
            obj = {
                "question_id": ranked.question_id,
                "items": [[cid, score] for cid, score in ranked.items],
            }
            handle.write(json.dumps(obj) + "\n")
    os.replace(tmp, path)


def load_ranked_lists(path: str) -> list[RankedList]:
    lists: list[RankedList] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RetrievalError(f"{path}: malformed JSON at line {lineno}: {exc}") from exc
            if "_meta" in obj:
                continue
            items = [(str(cid), float(score)) for cid, score in obj["items"]]
            lists.append(RankedList(question_id=obj["question_id"], items=items))
    return lists
