"""Data model, file ingestion, answer normalization, and the synthetic corpus generator.

All pipeline stages exchange data through the types defined here: questions with
their 10 answer annotations, multi-modal knowledge candidates, and embedding
tables mapping string ids to fixed-dimension vectors.

File formats:
  - Questions / candidates / labels: JSON Lines, UTF-8, one object per line.
    Lines whose object carries a ``_meta`` key are headers written by the CLI
    (embedded effective config) and are skipped by every loader.
  - EMB1 binary embeddings: magic ``EMB1`` (4 bytes), dim as uint32 LE, count
    as uint32 LE, then ``count`` records of [id length uint32 LE, id bytes
    UTF-8, dim float32 LE values].  A ``.jsonl`` fallback with one
    ``{"id", "vector"}`` object per line is also supported.
"""

from __future__ import annotations

import json
import os
import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np

ARTICLES = ("a", "an", "the")

# Single-token answer strings for synthetic topics; disjoint from every word
# used by the caption/question templates below.
_ANSWER_WORDS = [
    "amber", "basil", "cedar", "dahlia", "ember", "falcon", "garnet", "heron",
    "indigo", "jasper", "kestrel", "lotus", "maple", "nectar", "onyx", "poppy",
    "quartz", "raven", "saffron", "tulip", "umber", "violet", "walnut", "yarrow",
    "zephyr", "alder", "birch", "coral", "dune", "elm", "fern", "grove",
    "hazel", "iris", "juniper", "krill", "laurel", "mesa", "nimbus", "opal",
    "pearl", "quince", "reed", "sage", "thistle", "urchin", "vale", "willow",
    "xenon", "yucca", "zinnia", "aspen", "bramble", "clover", "delta", "echo",
    "flint", "gale", "harbor", "isle", "jade", "knoll", "lagoon", "marsh",
]

class CorpusError(ValueError):
    """Raised for malformed input files and invariant violations."""


@dataclass
class Question:
    """A visual question with exactly 10 answer annotations."""

    question_id: str
    image_id: str
    text: str
    answers: list[str]
    padding: int = 0  # annotations added to reach 10

    def __post_init__(self) -> None:
        if not self.question_id:
            raise CorpusError("question_id must be non-empty")
        if len(self.answers) != 10:
            raise CorpusError(
                f"question {self.question_id}: expected 10 answers, got {len(self.answers)}"
            )


@dataclass
class Candidate:
    """A multi-modal knowledge item; text-only items have no image_id."""

    candidate_id: str
    caption: str
    image_id: str | None = None
    section_text: str | None = None

    def __post_init__(self) -> None:
        if not self.candidate_id:
            raise CorpusError("candidate_id must be non-empty")
        if not self.caption:
            raise CorpusError(f"candidate {self.candidate_id}: caption must be non-empty")

    def knowledge_text(self, include_section: bool = True) -> str:
        """Caption plus section text (when present), joined by a space."""
        if include_section and self.section_text:
            return f"{self.caption} {self.section_text}"
        return self.caption


class EmbeddingTable:
    """Immutable map from id string to a fixed-dimension float32 vector.

    Vectors are stored as one (n, dim) float32 matrix so inner-product search
    can run as a single matmul.  Construction validates finiteness, dimension
    consistency, and id uniqueness.
    """

    def __init__(self, dim: int, entries: dict[str, np.ndarray] | None = None):
        if dim <= 0:
            raise CorpusError(f"dim must be positive, got {dim}")
        self.dim = int(dim)
        self._ids: list[str] = []
        self._index: dict[str, int] = {}
        rows: list[np.ndarray] = []
        for key, vec in (entries or {}).items():
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (self.dim,):
                raise CorpusError(f"dim mismatch at id {key}: expected {self.dim}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise CorpusError(f"non-finite vector at id {key}")
            if key in self._index:
                raise CorpusError(f"duplicate embedding id {key}")
            self._index[key] = len(self._ids)
            self._ids.append(key)
            rows.append(arr)
        self.vectors = (
            np.vstack(rows) if rows else np.zeros((0, self.dim), dtype=np.float32)
        )

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def __getitem__(self, key: str) -> np.ndarray:
        return self.vectors[self._index[key]]

    def row(self, key: str) -> int:
        return self._index[key]

    def items(self):
        for key in self._ids:
            yield key, self.vectors[self._index[key]]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        return (
            self.dim == other.dim
            and self._ids == other._ids
            and self.vectors.shape == other.vectors.shape
            and bool(np.all(self.vectors == other.vectors))
        )


@dataclass
class SyntheticConfig:
    """Configuration for the deterministic synthetic corpus generator."""

    n_questions: int = 500
    n_candidates: int = 100
    n_topics: int = 20
    dim: int = 16
    patches_per_image: int = 6
    noise_sigma: float = 0.08
    distractor_rate: float = 0.5
    answer_injection_rate: float = 1.0
    seed: int = 0
    # Extra desk-scale knobs (defaults keep the base construction unchanged):
    # probability that the topic answer also appears in the question text, a
    # Zipf-like exponent skewing how often each topic is asked about, and the
    # noise multiplier for question-text embeddings relative to noise_sigma
    # (question text is a weaker topic signal than image patches).
    answer_leak_rate: float = 0.0
    topic_skew: float = 0.0
    question_text_noise_factor: float = 6.0

    def __post_init__(self) -> None:
        for name in ("n_questions", "n_candidates", "n_topics", "dim", "patches_per_image"):
            if getattr(self, name) <= 0:
                raise CorpusError(f"{name} must be a positive integer")
        if self.n_topics > self.n_candidates:
            raise CorpusError("n_topics must not exceed n_candidates")
        if self.dim < 2:
            raise CorpusError("dim must be at least 2")
        if self.noise_sigma < 0:
            raise CorpusError("noise_sigma must be >= 0")
        for name in ("distractor_rate", "answer_injection_rate", "answer_leak_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise CorpusError(f"{name} must be in [0, 1]")
        if self.question_text_noise_factor < 0:
            raise CorpusError("question_text_noise_factor must be >= 0")
        if self.seed < 0:
            raise CorpusError("seed must be unsigned")


@dataclass
class SyntheticBundle:
    """Everything generate_synthetic produces, ready for the pipeline stages."""

    questions: list[Question]
    candidates: list[Candidate]
    patch_table: EmbeddingTable  # question image patches, keyed "<image_id>#<patch_index>"
    cand_image_table: EmbeddingTable  # keyed by candidate image_id
    cand_text_table: EmbeddingTable  # keyed by candidate_id
    qtext_table: EmbeddingTable  # keyed by question_id
    question_topics: dict[str, int]
    candidate_topics: dict[str, int]
    topic_answers: dict[int, str]


# ---------------------------------------------------------------------------
# Answer normalization
# ---------------------------------------------------------------------------

def normalize_answer(text: str) -> str:
    """Normalize an answer string for matching.

    Lowercases, maps every non-alphanumeric character to a space, collapses
    whitespace, strips leading articles (repeatedly, so the result is a fixed
    point), and trims.  Idempotent.
    """
    lowered = text.lower()
    cleaned = "".join(ch if ch.isalnum() else " " for ch in lowered)
    tokens = cleaned.split()
    while tokens and tokens[0] in ARTICLES:
        tokens.pop(0)
    return " ".join(tokens)


# ---------------------------------------------------------------------------
# JSON Lines loaders
# ---------------------------------------------------------------------------

def _iter_jsonl(path: str):
    """Yield (line_number, object) for each data line, skipping _meta headers."""
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: malformed JSON at line {lineno}: {exc}") from exc
            if isinstance(obj, dict) and "_meta" in obj:
                continue
            yield lineno, obj


def _pad_answers(answers: list[str], qid: str) -> tuple[list[str], int]:
    """Pad a short annotation list to 10 by repeating the most frequent answer."""
    if len(answers) > 10:
        raise CorpusError(f"question {qid}: more than 10 answers ({len(answers)})")
    if len(answers) == 10:
        return list(answers), 0
    if not answers:
        raise CorpusError(f"question {qid}: empty answers list")
    counts = Counter(answers)
    # Ties broken by first occurrence in the source list.
    modal = max(answers, key=lambda a: (counts[a], -answers.index(a)))
    padding = 10 - len(answers)
    return list(answers) + [modal] * padding, padding


def load_questions(path: str) -> list[Question]:
    """Load questions from JSON Lines, preserving input order.

    Short annotation lists are padded to 10 by repeating the modal answer and
    the padding count is recorded on the question.
    """
    questions: list[Question] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        try:
            qid = obj["question_id"]
            image_id = obj["image_id"]
            text = obj["text"]
            answers = obj["answers"]
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"{path}: missing field at line {lineno}: {exc}") from exc
        if not isinstance(answers, list) or not all(isinstance(a, str) for a in answers):
            raise CorpusError(f"{path}: answers must be a list of strings at line {lineno}")
        if qid in seen:
            raise CorpusError(f"duplicate question_id {qid}")
        seen.add(qid)
        padded, padding = _pad_answers(answers, qid)
        questions.append(Question(qid, image_id, text, padded, padding=padding))
    return questions


def load_candidates(path: str) -> list[Candidate]:
    """Load candidates from JSON Lines, preserving input order."""
    candidates: list[Candidate] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        try:
            cid = obj["candidate_id"]
            caption = obj["caption"]
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"{path}: missing field at line {lineno}: {exc}") from exc
        if cid in seen:
            raise CorpusError(f"duplicate candidate_id {cid}")
        seen.add(cid)
        candidates.append(
            Candidate(
                candidate_id=cid,
                caption=caption,
                image_id=obj.get("image_id"),
                section_text=obj.get("section_text"),
            )
        )
    return candidates


def save_questions(questions: list[Question], path: str, meta: dict | None = None) -> None:
    records = [
        {
            "question_id": q.question_id,
            "image_id": q.image_id,
            "text": q.text,
            "answers": q.answers,
        }
        for q in questions
    ]
    write_jsonl(records, path, meta=meta)


def save_candidates(candidates: list[Candidate], path: str, meta: dict | None = None) -> None:
    records = []
    for c in candidates:
        obj: dict = {"candidate_id": c.candidate_id, "caption": c.caption}
        if c.image_id is not None:
            obj["image_id"] = c.image_id
        if c.section_text is not None:
            obj["section_text"] = c.section_text
        records.append(obj)
    write_jsonl(records, path, meta=meta)


def write_jsonl(records: list[dict], path: str, meta: dict | None = None) -> None:
    """Write records as JSON Lines atomically (temp file + rename)."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as handle:
        if meta is not None:
            handle.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for record in records:
            handle.write(json.dumps(record) + "\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# EMB1 embedding files
# ---------------------------------------------------------------------------

_EMB1_MAGIC = b"EMB1"


def write_embeddings(table: EmbeddingTable, path: str) -> None:
    """Write an embedding table; EMB1 binary unless the path ends in .jsonl."""
    if path.endswith(".jsonl"):
        records = [
            {"id": key, "vector": [float(x) for x in vec]} for key, vec in table.items()
        ]
        write_jsonl(records, path)
        return
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as handle:
        handle.write(_EMB1_MAGIC)
        handle.write(struct.pack("<II", table.dim, len(table)))
        for key, vec in table.items():
            encoded = key.encode("utf-8")
            handle.write(struct.pack("<I", len(encoded)))
            handle.write(encoded)
            handle.write(vec.astype("<f4").tobytes())
    os.replace(tmp, path)


def load_embeddings(path: str) -> EmbeddingTable:
    """Load an embedding table, sniffing EMB1 binary vs JSON Lines."""
    with open(path, "rb") as handle:
        head = handle.read(4)
    if head == _EMB1_MAGIC:
        return _load_emb1(path)
    if head[:1].lstrip() in (b"{", b""):
        return _load_embeddings_jsonl(path)
    raise CorpusError(f"{path}: bad magic {head!r}")


def _load_emb1(path: str) -> EmbeddingTable:
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != _EMB1_MAGIC:
            raise CorpusError(f"{path}: bad magic {magic!r}")
        header = handle.read(8)
        if len(header) != 8:
            raise CorpusError(f"{path}: truncated header")
        dim, count = struct.unpack("<II", header)
        entries: dict[str, np.ndarray] = {}
        for i in range(count):
            raw_len = handle.read(4)
            if len(raw_len) != 4:
                raise CorpusError(f"{path}: truncated record {i}")
            (id_len,) = struct.unpack("<I", raw_len)
            raw_id = handle.read(id_len)
            if len(raw_id) != id_len:
                raise CorpusError(f"{path}: truncated record {i}")
            raw_vec = handle.read(4 * dim)
            if len(raw_vec) != 4 * dim:
                raise CorpusError(f"{path}: truncated record {i}")
            key = raw_id.decode("utf-8")
            if key in entries:
                raise CorpusError(f"duplicate embedding id {key}")
            entries[key] = np.frombuffer(raw_vec, dtype="<f4").astype(np.float32)
    return EmbeddingTable(dim, entries)


def _load_embeddings_jsonl(path: str) -> EmbeddingTable:
    entries: dict[str, np.ndarray] = {}
    dim: int | None = None
    for lineno, obj in _iter_jsonl(path):
        try:
            key = obj["id"]
            vector = obj["vector"]
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"{path}: missing field at line {lineno}: {exc}") from exc
        arr = np.asarray(vector, dtype=np.float32)
        if dim is None:
            dim = int(arr.shape[0])
        if arr.shape != (dim,):
            raise CorpusError(f"dim mismatch at id {key}: expected {dim}, got {arr.shape[0]}")
        if key in entries:
            raise CorpusError(f"duplicate embedding id {key}")
        entries[key] = arr
    if dim is None:
        raise CorpusError(f"{path}: empty embedding file")
    return EmbeddingTable(dim, entries)


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

def _topic_answer(topic: int) -> str:
    if topic < len(_ANSWER_WORDS):
        return _ANSWER_WORDS[topic]
    return f"entity{topic}"


def generate_synthetic(config: SyntheticConfig) -> SyntheticBundle:
    """Generate a deterministic synthetic corpus with planted topic structure.

    Each topic owns a unit direction and an answer word.  Question patches are
    the topic direction plus Gaussian noise, except each patch independently
    becomes a distractor (a different topic's direction plus noise) with
    probability ``distractor_rate`` -- so a single patch can score high against
    an unrelated candidate even when the question as a whole should not.
    Candidates of the question's topic carry that direction in both image and
    text embeddings, and their captions contain the topic's answer word with
    probability ``answer_injection_rate``.
    """
    rng = np.random.default_rng(config.seed)
    n_topics = config.n_topics

    dirs = rng.standard_normal((n_topics, config.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    topic_answers = {t: _topic_answer(t) for t in range(n_topics)}

    # Topic popularity: uniform at skew 0, Zipf-like otherwise.
    weights = np.array([1.0 / (t + 1) ** config.topic_skew for t in range(n_topics)])
    weights /= weights.sum()

    sigma = config.noise_sigma

    candidates: list[Candidate] = []
    candidate_topics: dict[str, int] = {}
    cand_image_entries: dict[str, np.ndarray] = {}
    cand_text_entries: dict[str, np.ndarray] = {}
    for j in range(config.n_candidates):
        topic = j % n_topics
        cid = f"c{j:04d}"
        image_id = f"wi{j:04d}"
        injected = rng.random() < config.answer_injection_rate
        if injected:
            caption = f"gallery record {j}: study of {topic_answers[topic]} motif"
        else:
            caption = f"gallery record {j}: untitled study, catalogue {cid}"
        candidates.append(Candidate(candidate_id=cid, caption=caption, image_id=image_id))
        candidate_topics[cid] = topic
        cand_image_entries[image_id] = dirs[topic] + sigma * rng.standard_normal(config.dim)
        cand_text_entries[cid] = dirs[topic] + sigma * rng.standard_normal(config.dim)

    questions: list[Question] = []
    question_topics: dict[str, int] = {}
    patch_entries: dict[str, np.ndarray] = {}
    qtext_entries: dict[str, np.ndarray] = {}
    for i in range(config.n_questions):
        topic = int(rng.choice(n_topics, p=weights))
        qid = f"q{i:04d}"
        image_id = f"qi{i:04d}"
        answer = topic_answers[topic]
        leaked = rng.random() < config.answer_leak_rate
        if leaked:
            text = f"which motif appears in exhibit {i} beside the {answer} piece"
        else:
            text = f"which motif appears in exhibit {i}"
        questions.append(Question(qid, image_id, text, [answer] * 10))
        question_topics[qid] = topic

        for p in range(config.patches_per_image):
            if n_topics > 1 and rng.random() < config.distractor_rate:
                offset = int(rng.integers(1, n_topics))
                patch_topic = (topic + offset) % n_topics
            else:
                patch_topic = topic
            patch_entries[f"{image_id}#{p}"] = dirs[patch_topic] + sigma * rng.standard_normal(
                config.dim
            )
        qtext_entries[qid] = dirs[
            topic
        ] + config.question_text_noise_factor * sigma * rng.standard_normal(config.dim)

    return SyntheticBundle(
        questions=questions,
        candidates=candidates,
        patch_table=EmbeddingTable(config.dim, patch_entries),
        cand_image_table=EmbeddingTable(config.dim, cand_image_entries),
        cand_text_table=EmbeddingTable(config.dim, cand_text_entries),
        qtext_table=EmbeddingTable(config.dim, qtext_entries),
        question_topics=question_topics,
        candidate_topics=candidate_topics,
        topic_answers=topic_answers,
    )


def patch_ids(image_id: str, table: EmbeddingTable) -> list[str]:
    """All patch ids "<image_id>#<k>" present in a table, in patch order."""
    ids = []
    k = 0
    while f"{image_id}#{k}" in table:
        ids.append(f"{image_id}#{k}")
        k += 1
    if not ids:
        raise CorpusError(f"no patches found for image {image_id}")
    return ids
