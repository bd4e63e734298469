"""Retrieval, reranking, and reading pipeline for knowledge-intensive VQA.

The pipeline operates on precomputed multi-modal embeddings: sliding-window
image patches retrieve knowledge candidates by inner product, a cross-item
reranker trained with distant supervision reorders them, and a desk-scale
reader turns the top candidates into an answer string.  An experiment harness
reproduces the qualitative orderings between candidate sources, including the
training/testing discrepancy.
"""

from .corpus import (
    Candidate,
    CorpusError,
    EmbeddingTable,
    Question,
    SyntheticBundle,
    SyntheticConfig,
    generate_synthetic,
    load_candidates,
    load_embeddings,
    load_questions,
    normalize_answer,
    save_candidates,
    save_questions,
    write_embeddings,
)
from .experiments import (
    CandidateSource,
    DatasetBundle,
    ExperimentConfig,
    format_report,
    run_ablation,
    run_discrepancy_matrix,
)
from .reader import (
    AnswerVocab,
    ReaderModel,
    ReaderTrainConfig,
    build_answer_vocab,
    fit_reader,
    inject_candidates,
    predict,
    reader_features,
    train_reader,
)
from .reranker import (
    CandidateContext,
    QuestionContext,
    RerankerModel,
    RerankerTrainConfig,
    build_features,
    pairwise_grad,
    pairwise_loss,
    rerank,
    score,
    train_reranker,
)
from .retrieval import (
    PatchRect,
    RankedList,
    RetrievalError,
    load_ranked_lists,
    patch_grid,
    retrieve_and_aggregate,
    save_ranked_lists,
    top_k,
)
from .supervision import (
    Label,
    LabelSet,
    build_label_set,
    distant_label,
    distillation_labels,
    hits_at_k,
    match_count,
    mean_hits_at_k,
    oracle_rank,
    vqa_accuracy,
)

__version__ = "0.1.0"
