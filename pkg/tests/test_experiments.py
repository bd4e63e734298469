"""Tests for the ablation/discrepancy harness on a small synthetic bundle."""

import numpy as np
import pytest

from kivqa.corpus import SyntheticConfig, generate_synthetic
from kivqa.experiments import (
    CandidateSource,
    DatasetBundle,
    ExperimentConfig,
    ExperimentError,
    cell_mean,
    cell_values,
    format_report,
    run_ablation,
    run_discrepancy_matrix,
    save_report,
)
from kivqa.reader import ReaderTrainConfig
from kivqa.reranker import RerankerTrainConfig

NO = CandidateSource.NO_RETRIEVAL
R = CandidateSource.RETRIEVAL
RR = CandidateSource.RERANKED
O = CandidateSource.ORACLE


@pytest.fixture(scope="module")
def small_bundle():
    config = SyntheticConfig(
        n_questions=90,
        n_candidates=40,
        n_topics=8,
        dim=8,
        patches_per_image=4,
        noise_sigma=0.08,
        distractor_rate=0.5,
        answer_injection_rate=0.9,
        answer_leak_rate=0.5,
        question_text_noise_factor=6.0,
        seed=1,
    )
    return DatasetBundle.from_synthetic(generate_synthetic(config))


def _fast_config():
    return ExperimentConfig(
        reader_K=5,
        reranker=RerankerTrainConfig(
            steps=120, lr=1e-3, batch_size=4, sample_size=10, eval_interval=40, hits_k=1, hidden_width=16
        ),
        reader=ReaderTrainConfig(steps=80, lr=3e-3, batch_size=16),
    )


def test_report_structure_and_mean_invariant(small_bundle):
    report = run_ablation(small_bundle, seeds=[0, 1], config=_fast_config())
    assert report["report_version"] == 1
    assert report["kind"] == "ablation"
    assert [cell["row"] for cell in report["cells"]] == ["no_retrieval", "retrieval", "reranked"]
    for cell in report["cells"]:
        assert len(cell["per_seed"]) == 2
        assert cell["mean"] == pytest.approx(float(np.mean(cell["per_seed"])), abs=1e-15)
    for source, by_k in report["hits_at_k"].items():
        for k, entry in by_k.items():
            assert entry["mean"] == pytest.approx(float(np.mean(entry["per_seed"])), abs=1e-15)


def test_reports_are_pure_functions(small_bundle):
    config = _fast_config()
    a = run_ablation(small_bundle, seeds=[0], config=config)
    b = run_ablation(small_bundle, seeds=[0], config=_fast_config())
    assert a == b


def test_matrix_diagonal_matches_ablation(small_bundle):
    config = _fast_config()
    ablation = run_ablation(small_bundle, seeds=[0], config=config)
    matrix = run_discrepancy_matrix(
        small_bundle,
        train_sources=(NO, R),
        test_sources=(NO, R),
        seeds=[0],
        config=_fast_config(),
    )
    by_row = {cell["row"]: cell["mean"] for cell in ablation["cells"]}
    assert cell_mean(matrix, NO, NO) == by_row["no_retrieval"]
    assert cell_mean(matrix, R, R) == by_row["retrieval"]


def test_matrix_contains_requested_cells(small_bundle):
    matrix = run_discrepancy_matrix(
        small_bundle, train_sources=(R, O), test_sources=(R, O), seeds=[0], config=_fast_config()
    )
    assert len(matrix["cells"]) == 4
    assert cell_values(matrix, R, O) != []
    with pytest.raises(ExperimentError, match="no cell"):
        cell_mean(matrix, RR, RR)


def test_injection_requires_external(small_bundle):
    with pytest.raises(ExperimentError, match="external"):
        run_discrepancy_matrix(
            small_bundle,
            train_sources=(R,),
            test_sources=(CandidateSource.RERANKED_WITH_INJECTION,),
            seeds=[0],
            config=_fast_config(),
        )


def test_injection_source_runs_with_external(small_bundle):
    from kivqa.corpus import Candidate

    bundle = DatasetBundle(
        questions=small_bundle.questions,
        candidates=small_bundle.candidates,
        patch_table=small_bundle.patch_table,
        cand_image_table=small_bundle.cand_image_table,
        cand_text_table=small_bundle.cand_text_table,
        qtext_table=small_bundle.qtext_table,
        labels=small_bundle.labels,
        external=[Candidate(candidate_id=f"g{i}", caption=f"external note {i}") for i in range(10)],
    )
    config = _fast_config()
    config.injection_m = 3
    matrix = run_discrepancy_matrix(
        bundle,
        train_sources=(R,),
        test_sources=(CandidateSource.RERANKED_WITH_INJECTION,),
        seeds=[0],
        config=config,
    )
    assert len(matrix["cells"]) == 1


def test_format_and_save_report(small_bundle, tmp_path):
    report = run_ablation(small_bundle, seeds=[0], config=_fast_config())
    text = format_report(report)
    assert "ablation report" in text
    assert "no_retrieval" in text
    path = tmp_path / "report.json"
    save_report(report, str(path))
    import json

    loaded = json.loads(path.read_text())
    assert loaded["report_version"] == 1
    assert loaded["cells"] == report["cells"]


def test_empty_bundle_rejected(small_bundle):
    empty = DatasetBundle(
        questions=[],
        candidates=small_bundle.candidates,
        patch_table=small_bundle.patch_table,
        cand_image_table=small_bundle.cand_image_table,
        cand_text_table=small_bundle.cand_text_table,
        qtext_table=small_bundle.qtext_table,
        labels=small_bundle.labels,
    )
    with pytest.raises(ExperimentError, match="no questions"):
        run_ablation(empty, seeds=[0], config=_fast_config())
