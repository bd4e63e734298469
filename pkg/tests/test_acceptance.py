"""Acceptance suite: one test per exit criterion, at its stated tolerance.

Run ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL line per
criterion with its runtime.  The quantitative criteria are property-based or
qualitative-trend checks on the synthetic corpus; full-scale accuracy numbers
are out of reach by design.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from kivqa.cli import main as cli_main
from kivqa.corpus import EmbeddingTable, generate_synthetic
from kivqa.experiments import (
    EXPERIMENT_CORPUS,
    CandidateSource,
    DatasetBundle,
    ExperimentConfig,
    _split,
    _Workspace,
    cell_values,
    run_ablation,
    run_discrepancy_matrix,
)
from kivqa.reranker import (
    RerankerModel,
    pairwise_grad,
    pairwise_loss,
    rerank_example,
    score_matrix,
    train_reranker,
)
from kivqa.retrieval import RankedList, retrieve_and_aggregate, top_k
from kivqa.supervision import distant_label, hits_at_k, mean_hits_at_k, vqa_accuracy

NO = CandidateSource.NO_RETRIEVAL
R = CandidateSource.RETRIEVAL
RR = CandidateSource.RERANKED
O = CandidateSource.ORACLE


@contextmanager
def criterion(name: str, budget_seconds: float):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE FAIL: {name}")
        raise
    elapsed = time.monotonic() - start
    assert elapsed < budget_seconds, f"{name}: {elapsed:.1f}s exceeded {budget_seconds}s budget"
    print(f"ACCEPTANCE PASS: {name} ({elapsed:.1f}s)")


@pytest.fixture(scope="module")
def bundle():
    return DatasetBundle.from_synthetic(generate_synthetic(EXPERIMENT_CORPUS))


def test_formula_exactness():
    with criterion("formula exactness (distant label, VQA accuracy)", 1.0):
        for o in range(11):
            assert distant_label(o) == min(o / 3, 1)
        assert vqa_accuracy("rome", ["paris"] * 10) == 0.0
        assert vqa_accuracy("paris", ["paris"] * 2 + ["rome"] * 8) == 2 / 3
        assert vqa_accuracy("paris", ["paris"] * 5 + ["rome"] * 5) == 1.0
        assert vqa_accuracy("paris", ["paris"] * 3 + ["rome"] * 7) == 1.0


def _brute_force_top(query, table, k):
    scored = []
    q64 = np.asarray(query, dtype=np.float64)
    for cid, vec in table.items():
        scored.append((cid, float(np.dot(vec.astype(np.float64), q64))))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[: k]


def _brute_force_aggregate(patches, table, k, per_patch_k):
    best = {}
    for vec in patches:
        for cid, s in _brute_force_top(vec, table, per_patch_k):
            if cid not in best or s > best[cid]:
                best[cid] = s
    return sorted(best.items(), key=lambda item: (-item[1], item[0]))[: k]


def test_retrieval_oracle_equivalence():
    with criterion("retrieval matches brute-force oracle on 100 instances", 10.0):
        rng = np.random.default_rng(2024)
        for instance in range(100):
            if instance % 2 == 0:
                # continuous vectors: order must match; scores to within 1 ulp
                entries = {f"c{i:03d}": rng.standard_normal(8) for i in range(200)}
                exact = False
            else:
                # small-integer vectors: all dots exact, ties included, so the
                # comparison is fully bitwise
                entries = {
                    f"c{i:03d}": rng.integers(-3, 4, size=8).astype(np.float32)
                    for i in range(200)
                }
                entries["tie-a"] = entries["c000"].copy()
                entries["tie-b"] = entries["c000"].copy()
                exact = True
            table = EmbeddingTable(8, entries)
            patches = [
                rng.standard_normal(8) if not exact else rng.integers(-3, 4, size=8).astype(float)
                for _ in range(3)
            ]
            for vec in patches:
                got = top_k(vec, table, 20)
                want = _brute_force_top(vec, table, 20)
                if exact:
                    assert got == want
                else:
                    assert [c for c, _ in got] == [c for c, _ in want]
                    np.testing.assert_allclose(
                        [s for _, s in got], [s for _, s in want], rtol=1e-13
                    )
            got = retrieve_and_aggregate("q", patches, table, k=20).items
            want = _brute_force_aggregate(patches, table, 20, 20)
            if exact:
                assert got == want
            else:
                assert [c for c, _ in got] == [c for c, _ in want]
                np.testing.assert_allclose([s for _, s in got], [s for _, s in want], rtol=1e-13)


def _fd_scores(labels, scores, step=1e-4):
    grad = np.zeros_like(scores)
    for i in range(scores.size):
        up = scores.copy()
        up[i] += step
        down = scores.copy()
        down[i] -= step
        grad[i] = (pairwise_loss(labels, up) - pairwise_loss(labels, down)) / (2 * step)
    return grad


def _loss_of(model, features, labels):
    return pairwise_loss(labels, score_matrix(model, features))


def _fd_model(model, features, labels, step=1e-4):
    grads = []
    for param in (model.w1, model.b1, model.w2):
        g = np.zeros_like(param)
        flat, gf = param.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = _loss_of(model, features, labels)
            flat[i] = keep - step
            down = _loss_of(model, features, labels)
            flat[i] = keep
            gf[i] = (up - down) / (2 * step)
        grads.append(g)
    keep = model.b2
    model.b2 = keep + step
    up = _loss_of(model, features, labels)
    model.b2 = keep - step
    down = _loss_of(model, features, labels)
    model.b2 = keep
    grads.append(np.array([(up - down) / (2 * step)]))
    return grads


def test_gradient_checks():
    from kivqa.reranker import model_grads

    with criterion("gradients match central finite differences", 30.0):
        rng = np.random.default_rng(77)
        for instance in range(50):
            n = int(rng.integers(2, 12))
            labels = rng.choice([0.0, 1 / 3, 2 / 3, 1.0], size=n)
            scores = 2.0 * rng.standard_normal(n)
            np.testing.assert_allclose(
                pairwise_grad(labels, scores), _fd_scores(labels, scores), rtol=1e-5, atol=1e-7
            )
        for instance in range(50):
            model = RerankerModel.initialize(
                feature_dim=5, hidden_width=3, seed=int(rng.integers(0, 100000))
            )
            n = int(rng.integers(2, 7))
            features = rng.standard_normal((n, 5))
            labels = rng.choice([0.0, 1 / 3, 2 / 3, 1.0], size=n)
            analytic = model_grads(
                model, features, pairwise_grad(labels, score_matrix(model, features))
            )
            numeric = _fd_model(model, features, labels)
            for a, b in zip(analytic, numeric):
                np.testing.assert_allclose(a, b, rtol=1e-4, atol=1e-7)


def test_hand_values():
    with criterion("pairwise loss hand values to 1e-9", 1.0):
        loss = pairwise_loss(np.array([1.0, 1 / 3]), np.array([2.0, 0.0]))
        assert abs(loss - math.log1p(math.exp(-2.0))) <= 1e-9
        assert abs(loss - 0.126928011) <= 1e-6
        sym_loss = pairwise_loss(np.array([1.0, 0.0]), np.array([0.0, 0.0]))
        assert abs(sym_loss - math.log(2.0)) <= 1e-9
        grad = pairwise_grad(np.array([1.0, 0.0]), np.array([0.0, 0.0]))
        assert abs(grad[0] - (-0.5)) <= 1e-9
        assert abs(grad[1] - 0.5) <= 1e-9


def test_reranker_learning(bundle):
    with criterion("reranker beats retrieval order on dev Hits@1 (5 seeds)", 300.0):
        config = ExperimentConfig()
        workspace = _Workspace(bundle, config)
        improvements = []
        for seed in range(5):
            _, _, sub_ids, dev_ids = _split(bundle.questions, seed, config)
            train_config = type(config.reranker)(**{**config.reranker.__dict__, "seed": seed})
            result = train_reranker(
                [workspace.examples[qid] for qid in sub_ids],
                [workspace.examples[qid] for qid in dev_ids],
                [workspace.retrieval[qid] for qid in dev_ids],
                bundle.labels,
                train_config,
            )
            reranked_dev = [
                rerank_example(result.model, workspace.examples[qid]) for qid in dev_ids
            ]
            baseline = mean_hits_at_k(
                [workspace.retrieval[qid] for qid in dev_ids], bundle.labels, 1
            )
            trained = mean_hits_at_k(reranked_dev, bundle.labels, 1)
            improvements.append(trained - baseline)
        wins = sum(1 for delta in improvements if delta > 0)
        median = float(np.median(improvements))
        print(f"  reranker dev Hits@1 improvements per seed: {np.round(improvements, 4)}")
        assert wins >= 4, f"improvement in only {wins}/5 seeds"
        assert median >= 0.05, f"median improvement {median:.4f} < 0.05"


def test_ablation_ordering(bundle):
    with criterion("ablation ordering no-retrieval < retrieval < reranked", 600.0):
        report = run_ablation(bundle, seeds=[0, 1, 2, 3, 4], config=ExperimentConfig())
        rows = {cell["row"]: np.array(cell["per_seed"]) for cell in report["cells"]}
        no, ret, rer = rows["no_retrieval"], rows["retrieval"], rows["reranked"]
        print(f"  means: no_retrieval {no.mean():.4f}, retrieval {ret.mean():.4f}, reranked {rer.mean():.4f}")
        ordered = (no < ret) & (ret < rer)
        assert no.mean() < ret.mean() < rer.mean()
        assert ordered.sum() >= 4, f"ordering held in only {int(ordered.sum())}/5 seeds"


def test_discrepancy_orderings(bundle):
    with criterion("discrepancy orderings (train/test source matrix)", 900.0):
        report = run_discrepancy_matrix(
            bundle, train_sources=(R, RR, O), test_sources=(R, RR, O),
            seeds=[0, 1, 2, 3, 4], config=ExperimentConfig(),
        )
        def arr(a, b):
            return np.array(cell_values(report, a, b))

        chain = (arr(R, O) > arr(R, R)) & (arr(R, R) > arr(O, R))
        assert chain.sum() >= 4, f"R->O > R->R > O->R held in only {int(chain.sum())}/5 seeds"

        oo = arr(O, O)
        others = np.stack(
            [arr(a, b) for a in (R, RR, O) for b in (R, RR, O) if (a, b) != (O, O)]
        )
        maximal = oo >= others.max(axis=0)
        assert maximal.sum() >= 4, f"O->O maximal in only {int(maximal.sum())}/5 seeds"

        weak = arr(R, RR) >= arr(RR, RR)
        assert weak.sum() >= 3, f"R->RR >= RR->RR held in only {int(weak.sum())}/5 seeds"
        print(
            f"  R->R {arr(R, R).mean():.4f}  R->RR {arr(R, RR).mean():.4f}  "
            f"RR->RR {arr(RR, RR).mean():.4f}  R->O {arr(R, O).mean():.4f}  "
            f"O->R {arr(O, R).mean():.4f}  O->O {oo.mean():.4f}"
        )


def test_oracle_upper_bound(bundle):
    with criterion("oracle ranking dominates every source at k in {1, 5, 20}", 120.0):
        config = ExperimentConfig()
        workspace = _Workspace(bundle, config)
        _, _, sub_ids, dev_ids = _split(bundle.questions, 0, config)
        result = train_reranker(
            [workspace.examples[qid] for qid in sub_ids],
            [workspace.examples[qid] for qid in dev_ids],
            [workspace.retrieval[qid] for qid in dev_ids],
            bundle.labels,
            config.reranker,
        )
        for question in bundle.questions:
            qid = question.question_id
            oracle = workspace.oracle[qid]
            sources = [
                RankedList(question_id=qid, items=[]),
                workspace.retrieval[qid],
                rerank_example(result.model, workspace.examples[qid]),
            ]
            for k in (1, 5, 20):
                bound = hits_at_k(oracle, bundle.labels, k)
                for ranked in sources:
                    assert bound >= hits_at_k(ranked, bundle.labels, k)


def test_pipeline_determinism(tmp_path):
    with criterion("every stage rerun is byte-identical", 120.0):
        data = tmp_path / "data"
        gen = [
            "gen-synth", "--out-dir", str(data), "--n-questions", "40",
            "--n-candidates", "24", "--n-topics", "6", "--dim", "8",
            "--patches-per-image", "4", "--seed", "5",
        ]
        lists = str(tmp_path / "retrieval.jsonl")
        labels = str(tmp_path / "labels.jsonl")
        reranker = str(tmp_path / "reranker.json")
        reranked = str(tmp_path / "reranked.jsonl")
        oracle = str(tmp_path / "oracle.jsonl")
        reader = str(tmp_path / "reader.json")
        preds = str(tmp_path / "preds.jsonl")
        metrics = str(tmp_path / "metrics.json")
        ablation = str(tmp_path / "ablation.json")
        matrix = str(tmp_path / "matrix.json")
        d = str(data)
        stages = [
            gen,
            ["retrieve", "--data-dir", d, "--aggregate-k", "8", "--out", lists],
            ["label", "--data-dir", d, "--out", labels],
            ["train-reranker", "--data-dir", d, "--labels", labels, "--lists", lists,
             "--steps", "60", "--eval-interval", "30", "--lr", "1e-3",
             "--hidden-width", "8", "--out", reranker],
            ["rerank", "--data-dir", d, "--model", reranker, "--lists", lists, "--out", reranked],
            ["oracle-rank", "--labels", labels, "--lists", lists, "--out", oracle],
            ["train-reader", "--data-dir", d, "--lists", lists, "--steps", "50",
             "--lr", "3e-3", "--reader-k", "5", "--out", reader],
            ["predict", "--data-dir", d, "--reader", reader, "--lists", reranked, "--out", preds],
            ["evaluate", "--data-dir", d, "--predictions", preds, "--out", metrics],
            ["ablation", "--data-dir", d, "--labels", labels, "--seeds", "0",
             "--reranker-steps", "40", "--reader-steps", "30", "--reader-k", "5",
             "--out", ablation],
            ["discrepancy", "--data-dir", d, "--labels", labels, "--seeds", "0",
             "--reranker-steps", "40", "--reader-steps", "30", "--reader-k", "5",
             "--train-sources", "retrieval,oracle", "--test-sources", "retrieval,oracle",
             "--out", matrix],
        ]
        artifacts = [lists, labels, reranker, reranked, oracle, reader, preds, metrics, ablation, matrix]

        def run_all():
            for argv in stages:
                assert cli_main(argv) == 0, f"stage failed: {argv[0]}"

        run_all()
        first = {path: open(path, "rb").read() for path in artifacts}
        first.update(
            {str(p): p.read_bytes() for p in data.iterdir()}
        )
        run_all()
        for path, content in first.items():
            assert open(path, "rb").read() == content, f"{path} changed between reruns"
