"""Training the cross-item reranker on the synthetic corpus.

Half of the patches point at the wrong topic by construction, so retrieval
order is unreliable.  The reranker sees the whole question (pooled patches,
per-patch interactions, question text) against both candidate modalities and
learns to undo much of that damage from distant labels alone.
"""

from kivqa.corpus import generate_synthetic
from kivqa.experiments import EXPERIMENT_CORPUS, DatasetBundle, ExperimentConfig, _split, _Workspace
from kivqa.reranker import train_reranker, rerank_example
from kivqa.supervision import mean_hits_at_k

bundle = DatasetBundle.from_synthetic(generate_synthetic(EXPERIMENT_CORPUS))
config = ExperimentConfig()
workspace = _Workspace(bundle, config)
labels = bundle.labels

train_ids, test_ids, sub_ids, dev_ids = _split(bundle.questions, seed=0, config=config)
print(f"{len(bundle.questions)} questions: {len(sub_ids)} reranker-train, "
      f"{len(dev_ids)} dev, {len(test_ids)} held out")

baseline = mean_hits_at_k([workspace.retrieval[q] for q in dev_ids], labels, 1)
print(f"retrieval-order dev Hits@1: {baseline:.3f}")

result = train_reranker(
    [workspace.examples[q] for q in sub_ids],
    [workspace.examples[q] for q in dev_ids],
    [workspace.retrieval[q] for q in dev_ids],
    labels,
    config.reranker,
)
print(f"best checkpoint: step {result.best_step}, dev Hits@{config.reranker.hits_k} "
      f"{result.best_dev_hits:.3f}")
print("dev Hits trajectory (step, hits):", [(s, round(h, 3)) for s, h in result.history[: 6]], "...")

reranked = {qid: rerank_example(result.model, workspace.examples[qid]) for qid in workspace.examples}
for name, ids in [("sub-train", sub_ids), ("dev", dev_ids), ("held-out", test_ids)]:
    before = mean_hits_at_k([workspace.retrieval[q] for q in ids], labels, 1)
    after = mean_hits_at_k([reranked[q] for q in ids], labels, 1)
    print(f"{name:>10}: Hits@1 {before:.3f} -> {after:.3f}")
print("\nthe model is visibly better on its own training questions than on")
print("held-out ones; that gap is what the discrepancy experiment exploits")

qid = test_ids[0]
print(f"\nexample {qid}: retrieval top-5 ", [c for c, _ in workspace.retrieval[qid].items[: 5]])
print(f"           reranked top-5  ", [c for c, _ in reranked[qid].items[: 5]])
positives = [c for c, _ in workspace.retrieval[qid].items if labels.get(qid, c) >= 1 / 3]
print(f"           labeled positive", positives)
