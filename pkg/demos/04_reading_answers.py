"""The answer reader: from ranked candidate lists to answer strings.

The reader scores every plausible answer by where and how often it appears in
the top-K candidates, plus an answer prior and the question text itself.  An
empty candidate list degrades it gracefully into a no-knowledge baseline, and
external candidates can be spliced into the tail of any list.
"""

import numpy as np

from kivqa.corpus import Candidate, Question
from kivqa.reader import ReaderTrainConfig, fit_reader, inject_candidates, predict
from kivqa.retrieval import RankedList

# ── 1. A micro corpus: three answers, one informative caption each ────────
answers = ["cat", "dog", "fox"]
questions, lists, texts = [], {}, {}
rng = np.random.default_rng(0)
for i in range(60):
    gold = answers[i % 3]
    qid = f"q{i}"
    questions.append(Question(qid, f"i{i}", f"which animal is in photo {i}", [gold] * 10))
    order = [gold] + [a for a in answers if a != gold]
    rng.shuffle(order[1 :])  # distractor order varies, gold stays on top
    cids = []
    for rank, answer in enumerate(order):
        cid = f"{qid}_c{rank}"
        texts[cid] = f"wildlife entry: a {answer} in the grass"
        cids.append(cid)
    lists[qid] = RankedList(qid, [(cid, float(3 - r)) for r, cid in enumerate(cids)])

model = fit_reader(questions, lists, texts, K=3, config=ReaderTrainConfig(steps=300, lr=3e-3, seed=0))
names = ["any-occurrence", "coverage", "rank-discount", "best-score", "prior", "in-question", "bias"]
print("learned weights:")
for name, weight in zip(names, model.weights):
    print(f"  {name:>14}: {weight:+.3f}")

# ── 2. Prediction follows the candidate list ───────────────────────────────
probe = questions[0]
print("\ngold answer:", probe.answers[0])
print("prediction with its own list:", predict(model, probe, lists[probe.question_id], texts))

misleading = RankedList(probe.question_id, [(f"{probe.question_id}_c1", 3.0),
                                            (f"{probe.question_id}_c2", 2.0),
                                            (f"{probe.question_id}_c0", 1.0)])
print("prediction when the list buries the right candidate:",
      predict(model, probe, misleading, texts))

empty = RankedList(probe.question_id, [])
print("prediction with no candidates at all:", predict(model, probe, empty, texts))

# ── 3. Injecting external candidates into the tail ─────────────────────────
external = [Candidate(candidate_id="gen0", caption="a generated note about a fox"),
            Candidate(candidate_id="gen1", caption="another generated note")]
texts["gen0"] = external[0].caption
texts["gen1"] = external[1].caption
injected = inject_candidates(lists[probe.question_id], external, m=2)
print("\nlist after replacing the last 2 items:", injected.candidate_ids())
print("tail scores continue strictly below the kept items:",
      [round(s, 7) for _, s in injected.items])
