"""Command-line entry point wiring every pipeline stage.

Each subcommand reads its inputs, writes one artifact atomically (temp file
plus rename, never a partial file), and prints a one-line summary with the
stage's key metric.  Exit code 0 on success, 1 on any error, with a message
naming the missing or invalid input.

Options resolve in three layers: built-in defaults, then a ``key = value``
config file (``--config``), then explicit flags.  The effective configuration
is embedded in every artifact: JSON Lines files carry it in a leading
``{"_meta": ...}`` line (skipped by all loaders), JSON documents in a
``config`` field.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .corpus import (
    CorpusError,
    SyntheticConfig,
    generate_synthetic,
    load_candidates,
    load_embeddings,
    load_questions,
    save_candidates,
    save_questions,
    write_embeddings,
    write_jsonl,
)
from .experiments import (
    EXPERIMENT_CORPUS,
    CandidateSource,
    DatasetBundle,
    ExperimentConfig,
    format_report,
    run_ablation,
    run_discrepancy_matrix,
    save_report,
)
from .reader import (
    ReaderModel,
    ReaderTrainConfig,
    build_reader_examples,
    fit_reader,
    inject_candidates,
    predict,
    reader_loss,
)
from .reranker import (
    RerankerModel,
    RerankerTrainConfig,
    build_candidate_context,
    build_examples,
    build_question_context,
    rerank,
    train_reranker,
)
from .retrieval import (
    load_ranked_lists,
    retrieve_for_questions,
    save_ranked_lists,
)
from .supervision import LabelSet, build_label_set, mean_hits_at_k, oracle_rank, vqa_accuracy


class CliError(ValueError):
    """User-facing error: message printed to stderr, exit code 1."""


def _require(path: str | None, what: str) -> str:
    if not path:
        raise CliError(f"missing required input: {what}")
    if not os.path.exists(path):
        raise CliError(f"{what} not found: {path}")
    return path


def read_config_file(path: str) -> dict[str, str]:
    """Parse a simple ``key = value`` config file; # starts a comment."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _merge_config(args: argparse.Namespace, argv: list[str]) -> None:
    """Apply config-file values for options not given explicitly on argv."""
    if not getattr(args, "config", None):
        return
    file_values = read_config_file(_require(args.config, "config file"))
    for key, raw in file_values.items():
        if not hasattr(args, key):
            continue
        flag = "--" + key.replace("_", "-")
        explicit = any(tok == flag or tok.startswith(flag + "=") for tok in argv)
        if explicit:
            continue  # explicit flag wins over the config file
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, raw.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, key, int(raw))
        elif isinstance(current, float):
            setattr(args, key, float(raw))
        else:
            setattr(args, key, raw)


def _effective_config(args: argparse.Namespace) -> dict:
    skip = {"func", "config"}
    return {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in skip and not key.startswith("_")
    }


def _meta(args: argparse.Namespace, command: str) -> dict:
    return {"command": command, "version": __version__, "config": _effective_config(args)}


def _parse_seeds(raw: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part != ""]
    except ValueError as exc:
        raise CliError(f"invalid --seeds value {raw!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# Bundle loading shared by the later stages
# ---------------------------------------------------------------------------

def _data_path(args: argparse.Namespace, name: str, default_name: str) -> str | None:
    explicit = getattr(args, name, None)
    if explicit:
        return explicit
    data_dir = getattr(args, "data_dir", None)
    if data_dir:
        return os.path.join(data_dir, default_name)
    return None


DATA_FILES = {
    "questions": "questions.jsonl",
    "candidates": "candidates.jsonl",
    "patch_embeddings": "patches.emb1",
    "cand_image_embeddings": "cand_images.emb1",
    "cand_text_embeddings": "cand_texts.emb1",
    "qtext_embeddings": "qtexts.emb1",
    "labels": "labels.jsonl",
}


def _add_data_args(parser: argparse.ArgumentParser, names: list[str]) -> None:
    parser.add_argument("--data-dir", help="directory of gen-synth outputs; individual flags override")
    for name in names:
        flag = "--" + name.replace("_", "-")
        parser.add_argument(flag, help=f"path to {DATA_FILES[name]}")


def _load_bundle(args: argparse.Namespace, need_labels: bool = True) -> DatasetBundle:
    questions = load_questions(_require(_data_path(args, "questions", DATA_FILES["questions"]), "questions"))
    candidates = load_candidates(_require(_data_path(args, "candidates", DATA_FILES["candidates"]), "candidates"))
    patch = load_embeddings(_require(_data_path(args, "patch_embeddings", DATA_FILES["patch_embeddings"]), "patch embeddings"))
    cimg = load_embeddings(_require(_data_path(args, "cand_image_embeddings", DATA_FILES["cand_image_embeddings"]), "candidate image embeddings"))
    ctext = load_embeddings(_require(_data_path(args, "cand_text_embeddings", DATA_FILES["cand_text_embeddings"]), "candidate text embeddings"))
    qtext = load_embeddings(_require(_data_path(args, "qtext_embeddings", DATA_FILES["qtext_embeddings"]), "question text embeddings"))
    if need_labels:
        labels = LabelSet.load(_require(_data_path(args, "labels", DATA_FILES["labels"]), "labels"))
    else:
        labels = LabelSet()
    external = None
    if getattr(args, "external", None):
        external = load_candidates(_require(args.external, "external candidates"))
    return DatasetBundle(
        questions=questions,
        candidates=candidates,
        patch_table=patch,
        cand_image_table=cimg,
        cand_text_table=ctext,
        qtext_table=qtext,
        labels=labels,
        external=external,
    )


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig()
    config.per_patch_k = args.per_patch_k
    config.aggregate_k = args.aggregate_k
    config.reader_K = args.reader_k
    config.injection_m = args.injection_m
    config.reranker.steps = args.reranker_steps
    config.reranker.lr = args.reranker_lr
    config.reranker.sample_size = args.sample_size
    config.reranker.hits_k = args.hits_k
    config.reader.steps = args.reader_steps
    config.reader.lr = args.reader_lr
    return config


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_synth(args: argparse.Namespace) -> None:
    config = SyntheticConfig(
        n_questions=args.n_questions,
        n_candidates=args.n_candidates,
        n_topics=args.n_topics,
        dim=args.dim,
        patches_per_image=args.patches_per_image,
        noise_sigma=args.noise_sigma,
        distractor_rate=args.distractor_rate,
        answer_injection_rate=args.answer_injection_rate,
        answer_leak_rate=args.answer_leak_rate,
        topic_skew=args.topic_skew,
        question_text_noise_factor=args.question_text_noise_factor,
        seed=args.seed,
    )
    bundle = generate_synthetic(config)
    os.makedirs(args.out_dir, exist_ok=True)
    meta = _meta(args, "gen-synth")
    save_questions(bundle.questions, os.path.join(args.out_dir, "questions.jsonl"), meta=meta)
    save_candidates(bundle.candidates, os.path.join(args.out_dir, "candidates.jsonl"), meta=meta)
    write_embeddings(bundle.patch_table, os.path.join(args.out_dir, "patches.emb1"))
    write_embeddings(bundle.cand_image_table, os.path.join(args.out_dir, "cand_images.emb1"))
    write_embeddings(bundle.cand_text_table, os.path.join(args.out_dir, "cand_texts.emb1"))
    write_embeddings(bundle.qtext_table, os.path.join(args.out_dir, "qtexts.emb1"))
    truth = {
        "_meta": meta,
        "question_topics": bundle.question_topics,
        "candidate_topics": bundle.candidate_topics,
        "topic_answers": {str(t): a for t, a in bundle.topic_answers.items()},
    }
    tmp = os.path.join(args.out_dir, "topics.json.tmp")
    with open(tmp, "w", encoding="utf-8") as handle:
        json.dump(truth, handle, sort_keys=True, indent=1)
        handle.write("\n")
    os.replace(tmp, os.path.join(args.out_dir, "topics.json"))
    print(
        f"gen-synth: wrote {len(bundle.questions)} questions, "
        f"{len(bundle.candidates)} candidates, {len(bundle.patch_table)} patch embeddings "
        f"to {args.out_dir}"
    )


def cmd_retrieve(args: argparse.Namespace) -> None:
    questions = load_questions(_require(_data_path(args, "questions", DATA_FILES["questions"]), "questions"))
    patch = load_embeddings(_require(_data_path(args, "patch_embeddings", DATA_FILES["patch_embeddings"]), "patch embeddings"))
    ctext = load_embeddings(_require(_data_path(args, "cand_text_embeddings", DATA_FILES["cand_text_embeddings"]), "candidate text embeddings"))
    lists = retrieve_for_questions(
        questions, patch, ctext, k=args.aggregate_k, per_patch_k=args.per_patch_k, jobs=args.jobs
    )
    ordered = [lists[q.question_id] for q in questions]
    save_ranked_lists(ordered, args.out, meta=_meta(args, "retrieve"))
    mean_top = float(np.mean([lst.items[0][1] for lst in ordered if lst.items]))
    print(
        f"retrieve: wrote {len(ordered)} lists (k={args.aggregate_k}, "
        f"per-patch k={args.per_patch_k}), mean top score {mean_top:.6f} -> {args.out}"
    )


def cmd_label(args: argparse.Namespace) -> None:
    questions = load_questions(_require(_data_path(args, "questions", DATA_FILES["questions"]), "questions"))
    candidates = load_candidates(_require(_data_path(args, "candidates", DATA_FILES["candidates"]), "candidates"))
    labels = build_label_set(questions, candidates, include_section=not args.caption_only)
    labels.save(args.out, meta=_meta(args, "label"))
    positive = sum(
        1
        for q in questions
        for c in candidates
        if labels.get(q.question_id, c.candidate_id) > 0
    )
    rate = positive / (len(questions) * len(candidates))
    print(f"label: wrote {len(labels)} labels, positive rate {rate:.4f} -> {args.out}")


def _split_questions(questions, dev_frac: float, seed: int):
    rng = np.random.default_rng([seed, 17])
    perm = rng.permutation(len(questions))
    n_dev = max(1, int(round(len(questions) * dev_frac)))
    dev_idx = set(int(i) for i in perm[: n_dev])
    train = [q for i, q in enumerate(questions) if i not in dev_idx]
    dev = [q for i, q in enumerate(questions) if i in dev_idx]
    return train, dev


def cmd_train_reranker(args: argparse.Namespace) -> None:
    bundle = _load_bundle(args)
    lists = {l.question_id: l for l in load_ranked_lists(_require(args.lists, "retrieval lists"))}
    qctx = {
        q.question_id: build_question_context(q, bundle.patch_table, bundle.qtext_table)
        for q in bundle.questions
    }
    cctx = {
        c.candidate_id: build_candidate_context(c, bundle.cand_image_table, bundle.cand_text_table)
        for c in bundle.candidates
    }
    examples = {
        ex.question_id: ex
        for ex in build_examples(bundle.questions, lists, bundle.labels, qctx, cctx)
    }
    train_qs, dev_qs = _split_questions(bundle.questions, args.dev_frac, args.seed)
    config = RerankerTrainConfig(
        steps=args.steps,
        lr=args.lr,
        batch_size=args.batch_size,
        sample_size=args.sample_size,
        eval_interval=args.eval_interval,
        hits_k=args.hits_k,
        hidden_width=args.hidden_width,
        seed=args.seed,
    )
    result = train_reranker(
        [examples[q.question_id] for q in train_qs],
        [examples[q.question_id] for q in dev_qs],
        [lists[q.question_id] for q in dev_qs],
        bundle.labels,
        config,
    )
    result.model.save(args.out, config=_meta(args, "train-reranker"))
    print(
        f"train-reranker: best dev Hits@{args.hits_k} {result.best_dev_hits:.4f} "
        f"at step {result.best_step} -> {args.out}"
    )


def cmd_rerank(args: argparse.Namespace) -> None:
    bundle = _load_bundle(args, need_labels=False)
    model = RerankerModel.load(_require(args.model, "reranker model"))
    lists = load_ranked_lists(_require(args.lists, "retrieval lists"))
    by_qid = {q.question_id: q for q in bundle.questions}
    cctx = {
        c.candidate_id: build_candidate_context(c, bundle.cand_image_table, bundle.cand_text_table)
        for c in bundle.candidates
    }
    out = []
    for ranked in lists:
        if ranked.question_id not in by_qid:
            raise CliError(f"list for unknown question {ranked.question_id}")
        qctx = build_question_context(by_qid[ranked.question_id], bundle.patch_table, bundle.qtext_table)
        out.append(rerank(model, qctx, ranked, cctx))
    save_ranked_lists(out, args.out, meta=_meta(args, "rerank"))
    print(f"rerank: reranked {len(out)} lists -> {args.out}")


def cmd_oracle_rank(args: argparse.Namespace) -> None:
    lists = load_ranked_lists(_require(args.lists, "retrieval lists"))
    labels = LabelSet.load(_require(_data_path(args, "labels", DATA_FILES["labels"]), "labels"))
    out = [oracle_rank(ranked, labels) for ranked in lists]
    save_ranked_lists(out, args.out, meta=_meta(args, "oracle-rank"))
    hits1 = mean_hits_at_k(out, labels, 1)
    print(f"oracle-rank: wrote {len(out)} lists, oracle Hits@1 {hits1:.4f} -> {args.out}")


def cmd_train_reader(args: argparse.Namespace) -> None:
    questions = load_questions(_require(_data_path(args, "questions", DATA_FILES["questions"]), "questions"))
    candidates = load_candidates(_require(_data_path(args, "candidates", DATA_FILES["candidates"]), "candidates"))
    lists = {l.question_id: l for l in load_ranked_lists(_require(args.lists, "candidate lists"))}
    texts = {c.candidate_id: c.knowledge_text() for c in candidates}
    if args.external:
        for c in load_candidates(_require(args.external, "external candidates")):
            texts[c.candidate_id] = c.knowledge_text()
    config = ReaderTrainConfig(
        steps=args.steps, lr=args.lr, batch_size=args.batch_size, seed=args.seed
    )
    model = fit_reader(questions, lists, texts, K=args.reader_k, config=config)
    examples = build_reader_examples(model, questions, lists, texts, config.prior_pool)
    final_loss = reader_loss(model, examples)
    model.save(args.out, config=_meta(args, "train-reader"))
    print(f"train-reader: final training loss {final_loss:.4f} ({len(examples)} examples) -> {args.out}")


def cmd_predict(args: argparse.Namespace) -> None:
    questions = load_questions(_require(_data_path(args, "questions", DATA_FILES["questions"]), "questions"))
    candidates = load_candidates(_require(_data_path(args, "candidates", DATA_FILES["candidates"]), "candidates"))
    model = ReaderModel.load(_require(args.reader, "reader model"))
    lists = {l.question_id: l for l in load_ranked_lists(_require(args.lists, "candidate lists"))}
    texts = {c.candidate_id: c.knowledge_text() for c in candidates}
    external = None
    if args.external:
        external = load_candidates(_require(args.external, "external candidates"))
        for c in external:
            texts[c.candidate_id] = c.knowledge_text()
    records = []
    for question in questions:
        qid = question.question_id
        if qid not in lists:
            raise CliError(f"no candidate list for question {qid}")
        ranked = lists[qid]
        if external and args.injection_m > 0:
            ranked = inject_candidates(ranked, external, args.injection_m)
        answer = predict(model, question, ranked, texts)
        records.append({"question_id": qid, "answer": answer})
    write_jsonl(records, args.out, meta=_meta(args, "predict"))
    print(f"predict: wrote {len(records)} predictions -> {args.out}")


def cmd_evaluate(args: argparse.Namespace) -> None:
    questions = load_questions(_require(_data_path(args, "questions", DATA_FILES["questions"]), "questions"))
    by_qid = {q.question_id: q for q in questions}
    predictions: dict[str, str] = {}
    with open(_require(args.predictions, "predictions"), "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "_meta" in obj:
                continue
            predictions[obj["question_id"]] = obj["answer"]
    missing = [qid for qid in by_qid if qid not in predictions]
    if missing:
        raise CliError(f"predictions missing for {len(missing)} questions (e.g. {missing[0]})")
    accs = [vqa_accuracy(predictions[qid], q.answers) for qid, q in by_qid.items()]
    accuracy = float(np.mean(accs))
    if args.out:
        tmp = f"{args.out}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as handle:
            json.dump(
                {"_meta": _meta(args, "evaluate"), "vqa_accuracy": accuracy, "n": len(accs)},
                handle,
                sort_keys=True,
                indent=1,
            )
            handle.write("\n")
        os.replace(tmp, args.out)
    print(f"evaluate: VQA accuracy {accuracy:.4f} over {len(accs)} questions")


def cmd_ablation(args: argparse.Namespace) -> None:
    bundle = _load_bundle(args)
    config = _experiment_config(args)
    report = run_ablation(bundle, seeds=_parse_seeds(args.seeds), config=config)
    report["_meta"] = _meta(args, "ablation")
    save_report(report, args.out)
    print(format_report(report))
    rows = {cell["row"]: cell["mean"] for cell in report["cells"]}
    print(
        f"ablation: no_retrieval {rows['no_retrieval']:.4f} < retrieval {rows['retrieval']:.4f} "
        f"< reranked {rows['reranked']:.4f} -> {args.out}"
    )


def cmd_discrepancy(args: argparse.Namespace) -> None:
    bundle = _load_bundle(args)
    config = _experiment_config(args)
    try:
        train_sources = tuple(CandidateSource(s) for s in args.train_sources.split(","))
        test_sources = tuple(CandidateSource(s) for s in args.test_sources.split(","))
    except ValueError as exc:
        raise CliError(f"invalid candidate source: {exc}") from exc
    report = run_discrepancy_matrix(
        bundle,
        train_sources=train_sources,
        test_sources=test_sources,
        seeds=_parse_seeds(args.seeds),
        config=config,
    )
    report["_meta"] = _meta(args, "discrepancy")
    save_report(report, args.out)
    print(format_report(report))
    print(f"discrepancy: wrote {len(report['cells'])} cells -> {args.out}")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kivqa",
        description="Retrieval, reranking, and reading pipeline over precomputed embeddings.",
    )
    parser.add_argument("--version", action="version", version=f"kivqa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key = value config file; flags override it")

    p = sub.add_parser("gen-synth", help="generate the deterministic synthetic corpus")
    common(p)
    p.add_argument("--out-dir", required=True)
    c = EXPERIMENT_CORPUS
    p.add_argument("--n-questions", type=int, default=c.n_questions)
    p.add_argument("--n-candidates", type=int, default=c.n_candidates)
    p.add_argument("--n-topics", type=int, default=c.n_topics)
    p.add_argument("--dim", type=int, default=c.dim)
    p.add_argument("--patches-per-image", type=int, default=c.patches_per_image)
    p.add_argument("--noise-sigma", type=float, default=c.noise_sigma)
    p.add_argument("--distractor-rate", type=float, default=c.distractor_rate)
    p.add_argument("--answer-injection-rate", type=float, default=c.answer_injection_rate)
    p.add_argument("--answer-leak-rate", type=float, default=c.answer_leak_rate)
    p.add_argument("--topic-skew", type=float, default=c.topic_skew)
    p.add_argument("--question-text-noise-factor", type=float, default=c.question_text_noise_factor)
    p.add_argument("--seed", type=int, default=c.seed)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("retrieve", help="patch retrieval with max-score aggregation")
    common(p)
    _add_data_args(p, ["questions", "patch_embeddings", "cand_text_embeddings"])
    p.add_argument("--per-patch-k", type=int, default=20)
    p.add_argument("--aggregate-k", type=int, default=20)
    p.add_argument("--jobs", type=int, default=1, help="parallel per-question workers")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("label", help="distant-supervision relevance labels")
    common(p)
    _add_data_args(p, ["questions", "candidates"])
    p.add_argument("--caption-only", action="store_true", help="match captions only, not section text")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train-reranker", help="pairwise-logistic reranker training")
    common(p)
    _add_data_args(p, list(DATA_FILES))
    p.add_argument("--lists", required=True, help="retrieval lists JSONL")
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--sample-size", type=int, default=20)
    p.add_argument("--eval-interval", type=int, default=500)
    p.add_argument("--hits-k", type=int, default=5)
    p.add_argument("--hidden-width", type=int, default=32)
    p.add_argument("--dev-frac", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_reranker)

    p = sub.add_parser("rerank", help="apply a trained reranker to lists")
    common(p)
    _add_data_args(p, [n for n in DATA_FILES if n != "labels"])
    p.add_argument("--model", required=True)
    p.add_argument("--lists", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("oracle-rank", help="reorder lists by relevance labels")
    common(p)
    _add_data_args(p, ["labels"])
    p.add_argument("--lists", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle_rank)

    p = sub.add_parser("train-reader", help="train the answer reader on candidate lists")
    common(p)
    _add_data_args(p, ["questions", "candidates"])
    p.add_argument("--lists", required=True, help="training candidate lists (the source matters)")
    p.add_argument("--external", help="external candidates JSONL for injected items")
    p.add_argument("--reader-k", type=int, default=10)
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_reader)

    p = sub.add_parser("predict", help="answer questions from candidate lists")
    common(p)
    _add_data_args(p, ["questions", "candidates"])
    p.add_argument("--reader", required=True)
    p.add_argument("--lists", required=True)
    p.add_argument("--external", help="external candidates to inject before reading")
    p.add_argument("--injection-m", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="VQA accuracy of a predictions file")
    common(p)
    _add_data_args(p, ["questions"])
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", help="optional metrics JSON")
    p.set_defaults(func=cmd_evaluate)

    def experiment_flags(p: argparse.ArgumentParser) -> None:
        _add_data_args(p, list(DATA_FILES))
        p.add_argument("--external", help="external candidates JSONL")
        p.add_argument("--seeds", default="0,1,2,3,4")
        p.add_argument("--per-patch-k", type=int, default=20)
        p.add_argument("--aggregate-k", type=int, default=20)
        p.add_argument("--reader-k", type=int, default=10)
        p.add_argument("--injection-m", type=int, default=5)
        p.add_argument("--sample-size", type=int, default=20)
        p.add_argument("--hits-k", type=int, default=5)
        desk = ExperimentConfig()
        p.add_argument("--reranker-steps", type=int, default=desk.reranker.steps)
        p.add_argument("--reranker-lr", type=float, default=desk.reranker.lr)
        p.add_argument("--reader-steps", type=int, default=desk.reader.steps)
        p.add_argument("--reader-lr", type=float, default=desk.reader.lr)
        p.add_argument("--out", required=True)

    p = sub.add_parser("ablation", help="no-retrieval / retrieval / reranked rows")
    common(p)
    experiment_flags(p)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("discrepancy", help="train-source x test-source accuracy matrix")
    common(p)
    experiment_flags(p)
    p.add_argument("--train-sources", default="retrieval,reranked,oracle")
    p.add_argument("--test-sources", default="retrieval,reranked,oracle")
    p.set_defaults(func=cmd_discrepancy)

    return parser


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1 :]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args, argv)
        args.func(args)
    except (CliError, CorpusError, ValueError, OSError) as exc:
        print(f"kivqa {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
