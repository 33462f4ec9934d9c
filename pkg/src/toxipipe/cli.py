"""Single pipeline entry point.

Subcommands cover the whole flow: ingest -> preannotate -> serve/label ->
split -> train -> eval -> report, plus validate-rule and the cross-lingual
runner. Exit codes: 0 success, 1 domain error, 2 usage error. All
randomness flows from --seed so reruns reproduce, and every stage records
an input fingerprint in the data-dir manifest so identical reruns no-op.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import corpus as corpus_mod
from .chatclient import ENV_BASE_URL, ChatClientError, HttpChatClient
from .evalharness import (
    BenchItem,
    CheckpointAdapter,
    ConstantAdapter,
    ModerationAdapter,
    OracleAdapter,
    PromptConfig,
    PromptMode,
    ChatAdapter,
    misclassification_report,
    render_misclassifications,
    run_benchmark,
    translate_subset,
    write_eval_report,
)
from .manifest import PipelineManifest, hash_params, stage_fingerprint
from .mockllm import EchoTranslationClient, KeywordMockClient
from .preannotate import (
    CoTAnnotation,
    prompt_bundle_hash,
    run_preannotation,
    validate_rule,
)
from .service import AnnotationStore, SplitManifest, split_dataset
from .stats import render_class_report
from .taxonomy import Label, LabelValue, LossMode, Provenance, parse_experiment_code


class CliError(Exception):
    """Domain error: reported on stderr, exit code 1."""


def _log(args, message: str) -> None:
    if getattr(args, "verbose", False):
        print(message, file=sys.stderr)


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _write_jsonl(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _client(args):
    if getattr(args, "mock", False):
        return KeywordMockClient()
    if os.environ.get(ENV_BASE_URL):
        return HttpChatClient.from_env()
    raise CliError(
        f"no chat endpoint configured; set {ENV_BASE_URL} (and friends) or pass --mock"
    )


def _load_annotated(path: Path):
    """Annotated corpus lines -> (CommentRecord, CoTAnnotation) pairs."""
    pairs = []
    for row in _read_jsonl(path):
        annotation = row.pop("annotation", None)
        if annotation is None:
            continue
        record = corpus_mod.CommentRecord.from_json_dict(row)
        pairs.append((record, CoTAnnotation.from_json_dict(annotation)))
    return pairs


# ---------------------------------------------------------------------------
# Subcommands


def cmd_ingest(args) -> int:
    manifest = PipelineManifest.load(args.data)
    params = {
        "salt": args.salt,
        "min_words": args.min_words,
        "max_words": args.max_words,
    }
    fingerprint = stage_fingerprint([args.infile], params)
    out = Path(args.out)
    if manifest.is_fresh("ingest", fingerprint):
        print(f"ingest: up to date ({out})")
        return 0
    raws = [corpus_mod.parse_raw_line(json.dumps(row)) for row in _read_jsonl(Path(args.infile))]
    records, stats = corpus_mod.ingest_records(
        raws,
        salt=bytes.fromhex(args.salt),
        min_words=args.min_words,
        max_words=args.max_words,
    )
    corpus_mod.write_comment_records(out, records)
    histogram = corpus_mod.temporal_histogram(records, "year")
    print(
        json.dumps(
            {
                "ingested": stats.ingested,
                "after_dedupe": stats.after_dedupe,
                "kept": stats.kept,
                "dropped_short": stats.dropped_short,
                "dropped_long": stats.dropped_long,
                "redactions": stats.redactions,
                "by_year": [[str(k), v] for k, v in histogram],
            }
        )
    )
    manifest.record("ingest", fingerprint, [out], seed=args.seed)
    return 0


def cmd_preannotate(args) -> int:
    manifest = PipelineManifest.load(args.data)
    out = Path(args.out)
    params = {"client": "mock" if args.mock else "http", "prompts": prompt_bundle_hash()}
    fingerprint = stage_fingerprint([args.infile], params)
    if manifest.is_fresh("preannotate", fingerprint):
        print(f"preannotate: up to date ({out})")
        return 0

    records = corpus_mod.read_comment_records(Path(args.infile))
    existing = {}
    if args.resume and out.exists():
        existing = {rec.id: ann for rec, ann in _load_annotated(out)}
    client = _client(args)
    run = run_preannotation(
        records, client, max_concurrency=args.max_concurrency, existing=existing
    )
    rows = []
    for record in records:
        annotation = run.annotations.get(record.id)
        if annotation is None:
            continue
        row = record.to_json_dict()
        row["state"] = corpus_mod.RecordState.PREANNOTATED.value
        row["annotation"] = annotation.to_json_dict()
        rows.append(row)
    _write_jsonl(out, rows)
    summary = run.summary
    print(
        json.dumps(
            {
                "total": summary.total,
                "auto_labeled": summary.auto_labeled,
                "needs_human": summary.needs_human,
                "failed": summary.failed,
                "skipped": summary.skipped,
                "auto_fraction": summary.auto_fraction,
                "failures": run.failures,
            }
        )
    )
    manifest.record("preannotate", fingerprint, [out], seed=args.seed)
    return 0


def cmd_validate_rule(args) -> int:
    pairs = _load_annotated(Path(args.annotations))
    if args.labels:
        label_rows = {row["id"]: row["label"] for row in _read_jsonl(Path(args.labels))}
    else:
        store = AnnotationStore(Path(args.data) / "store")
        label_rows = {
            item_id: label.value.value
            for item_id, label in store.final_labels().items()
            if label.provenance is Provenance.HUMAN
        }
    samples = []
    for record, annotation in pairs:
        if record.id in label_rows:
            samples.append(
                (annotation, Label(LabelValue(label_rows[record.id]), Provenance.HUMAN))
            )
    if not samples:
        raise CliError("no overlap between annotations and human labels")
    result = validate_rule(samples)
    lo, hi = result.interval
    print(
        json.dumps(
            {
                "samples": len(samples),
                "rule_fired": result.rule_fired,
                "agreements": result.agreements,
                "agreement_rate": result.rate,
                "wilson_95": [lo, hi],
            }
        )
    )
    print(f"rule/human agreement: {result.rate * 100:.1f}% [{lo * 100:.1f}, {hi * 100:.1f}%] "
          f"on {result.rule_fired} rule-fired samples", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .httpapi import create_app

    store = AnnotationStore(
        Path(args.data) / "store",
        lease_timeout=args.lease_timeout,
        decisions_per_item=args.decisions_per_item,
    )
    if args.annotations:
        pairs = _load_annotated(Path(args.annotations))
        counts = store.add_annotated(pairs)
        _log(args, f"loaded annotations: {counts}")
        if args.validation_sample > 0:
            queued = store.queue_validation_sample(pairs, args.validation_sample, args.seed)
            _log(args, f"queued validation sample: {queued}")
    static_dir = Path(args.ui) if args.ui else None
    app = create_app(store, static_dir=static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_split(args) -> int:
    data_dir = Path(args.data)
    manifest = PipelineManifest.load(data_dir)
    store_dir = data_dir / "store"
    out_manifest = data_dir / "split.json"
    out_train = data_dir / "train.jsonl"
    out_bench = data_dir / "bench.jsonl"

    store = AnnotationStore(store_dir)
    if args.annotations:
        store.add_annotated(_load_annotated(Path(args.annotations)))
    labels = store.final_labels()
    params = {"bench_per_class": args.bench_per_class, "seed": args.seed,
              "labels": hash_params({k: v.value.value for k, v in sorted(labels.items())})}
    fingerprint = hash_params(params)
    if manifest.is_fresh("split", fingerprint):
        print(f"split: up to date ({out_manifest})")
        return 0

    split = split_dataset(labels, bench_per_class=args.bench_per_class, seed=args.seed)
    out_manifest.parent.mkdir(parents=True, exist_ok=True)
    out_manifest.write_text(
        json.dumps(split.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    texts = {}
    if args.annotations:
        for record, _ in _load_annotated(Path(args.annotations)):
            texts[record.id] = record.text
    for item in store.items.values():
        texts.setdefault(item.comment.id, item.comment.text)

    def rows(ids):
        out = []
        for item_id in ids:
            out.append(
                {
                    "id": item_id,
                    "text": texts.get(item_id, ""),
                    "label": labels[item_id].value.value,
                }
            )
        return out

    _write_jsonl(out_train, rows(split.train_ids))
    _write_jsonl(out_bench, rows(split.bench_ids))
    print(
        json.dumps(
            {
                "train": len(split.train_ids),
                "bench": len(split.bench_ids),
                "train_toxic_fraction": split.train_toxic_fraction,
                "bench_class_counts": list(split.bench_class_counts),
            }
        )
    )
    manifest.record("split", fingerprint, [out_manifest, out_train, out_bench], seed=args.seed)
    return 0


def cmd_train(args) -> int:
    import torch

    from .sft.backend import TinyBackend
    from .sft.data import make_training_example
    from .sft.trainer import TrainerConfig, train

    data_dir = Path(args.data)
    manifest = PipelineManifest.load(data_dir)
    out_dir = Path(args.out) if args.out else data_dir / f"run-{args.code}-seed{args.seed}"

    overrides = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
    params = {
        "code": args.code,
        "optimizer": args.optimizer,
        "epochs": args.epochs,
        "seed": args.seed,
        "loss_mode": args.loss_mode,
        "overrides": overrides,
    }
    fingerprint = stage_fingerprint([args.annotations, args.split], params)
    if manifest.is_fresh(f"train:{args.code}:{args.seed}", fingerprint):
        print(f"train: up to date ({out_dir})")
        return 0

    experiment = parse_experiment_code(
        args.code,
        seed=args.seed,
        optimizer=args.optimizer,
        loss_mode=LossMode(args.loss_mode),
    )
    config = TrainerConfig(experiment=experiment, epochs=args.epochs, **overrides)

    pairs = _load_annotated(Path(args.annotations))
    split = SplitManifest.from_json_dict(
        json.loads(Path(args.split).read_text(encoding="utf-8"))
    )
    train_ids = set(split.train_ids)
    examples = [
        make_training_example(record, annotation, experiment.target)
        for record, annotation in pairs
        if record.id in train_ids
    ]
    if not examples:
        raise CliError("no training examples: train split and annotations do not overlap")
    rng_order = sorted(examples, key=lambda e: e.comment_id)
    dev_count = max(1, int(len(rng_order) * args.dev_fraction))
    dev_examples = rng_order[:dev_count]
    train_examples = rng_order[dev_count:]

    backend = TinyBackend(device="cpu")
    torch.manual_seed(args.seed)
    result = train(config, backend, train_examples, dev_examples, checkpoint_dir=out_dir)
    print(
        json.dumps(
            {
                "checkpoint": str(out_dir),
                "parameters": result.parameter_count,
                "dev_accuracy": result.dev_accuracy,
                "epochs": [log.to_json_dict() for log in result.logs],
            }
        )
    )
    manifest.record(f"train:{args.code}:{args.seed}", fingerprint, [out_dir / "model.pt"],
                    seed=args.seed)
    return 0


def _build_adapter(args):
    from .sft.backend import TinyBackend

    name = args.adapter
    if name == "mock":
        return ChatAdapter(KeywordMockClient(), name="mock-chat")
    if name == "constant":
        return ConstantAdapter(args.constant_answer, name=f"constant-{args.constant_answer}")
    if name == "oracle":
        return None  # built later from bench golds
    if name == "chat":
        return ChatAdapter(_client(args))
    if name.startswith("checkpoint:"):
        checkpoint = name.split(":", 1)[1]
        backend = TinyBackend.load_checkpoint(checkpoint)
        return CheckpointAdapter(backend, name=f"checkpoint-{Path(checkpoint).name}")
    if name == "moderation-mock":
        from .mockllm import toxicity_signal

        return ModerationAdapter(
            score_fn=lambda prompt: toxicity_signal(prompt) / 10.0,
            threshold=args.threshold,
            name="moderation-mock",
        )
    raise CliError(f"unknown adapter {name!r}")


def cmd_eval(args) -> int:
    data_dir = Path(args.data)
    manifest = PipelineManifest.load(data_dir)
    out_dir = Path(args.out) if args.out else data_dir / f"eval-{args.adapter}-{args.mode}"

    rows = _read_jsonl(Path(args.bench))
    bench = [
        BenchItem(id=row["id"], text=row["text"], gold=LabelValue(row["label"]),
                  lang=row.get("lang", "fr"))
        for row in rows
    ]
    pool = []
    if args.pool:
        pool = [
            (row["text"], LabelValue(row["label"])) for row in _read_jsonl(Path(args.pool))
        ]
    config = PromptConfig(mode=PromptMode(args.mode), k=args.k, exemplar_seed=args.seed)

    params = {"adapter": args.adapter, "prompt": config.cache_key, "seed": args.seed}
    fingerprint = stage_fingerprint([args.bench] + ([args.pool] if args.pool else []), params)
    stage = f"eval:{args.adapter}:{args.mode}"
    if manifest.is_fresh(stage, fingerprint):
        print(f"eval: up to date ({out_dir})")
        return 0

    adapter = _build_adapter(args)
    if adapter is None:
        adapter = OracleAdapter({item.text: item.gold for item in bench})
    result = run_benchmark(
        adapter,
        bench,
        config,
        exemplar_pool=pool,
        cache_path=out_dir / "cache.jsonl",
        invalid_policy=LabelValue(args.invalid_policy),
        max_concurrency=args.max_concurrency,
    )
    json_path, text_path = write_eval_report(result, out_dir)
    errors = misclassification_report(result, k=args.errors_per_type)
    texts = {item.id: item.text for item in bench}
    (out_dir / "misclassified.txt").write_text(
        render_misclassifications(errors, texts) + "\n", encoding="utf-8"
    )
    print(
        json.dumps(
            {
                "accuracy": result.report.accuracy,
                "invalid_rate": result.invalid_rate,
                "new_invocations": result.new_invocations,
                "result": str(json_path),
            }
        )
    )
    print(render_class_report(result.report), file=sys.stderr)
    manifest.record(stage, fingerprint, [json_path, text_path], seed=args.seed)
    return 0


def cmd_xlingual(args) -> int:
    rows = _read_jsonl(Path(args.subset))
    source_lang, target_lang = args.direction.split("2", 1)
    items = [
        BenchItem(
            id=row["id"], text=row["text"], gold=LabelValue(row["label"]),
            lang=row.get("lang", source_lang),
        )
        for row in rows
    ]
    client = EchoTranslationClient(target_lang) if args.mock else _client(args)
    translated, warnings = translate_subset(items, client, target_lang)
    _write_jsonl(
        Path(args.out),
        (
            {
                "id": item.id,
                "text": item.text,
                "source_text": item.source_text,
                "label": item.gold.value,
                "lang": target_lang,
                "direction": item.direction,
                "passthrough": item.passthrough,
            }
            for item in translated
        ),
    )
    for warning in warnings:
        print(warning, file=sys.stderr)
    print(json.dumps({"translated": len(translated), "excluded": len(warnings)}))
    return 0


def cmd_report(args) -> int:
    data_dir = Path(args.data)
    manifest = PipelineManifest.load(data_dir)
    report = {"stages": manifest.stages, "prompt_bundle": prompt_bundle_hash()}
    store_dir = data_dir / "store"
    if (store_dir / "events.jsonl").exists():
        store = AnnotationStore(store_dir)
        report["progress"] = store.progress()
    split_path = data_dir / "split.json"
    if split_path.exists():
        split = json.loads(split_path.read_text(encoding="utf-8"))
        report["split"] = {
            "train": len(split["train_ids"]),
            "bench": len(split["bench_ids"]),
            "train_toxic_fraction": split["train_toxic_fraction"],
        }
    evals = {}
    for result_path in sorted(data_dir.glob("eval-*/result.json")):
        data = json.loads(result_path.read_text(encoding="utf-8"))
        evals[result_path.parent.name] = {
            "accuracy": data["report"]["accuracy"],
            "invalid_rate": data["invalid_rate"],
        }
    if evals:
        report["evals"] = evals
    out = data_dir / "report.json"
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toxipipe",
        description="Toxicity-classifier pipeline: ingest, preannotate, label, split, train, eval.",
    )
    parser.add_argument("--data", default="data", help="pipeline data directory")
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    parser.add_argument("--config", default=None, help="JSON config file (train overrides)")
    parser.add_argument("--verbose", action="store_true")
    # the same flags are accepted after the subcommand; SUPPRESS keeps the
    # top-level defaults when they are not repeated there
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=lambda **kw: argparse.ArgumentParser(parents=[common], **kw))

    p = sub.add_parser("ingest", help="anonymize and filter a raw forum dump")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--salt", required=True, help="hex-encoded anonymization salt")
    p.add_argument("--min-words", type=int, default=corpus_mod.DEFAULT_MIN_WORDS)
    p.add_argument("--max-words", type=int, default=corpus_mod.DEFAULT_MAX_WORDS)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("preannotate", help="run the CoT chain and the auto-label rule")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-concurrency", type=int, default=4)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--mock", action="store_true", help="use the offline keyword mock client")
    p.set_defaults(func=cmd_preannotate)

    p = sub.add_parser("validate-rule", help="rule/human agreement with a Wilson interval")
    p.add_argument("--annotations", required=True)
    p.add_argument("--labels", default=None, help="JSONL {id, label}; defaults to store labels")
    p.set_defaults(func=cmd_validate_rule)

    p = sub.add_parser("serve", help="annotation queue HTTP service")
    p.add_argument("--port", type=int, default=8800)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--annotations", default=None, help="annotated corpus to load at startup")
    p.add_argument("--ui", default=None, help="static review-UI bundle directory")
    p.add_argument("--lease-timeout", type=float, default=15 * 60.0)
    p.add_argument("--decisions-per-item", type=int, default=1)
    p.add_argument("--validation-sample", type=int, default=0,
                   help="also queue N auto-labeled comments to measure rule/human agreement")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("split", help="seeded train/bench split over final labels")
    p.add_argument("--bench-per-class", type=int, required=True)
    p.add_argument("--annotations", default=None, help="annotated corpus to load first")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="fine-tune the desk-scale model")
    p.add_argument("--annotations", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--code", default="rec", help="experiment code, e.g. rec or odb")
    p.add_argument("--optimizer", default="adam")
    p.add_argument("--loss-mode", default="dynamic_weighted",
                   choices=[m.value for m in LossMode])
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--dev-fraction", type=float, default=0.1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run an adapter over a benchmark")
    p.add_argument("--adapter", required=True,
                   help="mock | constant | oracle | chat | moderation-mock | checkpoint:DIR")
    p.add_argument("--bench", required=True)
    p.add_argument("--pool", default=None, help="exemplar pool (train split) for ICL modes")
    p.add_argument("--mode", default="zero_detailed",
                   choices=[m.value for m in PromptMode])
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--out", default=None)
    p.add_argument("--invalid-policy", default="non_toxic",
                   choices=["non_toxic", "toxic"])
    p.add_argument("--constant-answer", default="oui")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--errors-per-type", type=int, default=3)
    p.add_argument("--max-concurrency", type=int, default=4)
    p.add_argument("--mock", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("xlingual", help="translate a labeled subset, labels unchanged")
    p.add_argument("--subset", required=True)
    p.add_argument("--direction", default="en2fr")
    p.add_argument("--out", required=True)
    p.add_argument("--mock", action="store_true")
    p.set_defaults(func=cmd_xlingual)

    p = sub.add_parser("report", help="aggregate pipeline artifacts into one report")
    p.set_defaults(func=cmd_report)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ChatClientError, ValueError, LookupError, PermissionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
