"""Command-line front end.

Every subcommand takes an optional ``--config`` file (YAML or JSON). Its
top-level keys supply defaults for the command's flags, and flags given on
the command line win. Structured sections (``training``, ``encoder``,
``mpu``, ``lora``, ``stacking``, ``runs``) configure the training commands.
Each command writes a manifest next to its outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import yaml

from mgtd import __version__
from mgtd.augment import BACK_TRANSLATED, FakeTranslator, HttpTranslator, TranslationCache, TranslationRoute, translate_batch
from mgtd.cleaning import CleaningMode, clean_corpus, load_boilerplate
from mgtd.corpus import (
    SUBTASK_B,
    TASKS,
    LabelSchema,
    load_corpus,
    load_version,
    read_predictions,
    rebalance,
    relabel_multiclass,
    save_version,
    build_version,
    write_documents,
    write_predictions,
)
from mgtd.ensemble import StackFeatures, collect_logits, stack_predict, stack_train
from mgtd.errors import ConfigError
from mgtd.experiments import RunConfig, default_ablation, evaluate, run_ablation, train_run
from mgtd.modeling.encoder import load_checkpoint, predict, predicted_labels, save_checkpoint
from mgtd.modeling.mpu import MpuConfig
from mgtd.modeling.ovr import ovr_predict_batch, ovr_train
from mgtd.modeling.training import accuracy
from mgtd.stats import corpus_stats, format_table, to_records
from mgtd.synthetic import make_detection_split

logger = logging.getLogger("mgtd")

SECTIONS = ("training", "encoder", "mpu", "lora", "stacking", "runs")
TRAIN_FLAGS = {"epochs": "epochs", "learning_rate": "learning_rate", "batch_size": "batch_size"}


# --------------------------------------------------------------------------
# Config, manifests, hashing
# --------------------------------------------------------------------------


def load_config(path) -> dict:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _input_hashes(paths) -> dict:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(x for x in p.rglob("*") if x.is_file()):
                out[str(f)] = sha256_file(f)
        elif p.exists():
            out[str(p)] = sha256_file(p)
    return out


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=str)


def write_manifest(output, args, inputs, **extra) -> Path:
    """``<output>.manifest.json`` for a file, ``<output>/manifest.json`` for a directory."""
    output = Path(output)
    path = output / "manifest.json" if output.is_dir() else output.with_name(output.name + ".manifest.json")
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
    manifest = {
        "command": args.command,
        "config": config,
        "config_hash": hashlib.sha256(_canonical(config).encode()).hexdigest(),
        "inputs": _input_hashes(inputs),
        "seed": getattr(args, "seed", None),
        "version": __version__,
        **extra,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def _need(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, [], ""):
            raise ConfigError(f"--{name.replace('_', '-')} is required")


def _section(args, name) -> dict:
    value = args.config_data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return dict(value)


def _training(args) -> dict:
    opts = _section(args, "training")
    for flag, key in TRAIN_FLAGS.items():
        if getattr(args, flag, None) is not None:
            opts[key] = getattr(args, flag)
    return opts


def _schema(args) -> LabelSchema:
    return LabelSchema.for_task(args.task)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_synth(args):
    _need(args, "output", "seed")
    out = Path(args.output)
    train, dev = make_detection_split(args.n_train, args.n_dev, seed=args.seed, short_fraction=args.short_fraction,
                                      n_classes=args.classes)
    write_documents(train, out / "train.jsonl")
    write_documents(dev, out / "dev.jsonl")
    write_manifest(out, args, [])


def cmd_clean(args):
    _need(args, "input", "output")
    docs = load_corpus(args.input)
    boilerplate = load_boilerplate(args.boilerplate) if args.boilerplate else None
    cleaned, report = clean_corpus(docs, CleaningMode(args.mode), boilerplate=boilerplate)
    write_documents(cleaned, args.output)
    summary = {"rule_counts": report.counts, "documents_emptied": report.documents_emptied,
               "documents_in": len(docs), "documents_out": len(cleaned)}
    print(json.dumps(summary, sort_keys=True))
    write_manifest(args.output, args, [args.input, args.boilerplate] if args.boilerplate else [args.input],
                   summary=summary)


def cmd_augment(args):
    _need(args, "input", "output")
    docs = load_corpus(args.input)
    route = TranslationRoute(frozenset(args.sources.split(",")), args.target)
    cache = TranslationCache(args.cache)
    client = FakeTranslator() if args.provider == "fake" else HttpTranslator.from_env()
    try:
        result = translate_batch(docs, route, cache, client, max_in_flight=args.max_in_flight,
                                 fail_fast=args.fail_fast)
    finally:
        if hasattr(client, "close"):
            client.close()
    translated = [d for d in result.documents if BACK_TRANSLATED in d.provenance]
    write_documents(translated, args.output)
    summary = {"translated": len(translated), "failed": len(result.failures), "cache_hits": cache.hits}
    if result.failures:
        failures = Path(args.output).with_name(Path(args.output).name + ".failures.jsonl")
        failures.write_text("".join(json.dumps({"id": i, "error": e}) + "\n" for i, e in result.failures),
                            encoding="utf-8")
    print(json.dumps(summary, sort_keys=True))
    write_manifest(args.output, args, [args.input], summary={"translated": len(translated),
                                                              "failed": len(result.failures)})


def cmd_stats(args):
    if not args.input and not args.version_dir:
        raise ConfigError("give --input files or --version-dir")
    rows = {}
    inputs = []
    if args.version_dir:
        version = load_version(args.version_dir)
        for key, docs in sorted(version.splits.items()):
            rows[key] = corpus_stats(docs, threshold=args.threshold)
        inputs.append(args.version_dir)
    for spec in args.input or []:
        name, _, path = spec.rpartition("=")
        path = path or spec
        rows[(name or Path(path).parent.name, Path(path).stem)] = corpus_stats(load_corpus(path),
                                                                                threshold=args.threshold)
        inputs.append(path)
    print(format_table(rows), end="")
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(to_records(rows), encoding="utf-8")
        write_manifest(args.output, args, inputs)


def cmd_build_version(args):
    _need(args, "v1", "translated", "output")
    v1 = load_version(args.v1)
    translated = load_corpus(args.translated)
    boilerplate = load_boilerplate(args.boilerplate) if args.boilerplate else None
    version = build_version(v1, args.plan, translated, boilerplate=boilerplate)
    save_version(version, args.output)
    for step in version.lineage:
        for w in step.warnings:
            logger.warning("%s: %s", step.name, w)
    sizes = {f"{t}/{s}": n for (t, s), n in version.sizes().items()}
    print(json.dumps(sizes, sort_keys=True))
    write_manifest(args.output, args, [args.v1, args.translated], sizes=sizes)


def cmd_relabel(args):
    _need(args, "input", "output")
    schema = LabelSchema.for_task(SUBTASK_B)
    tagmap = json.loads(Path(args.tagmap).read_text(encoding="utf-8")) if args.tagmap else schema.class_to_id
    docs = relabel_multiclass(load_corpus(args.input), tagmap)
    if args.cap is not None:
        _need(args, "seed")
        docs = rebalance(docs, args.cap, args.seed)
    write_documents(docs, args.output)
    write_manifest(args.output, args, [args.input] + ([args.tagmap] if args.tagmap else []))


def _run_config(args, method) -> RunConfig:
    return RunConfig(
        label=method, method=method, seed=args.seed, task=args.task, version=args.dataset_version,
        encoder=_section(args, "encoder"), train=_training(args), mpu=_section(args, "mpu"),
        lora=_section(args, "lora"),
    )


def cmd_train(args):
    _need(args, "train", "dev", "output", "seed")
    schema = _schema(args)
    train, dev = load_corpus(args.train, schema), load_corpus(args.dev, schema)
    rc = _run_config(args, args.method)
    model = train_run(rc, train, dev)
    save_checkpoint(model, args.output, run=asdict(rc))
    acc = accuracy(model, dev)
    print(json.dumps({"dev_accuracy": acc, "best_epoch": model.best_epoch, "history": model.history}))
    write_manifest(args.output, args, [args.train, args.dev], dev_accuracy=acc)


def cmd_predict(args):
    _need(args, "model", "input", "output")
    model, _ = load_checkpoint(args.model)
    docs = load_corpus(args.input)
    logits = predict(model, docs)
    write_predictions(list(zip(logits.ids, predicted_labels(logits.values).tolist())), args.output)
    if args.logits:
        labels = None if any(d.label is None for d in docs) else [d.label for d in docs]
        StackFeatures(logits.values, [Path(args.model).stem], model.num_classes, logits.ids, labels).save(args.logits)
    write_manifest(args.output, args, [args.model, args.input])


def cmd_stack(args):
    _need(args, "models", "dev", "output", "seed")
    names = [Path(m).stem for m in args.models]
    if len(set(names)) != len(names):
        raise ConfigError("stacked checkpoints need distinct file names")
    models = [(n, load_checkpoint(m)[0]) for n, m in zip(names, args.models)]
    dev = load_corpus(args.dev)
    features = collect_logits(models, dev)
    opts = {"epochs": 3000 if args.task == SUBTASK_B else 1000, **_section(args, "stacking")}
    if args.epochs is not None:
        opts["epochs"] = args.epochs
    if args.learning_rate is not None:
        opts["learning_rate"] = args.learning_rate
    stack = stack_train(features, features, seed=args.seed, **opts)
    stack.save(args.output)
    inputs = list(args.models) + [args.dev]
    if args.input:
        _need(args, "predictions")
        docs = load_corpus(args.input)
        test = collect_logits(models, docs)
        write_predictions(list(zip(test.ids, stack_predict(stack, test))), args.predictions)
        inputs.append(args.input)
    acc = stack.history[stack.best_epoch - 1]
    print(json.dumps({"dev_accuracy": acc, "best_epoch": stack.best_epoch}))
    write_manifest(args.output, args, inputs, dev_accuracy=acc)


def cmd_ovr(args):
    _need(args, "train", "dev", "output", "seed")
    schema = _schema(args)
    train, dev = load_corpus(args.train, schema), load_corpus(args.dev, schema)
    rc = _run_config(args, "ovr")
    mpu = _section(args, "mpu")
    ovr = ovr_train(train, dev, schema, rc.train_config(), MpuConfig(**mpu) if mpu else None)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for class_id, model in enumerate(ovr.classifiers):
        save_checkpoint(model, out / f"class-{class_id}.safetensors", run=asdict(rc), positive_class=class_id)
    preds = ovr_predict_batch(ovr, dev)
    acc = evaluate(list(zip([d.id for d in dev], preds)), [(d.id, d.label) for d in dev])
    inputs = [args.train, args.dev]
    if args.input:
        _need(args, "predictions")
        docs = load_corpus(args.input)
        write_predictions(list(zip([d.id for d in docs], ovr_predict_batch(ovr, docs))), args.predictions, schema)
        inputs.append(args.input)
    print(json.dumps({"dev_accuracy": acc, "classifiers": len(ovr.classifiers)}))
    write_manifest(out, args, inputs, dev_accuracy=acc)


def cmd_evaluate(args):
    _need(args, "predictions", "gold")
    gold = [(d.id, d.label) for d in load_corpus(args.gold)]
    acc = evaluate(read_predictions(args.predictions), gold)
    result = {"accuracy": acc, "n_gold": len(gold)}
    print(json.dumps(result))
    if args.output:
        Path(args.output).write_text(json.dumps(result, sort_keys=True) + "\n", encoding="utf-8")
        write_manifest(args.output, args, [args.predictions, args.gold])


def _ablation_configs(args) -> list[RunConfig]:
    runs = args.config_data.get("runs")
    shared = dict(task=args.task, version=args.dataset_version, train=_training(args))
    if not runs:
        return default_ablation(args.seed, **shared)
    configs = []
    for run in runs:
        run = dict(run)
        run.setdefault("seed", args.seed)
        for key, value in shared.items():
            run.setdefault(key, value)
        configs.append(RunConfig(**run))
    return configs


def cmd_ablate(args):
    _need(args, "train", "dev", "output", "seed")
    schema = _schema(args)
    train, dev = load_corpus(args.train, schema), load_corpus(args.dev, schema)
    table = run_ablation(_ablation_configs(args), train, dev, cache_dir=args.cache_dir)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.txt").write_text(table.format(), encoding="utf-8")
    (out / "table.jsonl").write_text(table.to_records(), encoding="utf-8")
    print(table.format(), end="")
    write_manifest(out, args, [args.train, args.dev])


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _train_flags(p, seed_help="random seed (required)"):
    p.add_argument("--train", help="training corpus (JSONL)")
    p.add_argument("--dev", help="dev corpus (JSONL)")
    p.add_argument("--task", choices=TASKS, default="subtaskA-mono")
    p.add_argument("--dataset-version", default="v1", help="dataset version label recorded with the run")
    p.add_argument("--seed", type=int, help=seed_help)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="mgtd", description="Machine-generated text detection toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="YAML/JSON config; flags override its values")
        p.add_argument("-v", "--verbose", action="store_true")
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("synth", cmd_synth, "write a synthetic detection corpus")
    p.add_argument("--output", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-dev", type=int, default=500)
    p.add_argument("--short-fraction", type=float, default=0.3)
    p.add_argument("--classes", type=int, default=2)

    p = add("clean", cmd_clean, "clean a corpus")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--mode", choices=[m.value for m in CleaningMode], default=CleaningMode.ENGLISH.value)
    p.add_argument("--boilerplate", help="file with one boilerplate regex per line")

    p = add("augment", cmd_augment, "back-translate documents into the target language")
    p.add_argument("--input")
    p.add_argument("--output", help="translated documents only")
    p.add_argument("--cache", help="JSONL translation cache")
    p.add_argument("--provider", choices=["http", "fake"], default="http")
    p.add_argument("--sources", default="zh,id,ur,bg", help="comma-separated source language codes")
    p.add_argument("--target", default="en")
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--fail-fast", action="store_true")

    p = add("stats", cmd_stats, "corpus statistics table")
    p.add_argument("--input", action="append", help="[name=]path; repeatable")
    p.add_argument("--version-dir", help="dataset version directory")
    p.add_argument("--threshold", type=int, default=512)
    p.add_argument("--output", help="JSONL records")

    p = add("build-version", cmd_build_version, "derive dataset v2/v3 from v1")
    p.add_argument("--v1", help="v1 directory with <track>/<split>.jsonl files")
    p.add_argument("--translated", help="back-translated documents (JSONL)")
    p.add_argument("--plan", choices=["v2", "v3"], default="v2")
    p.add_argument("--boilerplate")
    p.add_argument("--output")

    p = add("relabel", cmd_relabel, "map source tags to class ids and optionally cap class sizes")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--tagmap", help="JSON object from source tag to class id")
    p.add_argument("--cap", type=int)
    p.add_argument("--seed", type=int)

    p = add("train", cmd_train, "fine-tune a classifier")
    _train_flags(p)
    p.add_argument("--method", choices=["fine-tune", "fine-tune+lora", "mpu"], default="fine-tune")
    p.add_argument("--output", help="checkpoint path")

    p = add("predict", cmd_predict, "label documents with a checkpoint")
    p.add_argument("--model")
    p.add_argument("--input")
    p.add_argument("--output", help="predictions (JSONL)")
    p.add_argument("--logits", help="also write raw scores as stack features")

    p = add("stack", cmd_stack, "train the logit-stacking meta-learner")
    p.add_argument("--models", nargs="+", help="base-model checkpoints, in feature order")
    p.add_argument("--dev")
    p.add_argument("--task", choices=TASKS, default="subtaskA-mono")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--output", help="stack model (JSON)")
    p.add_argument("--input", help="documents to label with the trained stack")
    p.add_argument("--predictions")

    p = add("ovr", cmd_ovr, "train one-vs-rest attribution classifiers")
    _train_flags(p)
    p.set_defaults(task=SUBTASK_B)
    p.add_argument("--output", help="output directory")
    p.add_argument("--input", help="documents to label after training")
    p.add_argument("--predictions")

    p = add("evaluate", cmd_evaluate, "accuracy of predictions against gold labels")
    p.add_argument("--predictions")
    p.add_argument("--gold", help="labeled corpus (JSONL)")
    p.add_argument("--output", help="result JSON")

    p = add("ablate", cmd_ablate, "run an ablation table")
    _train_flags(p)
    p.add_argument("--output", help="output directory")
    p.add_argument("--cache-dir", help="reuse trained base models across invocations")

    return parser, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    data = load_config(args.config) if args.config else {}
    flags = {k: v for k, v in data.items() if k not in SECTIONS}
    unknown = sorted(set(flags) - set(vars(args)) - {"command", "func"})
    if unknown:
        raise ConfigError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    if flags:
        subs[args.command].set_defaults(**flags)
        args = parser.parse_args(argv)
    args.config_data = {k: v for k, v in data.items() if k in SECTIONS}
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except SystemExit:
        raise
    except Exception as e:
        logger.debug("command failed", exc_info=True)
        record = {"error": type(e).__name__, "message": str(e)}
        print(json.dumps(record), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
