"""`emoctc` command line entry point.

Machine-readable JSON summary goes to stdout, human logs to stderr.
Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
import argparse
import json
import logging
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import baselines, dataset, evaluation, features, nn
from .ctc import DEFAULT_ALPHABET
from .dataset import EMOTIONS
from .errors import EmoCtcError, PartialImport

log = logging.getLogger("emoctc")


def _max_workers():
    env = os.environ.get("EMOCTC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _refuse_existing(path, force):
    if os.path.exists(path) and not force:
        raise EmoCtcError(
            f"{path} already exists; pass --force to overwrite")


def _emit(summary):
    json.dump(summary, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")


def _extract_all(corpus, pad=True, unified_len=features.UNIFIED_LEN):
    from concurrent.futures import ThreadPoolExecutor

    def one(u):
        seq = features.extract_sequence(u.id, u.samples)
        return features.pad_or_truncate(seq, unified_len) if pad else seq

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        return list(pool.map(one, corpus.utterances))


def cmd_synth_data(args):
    corpus = dataset.generate_synthetic_corpus(
        args.seed, args.per_class, (args.duration_min, args.duration_max),
        args.disagreement)
    _refuse_existing(os.path.join(args.out, "manifest.jsonl"), args.force)
    manifest = dataset.save_manifest(corpus, args.out)
    _emit({"command": "synth-data", "manifest": manifest,
           "utterances": len(corpus), "per_class": args.per_class,
           "seed": args.seed})
    return 0


def cmd_import_iemocap(args):
    _refuse_existing(args.out, args.force)
    try:
        manifest = dataset.import_iemocap(args.root)
        skipped = []
    except PartialImport as exc:
        manifest = exc.manifest
        skipped = exc.skipped
        log.warning("%s", exc)
    dataset.write_manifest_rows(manifest.rows, args.out)
    _emit({"command": "import-iemocap", "manifest": args.out,
           "utterances": len(manifest.rows), "skipped": len(skipped)})
    return 0


def cmd_features(args):
    corpus = dataset.load_manifest(args.manifest)
    _refuse_existing(args.out, args.force)
    seqs = _extract_all(corpus, pad=not args.no_pad)
    unified = 0 if args.no_pad else features.UNIFIED_LEN
    features.save_feature_dump(args.out, seqs, unified)
    _emit({"command": "features", "out": args.out,
           "utterances": len(seqs), "dim": features.FEATURE_DIM,
           "unified_len": unified})
    return 0


def _load_training_data(manifest):
    corpus = dataset.filter_four_emotions(dataset.load_manifest(manifest))
    seqs = _extract_all(corpus)
    labels = [EMOTIONS.index(u.final_label) for u in corpus]
    return corpus, seqs, labels


def cmd_train(args):
    corpus, raw_seqs, labels = _load_training_data(args.manifest)
    _refuse_existing(args.out, args.force)
    if args.method == "dummy":
        model = baselines.dummy_fit(labels)
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"kind": "dummy",
                       "majority_label": model.majority_label}, fh)
        _emit({"command": "train", "method": "dummy", "model": args.out})
        return 0
    if args.method == "framewise":
        # trained on raw features: the forest file carries no normalizer,
        # and tree splits are scale-free anyway
        clf = baselines.train_framewise(
            raw_seqs, labels, baselines.ForestConfig(seed=args.seed))
        baselines.save_forest(args.out, clf)
        _emit({"command": "train", "method": "framewise", "model": args.out})
        return 0

    norm = features.fit_normalizer(raw_seqs)
    seqs = [features.apply_normalizer(s, norm) for s in raw_seqs]

    net_cfg = nn.NetworkConfig(hidden_size=args.hidden, head=args.method)
    train_cfg = nn.TrainingConfig(
        learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs,
        seed=args.seed)
    # hold out the last group for early stopping; training never splits
    # internally
    groups = sorted({u.group_id for u in corpus})
    val_group = groups[-1] if len(groups) > 1 else None
    data, val = [], []
    for u, seq, label in zip(corpus, seqs, labels):
        item = (seq.matrix, seq.true_len, label)
        (val if u.group_id == val_group else data).append(item)
    params, history = nn.train(data, val, net_cfg, train_cfg)
    nn.save_model(args.out, params, net_cfg, DEFAULT_ALPHABET, norm)
    _emit({"command": "train", "method": args.method, "model": args.out,
           "epochs_run": len(history),
           "final_train_loss": history[-1]["train_loss"],
           "best_val_mean_class": max(h["val_mean_class"] for h in history)})
    return 0


def cmd_decode(args):
    corpus = dataset.load_manifest(args.manifest)
    predictions = {}
    if args.model.endswith(".json"):
        with open(args.model, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("kind") == "dummy":
            for u in corpus:
                predictions[u.id] = EMOTIONS[payload["majority_label"]]
        else:
            clf = baselines.DecisionForest.from_json(payload)
            for u in corpus:
                seq = features.pad_or_truncate(
                    features.extract_sequence(u.id, u.samples))
                predictions[u.id] = EMOTIONS[
                    baselines.predict_framewise(clf, seq)]
    else:
        params, net_cfg, alphabet, norm = nn.load_model(args.model)
        for u in corpus:
            seq = features.pad_or_truncate(
                features.extract_sequence(u.id, u.samples),
                net_cfg.unified_len)
            if norm is not None:
                seq = features.apply_normalizer(seq, norm)
            c = nn.predict(params, net_cfg, seq.matrix, seq.true_len,
                           args.width)
            predictions[u.id] = alphabet.emotions[c]
    if args.out:
        _refuse_existing(args.out, args.force)
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(predictions, fh, sort_keys=True, indent=2)
    _emit({"command": "decode", "model": args.model,
           "utterances": len(predictions), "predictions": predictions})
    return 0


def cmd_crossval(args):
    corpus = dataset.filter_four_emotions(dataset.load_manifest(args.manifest))
    _refuse_existing(os.path.join(args.out, "table1.csv"), args.force)
    methods = tuple(args.methods.split(","))
    report = evaluation.run_comparison(
        corpus, methods=methods, seed=args.seed, k=args.folds,
        epochs=args.epochs, hidden_size=args.hidden, pooled=args.pooled)
    evaluation.write_report(report, args.out)
    _emit({"command": "crossval", "out": args.out, "seed": args.seed,
           "methods": {
               name: {"overall": round(res.overall, 4),
                      "mean_class": round(res.mean_class, 4)}
               for name, res in report.methods.items()}})
    return 0


def cmd_gradcheck(args):
    worst = {}
    for head in ("ctc", "onelabel"):
        worst[head] = nn.gradient_check(
            head, seed=args.seed, n_checks=args.samples,
            n_inputs=max(1, args.samples // 5))
    max_err = max(worst.values())
    _emit({"command": "gradcheck", "seed": args.seed,
           "max_rel_err": max_err,
           "per_head": {h: round(v, 8) for h, v in worst.items()},
           "pass": bool(max_err <= 1e-4)})
    return 0 if max_err <= 1e-4 else 1


def cmd_serve_annotation(args):
    import uvicorn

    from .annotation import AnnotationService
    from .server import create_app

    corpus = dataset.filter_four_emotions(dataset.load_manifest(args.manifest))
    service = AnnotationService(corpus, args.log, seed=args.seed)
    audio_dir = os.path.join(os.path.dirname(os.path.abspath(args.manifest)),
                             "audio")
    app = create_app(service, audio_dir, static_dir=args.static)
    log.info("serving annotation experiment on port %d", args.port)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_report(args):
    table = os.path.join(args.report_dir, "table1.csv")
    if not os.path.exists(table):
        raise EmoCtcError(f"{table} not found")
    import csv

    with open(table, newline="") as fh:
        rows = list(csv.DictReader(fh))
    _emit({"command": "report", "report_dir": args.report_dir,
           "table1": [{"method": r["method"],
                       "overall_accuracy": float(r["overall_accuracy"]),
                       "mean_class_accuracy": float(r["mean_class_accuracy"])}
                      for r in rows]})
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="emoctc",
        description="CTC-based speech emotion recognition toolkit")
    parser.add_argument("--config", help="TOML config file; flags override")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate the synthetic corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--per-class", type=int, default=25)
    p.add_argument("--duration-min", type=float, default=2.0)
    p.add_argument("--duration-max", type=float, default=5.0)
    p.add_argument("--disagreement", type=float, default=0.2)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("import-iemocap", help="build a manifest from IEMOCAP")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_import_iemocap)

    p = sub.add_parser("features", help="extract frame features")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-pad", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train one method")
    p.add_argument("--method", required=True,
                   choices=["ctc", "onelabel", "framewise", "dummy"])
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="predict labels with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("crossval", help="grouped cross-validation comparison")
    p.add_argument("--manifest", required=True)
    p.add_argument("--methods", default=",".join(evaluation.DEFAULT_METHODS))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--hidden", type=int, default=48)
    p.add_argument("--pooled", action="store_true",
                   help="pool predictions before computing metrics")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--samples", type=int, default=100)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("serve-annotation",
                       help="serve the human annotation experiment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--log", required=True, help="append-only label log")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--static", help="directory with the browser client")
    p.set_defaults(func=cmd_serve_annotation)

    p = sub.add_parser("report", help="summarize a crossval report directory")
    p.add_argument("--report-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def _apply_config_file(parser, argv):
    """Let a TOML file provide defaults; CLI flags still win."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    path = argv[i + 1]
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    extra = []
    for key, value in cfg.items():
        flag = "--" + key.replace("_", "-")
        if flag in argv:
            continue
        if isinstance(value, bool):
            if value:
                extra.append(flag)
        else:
            extra.extend([flag, str(value)])
    head = argv[:i] + argv[i + 2:]
    if head and not head[0].startswith("-"):
        return [head[0]] + extra + head[1:]
    return head + extra


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        parser.exit(2, f"emoctc: bad config file: {exc}\n")
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EmoCtcError, OSError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stdout, sort_keys=True)
        sys.stdout.write("\n")
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
