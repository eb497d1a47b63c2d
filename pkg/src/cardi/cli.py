"""Command-line entry point.

Subcommands: ingest, preprocess, train, evaluate, fuzzify, chat-eval,
serve. Options resolve as flags > config file > defaults; runs that write
to a directory also emit the fully-resolved configuration snapshot there.
Every subcommand works offline (the train default is a bundled synthetic
set). Failures print one machine-parsable JSON line to stderr and exit
nonzero; unknown flags exit 2 with usage text.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover - environment dependent
    import tomli as tomllib

DATA_DIR_ENV = "CARDI_DATA_DIR"


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _resolve(flag_value, file_section: dict, key: str, default):
    """Precedence: explicit flag > config file entry > default."""
    if flag_value is not None:
        return flag_value
    if key in file_section:
        return file_section[key]
    return default


def _write_snapshot(out_dir: Path, resolved: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True))


def _fail(exc: BaseException) -> int:
    print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
    return 1


# --- subcommand implementations --------------------------------------------

def cmd_ingest(args) -> int:
    from .ingest import (LabelSpace, build_manifest, load_merge_map, parse_header,
                         stratified_split)

    data_dir = Path(args.data_dir or os.environ.get(DATA_DIR_ENV, "."))
    headers = sorted(data_dir.glob("*.hea"))
    if not headers:
        raise FileNotFoundError(f"no .hea headers under {data_dir}")
    if args.merge_map:
        merge_map = load_merge_map(args.merge_map)
        classes = sorted({c for c in _classes_from_headers(headers)
                          if c not in merge_map} | set(merge_map.values()))
        space = LabelSpace(classes, merge_map)
    else:
        space = LabelSpace.default()
    meta = []
    for path in headers:
        info = parse_header(path.read_text())
        meta.append((info.record_id, str(path), info.dx_codes))
    manifest, diagnostics = build_manifest(meta, space)
    ratios = tuple(float(r) for r in args.ratios.split(","))
    manifest = stratified_split(manifest, ratios, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest.save_csv(out_dir / "manifest.csv")
    (out_dir / "ingest_diagnostics.json").write_text(json.dumps(diagnostics, indent=2))
    _write_snapshot(out_dir, {"command": "ingest", "data_dir": str(data_dir),
                              "ratios": list(ratios), "seed": args.seed,
                              "n_records": len(manifest),
                              "classes": list(space.classes)})
    print(json.dumps({"manifest": str(out_dir / "manifest.csv"),
                      "n_records": len(manifest),
                      "n_unknown_dropped": diagnostics["n_unknown_dropped"]}))
    return 0


def _classes_from_headers(headers) -> set[str]:
    from .ingest import parse_header

    codes: set[str] = set()
    for path in headers:
        codes |= set(parse_header(Path(path).read_text()).dx_codes)
    return codes


def cmd_preprocess(args) -> int:
    from .ingest import DatasetManifest, load_record
    from .preprocess import preprocess_record, save_cache

    data_dir = Path(args.data_dir or os.environ.get(DATA_DIR_ENV, "."))
    manifest = DatasetManifest.load_csv(args.manifest)
    inputs = {}
    for entry in manifest.entries:
        record = load_record(data_dir / f"{entry.record_id}.hea")
        inputs[entry.record_id] = preprocess_record(record, entry.labels, seed=args.seed)
    out_dir = Path(args.out)
    cache_manifest = save_cache(inputs, out_dir)
    _write_snapshot(out_dir, {"command": "preprocess", "manifest": str(args.manifest),
                              "data_dir": str(data_dir), "seed": args.seed,
                              "n_records": len(inputs)})
    print(json.dumps({"cache_manifest": str(cache_manifest), "n_records": len(inputs)}))
    return 0


def cmd_train(args) -> int:
    from .ingest import DatasetManifest, ManifestEntry, stratified_kfold
    from .net import EcgResNet, ModelConfig, save_checkpoint
    from .synth import make_classification_toy
    from .training import Dataset, TrainConfig, evaluate_challenge, train_staged

    file_cfg = _load_config_file(args.config)
    model_section = dict(file_cfg.get("model", {}))
    train_section = dict(file_cfg.get("train", {}))
    data_section = dict(file_cfg.get("data", {}))

    train_config = TrainConfig(
        stages=int(_resolve(args.stages, train_section, "stages", 5)),
        epochs_per_stage=int(_resolve(args.epochs, train_section, "epochs_per_stage", 50)),
        batch_size=int(_resolve(args.batch_size, train_section, "batch_size", 8)),
        learning_rate=float(_resolve(args.lr, train_section, "learning_rate", 5e-3)),
        class_weight_mode=str(train_section.get("class_weight_mode", "inverse-frequency")),
        threshold=float(_resolve(args.threshold, train_section, "threshold", 0.5)),
        seed=int(_resolve(args.seed if args.seed != 0 else None, train_section, "seed", 0)),
    )

    if args.cache_dir:
        from .preprocess import load_cache

        cache = load_cache(args.cache_dir)
        signals = np.stack([mi.signal for mi in cache.values()])
        demos = np.stack([mi.demographics for mi in cache.values()])
        labels = np.stack([mi.label for mi in cache.values()])
        data = Dataset(signals, demos, labels)
        model_defaults = {"n_classes": labels.shape[1], "input_length": signals.shape[2]}
    else:
        toy = {"n_records": int(data_section.get("n_records", 32)),
               "n_classes": int(data_section.get("n_classes", 4)),
               "length": int(data_section.get("length", 256)),
               "seed": train_config.seed}
        data = make_classification_toy(**toy)
        model_defaults = {
            "n_resblocks": 4, "init_filters": 8, "filter_cap": 64, "se_reduction": 4,
            "dropout": 0.0, "n_classes": toy["n_classes"], "input_length": toy["length"],
        }
    model_config = ModelConfig(**{**model_defaults, **model_section})

    # hold out one stratified fold for validation when the set is big enough
    entries = [ManifestEntry(f"r{i:05d}", "", data.labels[i]) for i in range(len(data))]
    manifest = DatasetManifest(entries)
    if len(data) >= 8:
        folds = stratified_kfold(manifest, k=4, seed=train_config.seed)
        val_ids = {e.record_id for e in folds[0].entries}
        val_rows = np.array([i for i, e in enumerate(entries) if e.record_id in val_ids])
        train_rows = np.array([i for i, e in enumerate(entries) if e.record_id not in val_ids])
    else:
        train_rows = val_rows = np.arange(len(data))
    train_data = Dataset(data.signals[train_rows], data.demographics[train_rows],
                         data.labels[train_rows])
    val_data = Dataset(data.signals[val_rows], data.demographics[val_rows],
                       data.labels[val_rows])

    metric_weights = np.eye(model_config.n_classes)
    if args.weights:
        from .metric import load_weights_csv

        metric_weights = load_weights_csv(args.weights).values
    normal_index = int(train_section.get("normal_class_index", 0))

    model = EcgResNet(model_config, seed=train_config.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    best, history = train_staged(model, train_data, val_data, train_config,
                                 metric_weights, normal_index, checkpoint_dir=out_dir)
    history.save_csv(out_dir / "history.csv")
    save_checkpoint(out_dir / "best.npz", model,
                    {"checkpoint_id": "best", "stage_best": history.stage_best})
    final = {
        "best_checkpoint": str(out_dir / "best.npz"),
        "stage_best": history.stage_best,
        "final_val_score": evaluate_challenge(model, val_data, metric_weights,
                                              normal_index, train_config.threshold),
        "epochs_run": len(history.epochs),
    }
    (out_dir / "report.json").write_text(json.dumps(final, indent=2))
    _write_snapshot(out_dir, {
        "command": "train",
        "model": model_config.to_dict(),
        "train": dataclasses.asdict(train_config),
        "data_source": args.cache_dir or "synthetic",
    })
    print(json.dumps(final))
    return 0


def cmd_evaluate(args) -> int:
    from .metric import PredictionSet, challenge_score, load_weights_csv

    weights = load_weights_csv(args.weights)
    y_true, ids_t = _read_label_csv(args.truth, len(weights.classes))
    y_pred, ids_p = _read_label_csv(args.pred, len(weights.classes))
    if ids_t != ids_p:
        raise ValueError("truth and prediction files list different record ids")
    normal_code = args.normal_class or ("426783006" if "426783006" in weights.classes
                                        else weights.classes[0])
    if normal_code not in weights.classes:
        raise ValueError(f"normal class {normal_code} not among the weight matrix classes")
    ps = PredictionSet(y_true, y_pred, weights.classes.index(normal_code))
    report = challenge_score(ps, weights, mode=args.mode)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "score_report.json").write_text(report.to_json())
        _write_snapshot(out_dir, {"command": "evaluate", "mode": args.mode,
                                  "normal_class": normal_code,
                                  "weights": str(args.weights)})
    print(report.to_json())
    return 0


def _read_label_csv(path: str, n_classes: int):
    import csv as _csv

    rows = []
    ids = []
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        if header[:2] != ["record_id", "label_bits"]:
            raise ValueError(f"{path}: expected header record_id,label_bits")
        for row in reader:
            ids.append(row[0])
            bits = row[1]
            if len(bits) != n_classes:
                raise ValueError(f"{path}: row {row[0]} has {len(bits)} bits, "
                                 f"expected {n_classes}")
            rows.append([int(b) for b in bits])
    return np.array(rows, dtype=int), ids


def cmd_fuzzify(args) -> int:
    from .fuzzy import fuzzify, report_to_json

    with open(args.probs, newline="") as fh:
        import csv as _csv

        reader = _csv.reader(fh)
        header = next(reader)
        has_id = header and header[0] == "record_id"
        codes = header[1:] if has_id else header
        rows = [(row[0] if has_id else str(i), [float(v) for v in (row[1:] if has_id else row)])
                for i, row in enumerate(reader)]
    if not rows:
        raise ValueError(f"{args.probs}: no probability rows")
    reports = [(rid, fuzzify(np.array(vals), args.threshold, codes, args.convention))
               for rid, vals in rows]
    if len(reports) == 1:
        print(report_to_json(reports[0][1]))
    else:
        for rid, report in reports:
            print(json.dumps({"record_id": rid,
                              "report": json.loads(report_to_json(report))}))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for rid, report in reports:
            (out_dir / f"{rid}.json").write_text(report_to_json(report))
        _write_snapshot(out_dir, {"command": "fuzzify", "threshold": args.threshold,
                                  "convention": args.convention})
    return 0


def cmd_chat_eval(args) -> int:
    from .chateval import (HashingEmbedder, evaluate_dataset, read_pairs_jsonl,
                           write_scores_jsonl)

    pairs = read_pairs_jsonl(args.pairs)
    evaluation = evaluate_dataset(pairs, HashingEmbedder(), tau=args.tau)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_scores_jsonl(evaluation, out_dir / "scores.jsonl")
        (out_dir / "summary.json").write_text(json.dumps(evaluation.summary(), indent=2,
                                                         sort_keys=True))
        _write_snapshot(out_dir, {"command": "chat-eval", "tau": args.tau,
                                  "pairs": str(args.pairs)})
    print(json.dumps(evaluation.summary(), sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    from .service import build_state, serve

    state = build_state(args.checkpoint, args.weights, args.kb_dir,
                        threshold=args.threshold, convention=args.convention,
                        retrieval_k=args.retrieval_k, session_dir=args.session_dir)
    serve(state, host=args.host, port=args.port)
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cardi",
                                     description="ECG classification and chat pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse headers, build a stratified manifest")
    p.add_argument("--data-dir", help=f"record directory (default ${DATA_DIR_ENV})")
    p.add_argument("--merge-map", help="alias_code,canonical_code CSV")
    p.add_argument("--ratios", default="0.72,0.18,0.10")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("preprocess", help="build fixed-shape model inputs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--data-dir")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="staged checkpoint training")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--stages", type=int)
    p.add_argument("--epochs", type=int, help="epochs per stage")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache-dir", help="preprocessed cache (default: bundled synthetic set)")
    p.add_argument("--weights", help="metric weight CSV (default: identity)")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="challenge score from truth/pred CSVs")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--mode", choices=("literal", "record-normalized"), default="literal")
    p.add_argument("--normal-class")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fuzzify", help="probabilities -> linguistic report")
    p.add_argument("--probs", required=True, help="CSV: header of class codes, rows of probs")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--convention", choices=("corrected", "literal"), default="corrected")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fuzzify)

    p = sub.add_parser("chat-eval", help="score question/response pairs")
    p.add_argument("--pairs", required=True, help="JSON-lines of {id, question, response, docs}")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_chat_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--kb-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--convention", choices=("corrected", "literal"), default="corrected")
    p.add_argument("--retrieval-k", type=int, default=3)
    p.add_argument("--session-dir")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage; keep its code
        return int(exc.code or 0)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
