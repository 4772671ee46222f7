"""Command-line entry point wiring the full pipeline.

Verbs: prepare, synth, train, eval, ablate, gradcheck, report. Every run
writes a manifest (resolved config, seed, artifact hashes) into its output
directory; `train --manifest` re-runs a training from a manifest and
reproduces its checkpoint bitwise.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import dataset, evaluation, synth
from .autodiff import AutodiffError, file_sha256, load_arrays, save_arrays
from .config import ConfigError
from .encoders import TextEncoder, TextEncoderConfig, VisionBackboneConfig, preprocess_tweet_text
from .encoders.text import Vocabulary
from .fusion import FusionModelConfig, InputMask, MultimodalModel
from .gradcheck_suite import run_suite
from .training import ModelData, TextOnlyModel, TrainConfig, score_dataset, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

ABLATION_MASKS = ("TT", "TT,IT", "I", "TT,IT,I")


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# manifest handling


def write_manifest(out_dir, verb, cfg, artifact_paths):
    manifest = {
        "verb": verb,
        "config": dict(sorted(cfg.items())),
        "artifacts": {
            Path(p).name: file_sha256(p) for p in artifact_paths if Path(p).exists()
        },
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_manifest_config(path):
    try:
        manifest = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    return {str(k): str(v) for k, v in manifest.get("config", {}).items()}


# ---------------------------------------------------------------------------
# model construction from config


def build_model_config(cfg):
    channels = cfgmod.get_ints(cfg, "model.backbone_channels", "8,16")
    image_side = cfgmod.get_int(cfg, "model.image_side", 16)
    backbone = VisionBackboneConfig(input_side=image_side, channels=channels)
    fusion = FusionModelConfig(
        variant=cfgmod.get_str(cfg, "model.variant", "TKM"),
        visual_dim=backbone.map_channels,
        map_side=backbone.map_side,
        hidden_dim=cfgmod.get_int(cfg, "model.hidden_dim", 32),
        tweet_kernels=cfgmod.get_int(cfg, "model.tweet_kernels", 4),
        imgtext_kernels=cfgmod.get_int(cfg, "model.imgtext_kernels", 2),
        fc_plan=cfgmod.get_ints(cfg, "model.fc_plan", "32,16,2"),
        fusion_channels=cfgmod.get_int(cfg, "model.fusion_channels", 16),
        dropout_rate=cfgmod.get_float(cfg, "model.dropout_rate", 0.5),
    )
    text = TextEncoderConfig(
        embedding_dim=cfgmod.get_int(cfg, "model.embedding_dim", 16),
        hidden_dim=fusion.hidden_dim,
    )
    return backbone, fusion, text


def build_model(cfg, vocab_size):
    variant = cfgmod.get_str(cfg, "model.variant", "TKM")
    seed = cfgmod.get_seed(cfg, "model.seed", 0)
    backbone, fusion, text = build_model_config(cfg)
    if variant == "LSTM":
        model = TextOnlyModel(TextEncoder(vocab_size, text, np.random.default_rng(seed)))
    else:
        model = MultimodalModel(
            vocab_size,
            fusion,
            backbone_config=backbone,
            text_config=text,
            seed=seed,
            share_text_encoder=cfgmod.get_bool(cfg, "model.share_text_encoder", True),
        )
    return model


# ---------------------------------------------------------------------------
# data directory handling


def load_split(data_dir, split, vocab):
    """Read <split>.jsonl (+ images/) back into a batchable ModelData."""
    path = Path(data_dir) / f"{split}.jsonl"
    if not path.exists():
        raise DataError(f"missing split file {path}")
    records, diagnostics = dataset.import_corpus(path)
    if diagnostics:
        raise DataError(f"{path}: {len(diagnostics)} malformed lines, first: {diagnostics[0][1]}")
    examples, unlabelable = dataset.label_corpus(records)
    if unlabelable:
        raise DataError(f"{path}: {len(unlabelable)} unlabelable records (all-fast votes)")
    by_id = {r.id: r for r in records}
    images = []
    tweet_ids, imgtext_ids, labels, ids = [], [], [], []
    image_dir = Path(data_dir) / "images"
    for ex in examples:
        record = by_id[ex.id]
        if record.image_ref:
            images.append(np.load(image_dir / record.image_ref))
        tweet_ids.append(vocab.encode(preprocess_tweet_text(record.tweet_text)))
        imgtext_ids.append(vocab.encode(preprocess_tweet_text(record.image_text)))
        labels.append(1 if ex.hate else 0)
        ids.append(ex.id)
    if images and len(images) != len(examples):
        raise DataError(f"{path}: some records have images and some do not")
    return ModelData(
        images=np.stack(images) if images else np.zeros((len(examples), 0, 0, 3)),
        tweet_ids=tweet_ids,
        imgtext_ids=imgtext_ids,
        labels=np.array(labels, dtype=np.int64),
        ids=ids,
    )


def load_data_dir(data_dir, splits=("train", "val", "test")):
    vocab_path = Path(data_dir) / "vocab.txt"
    if not vocab_path.exists():
        raise DataError(f"missing vocabulary file {vocab_path}")
    vocab = Vocabulary.load(vocab_path)
    return vocab, {split: load_split(data_dir, split, vocab) for split in splits}


# ---------------------------------------------------------------------------
# verbs


def cmd_prepare(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records, diagnostics = dataset.import_corpus(args.corpus)
    rules = dataset.FilterRuleSet(
        min_word_count=cfgmod.get_int(cfg, "dataset.min_word_count", 3),
        banned_terms=cfgmod.get_strs(cfg, "dataset.banned_terms", ""),
        keyword_list=cfgmod.get_strs(cfg, "dataset.keywords", ""),
        text_probability_threshold=cfgmod.get_float(cfg, "dataset.text_probability_threshold", 0.3),
    )
    kept, filter_log = [], []
    for record in records:
        reason = dataset.filter_tweet(record, rules)
        if reason is not dataset.FilterReason.KEEP:
            filter_log.append((record.id, reason.value))
            continue
        gate = dataset.gate_image_by_text_probability(record, rules.text_probability_threshold)
        if gate == "discard":
            filter_log.append((record.id, "text_image"))
            continue
        kept.append(record)

    examples, unlabelable = dataset.label_corpus(
        kept, min_duration=cfgmod.get_float(cfg, "dataset.min_duration", 3.0)
    )
    seed = cfgmod.get_seed(cfg, "dataset.seed", 0)
    val_size = cfgmod.get_int(cfg, "dataset.val_size", 0)
    test_size = cfgmod.get_int(cfg, "dataset.test_size", 0)
    if val_size or test_size:
        try:
            dataset.build_splits(examples, val_size, test_size, seed)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
    else:
        for ex in examples:
            ex.split = "train"

    dataset.export_corpus(kept, out / "filtered.jsonl")
    with open(out / "examples.csv", "w") as fh:
        fh.write("id,label,category,split,binary_tie\n")
        for ex in examples:
            label = "hate" if ex.hate else "not_hate"
            fh.write(f"{ex.id},{label},{ex.category},{ex.split},{int(ex.binary_tie)}\n")
    with open(out / "discards.csv", "w") as fh:
        fh.write("id,reason\n")
        for ident, reason in filter_log:
            fh.write(f"{ident},{reason}\n")
    with open(out / "import_errors.txt", "w") as fh:
        for _, message in diagnostics:
            fh.write(message + "\n")
        for ident in unlabelable:
            fh.write(f"unlabelable record {ident}: every annotation was a fast hit\n")
    if rules.keyword_list:
        rows = dataset.keyword_hate_rates(examples, rules.keyword_list)
        dataset.write_keyword_csv(rows, out / "keyword_rates.csv")
    counts = {}
    for ex in examples:
        counts[ex.category] = counts.get(ex.category, 0) + 1
    if counts:
        dataset.write_class_distribution_csv(counts, out / "class_distribution.csv")
    write_manifest(out, "prepare", cfg, sorted(str(p) for p in out.iterdir() if p.is_file()))
    print(
        f"prepare: {len(records)} records in, {len(kept)} kept, "
        f"{len(examples)} labeled, {len(diagnostics)} malformed lines"
    )
    return EXIT_OK


def cmd_synth(args, cfg):
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    spec = synth.SynthSpec(
        mode=cfgmod.get_str(cfg, "synth.mode", "crossmodal_xor"),
        n_train=cfgmod.get_int(cfg, "synth.n_train", 8000),
        n_val=cfgmod.get_int(cfg, "synth.n_val", 1000),
        n_test=cfgmod.get_int(cfg, "synth.n_test", 2000),
        noise_rate=cfgmod.get_float(cfg, "synth.noise_rate", 0.0),
        multimodal_fraction=cfgmod.get_float(cfg, "synth.multimodal_fraction", 1.0),
        image_side=cfgmod.get_int(cfg, "synth.image_side", 16),
        seed=cfgmod.get_seed(cfg, "synth.seed", 0),
    )
    splits = synth.generate(spec)
    vocab = synth.build_vocabulary()
    vocab.save(out / "vocab.txt")
    artifacts = [out / "vocab.txt"]
    for split, examples in splits.items():
        records = synth.to_records(examples, split, image_dir=str(out / "images"))
        dataset.export_corpus(records, out / f"{split}.jsonl")
        artifacts.append(out / f"{split}.jsonl")
    cfg = dict(cfg)
    cfg.setdefault("model.image_side", str(spec.image_side))
    write_manifest(out, "synth", cfg, [str(p) for p in artifacts])
    print(f"synth: wrote {', '.join(f'{len(v)} {k}' for k, v in splits.items())} to {out}")
    return EXIT_OK


def cmd_train(args, cfg):
    if args.manifest:
        cfg = {**load_manifest_config(args.manifest), **cfg}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_manifest = Path(args.data) / "manifest.json"
    if data_manifest.exists() and "model.image_side" not in cfg:
        cfg["model.image_side"] = load_manifest_config(data_manifest).get("model.image_side", "16")
    vocab, splits = load_data_dir(args.data, ("train", "val"))
    mask = InputMask.parse(cfgmod.get_str(cfg, "train.mask", "TT,IT,I"))
    model = build_model(cfg, len(vocab))
    train_config = TrainConfig(
        learning_rate=cfgmod.get_float(cfg, "train.lr", 1e-4),
        batch_size=cfgmod.get_int(cfg, "train.batch_size", 32),
        epochs=cfgmod.get_int(cfg, "train.epochs", 3),
        seed=cfgmod.get_seed(cfg, "train.seed", 0),
        mask=mask,
        class_weight_mode=cfgmod.get_str(cfg, "train.class_weight_mode", "balanced"),
        eval_every=cfgmod.get_int(cfg, "train.eval_every", 0),
    )
    best, history = train(model, splits["train"], splits["val"], train_config)
    checkpoint = out / "checkpoint.mfuse"
    save_arrays(checkpoint, best)
    history.write_csv(out / "history.csv")
    resolved = dict(cfg)
    resolved.setdefault("model.variant", "TKM")
    resolved["train.vocab_size"] = str(len(vocab))
    with open(out / "model.cfg", "w") as fh:
        for key in sorted(resolved):
            if key.startswith(("model.", "train.")):
                fh.write(f"{key} = {resolved[key]}\n")
    write_manifest(out, "train", resolved, [str(checkpoint), str(out / "history.csv")])
    if history.diverged:
        print("train: diverged (non-finite loss); kept last finite checkpoint", file=sys.stderr)
        return EXIT_NUMERIC
    print(
        f"train: {len(history.steps)} steps, best val AUC "
        f"{history.best_val_auc:.4f} at step {history.best_step}"
    )
    return EXIT_OK


def _restore_model(checkpoint_path, cfg):
    if not Path(checkpoint_path).exists():
        raise DataError(f"missing checkpoint {checkpoint_path}")
    model_cfg_path = Path(checkpoint_path).parent / "model.cfg"
    if model_cfg_path.exists():
        stored = cfgmod.load_config(model_cfg_path)
        stored.update(cfg)
        cfg = stored
    vocab_size = cfgmod.get_int(cfg, "train.vocab_size")
    model = build_model(cfg, vocab_size)
    model.load_all_arrays(load_arrays(checkpoint_path))
    return model, cfg


def cmd_eval(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, cfg = _restore_model(args.checkpoint, cfg)
    vocab, splits = load_data_dir(args.data, (args.split,))
    mask = InputMask.parse(cfgmod.get_str(cfg, "train.mask", "TT,IT,I"))
    scored = score_dataset(model, splits[args.split], mask=mask)
    report = evaluation.evaluate(scored)
    name = cfgmod.get_str(cfg, "eval.name", cfgmod.get_str(cfg, "model.variant", "TKM"))
    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "inputs", "f1_at_half", "max_f1", "auc", "balanced_accuracy"])
        writer.writerow(
            [name, mask.label(), repr(report.f1_at_half), repr(report.max_f1),
             repr(report.auc), repr(report.balanced_accuracy)]
        )
    evaluation.write_curve_csv(report.pr_points, out / "pr_curve.csv")
    evaluation.write_curve_csv(report.roc_points, out / "roc_curve.csv")
    write_manifest(
        out, "eval", cfg,
        [str(out / n) for n in ("report.csv", "pr_curve.csv", "roc_curve.csv")],
    )
    print(
        f"eval[{name} {mask.label()}]: F={report.max_f1:.3f} AUC={report.auc:.3f} "
        f"ACC={100 * report.balanced_accuracy:.1f}"
    )
    return EXIT_OK


def _read_report_rows(paths):
    rows = []
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            for name, inputs, f1_half, max_f1, auc, bacc in reader:
                rows.append((name, inputs, float(f1_half), float(max_f1), float(auc), float(bacc)))
    return rows


def _write_results(rows, out):
    names = [row[0] for row in rows]
    reports = {}
    for name, inputs, f1_half, max_f1, auc, bacc in rows:
        key = name if names.count(name) == 1 else f"{name} ({inputs})"
        reports[key] = (
            inputs,
            evaluation.EvalReport(
                f1_at_half=f1_half, max_f1=max_f1, max_f1_threshold=float("nan"),
                auc=auc, balanced_accuracy=bacc, pr_points=[], roc_points=[],
            ),
        )
    csv_text, aligned = evaluation.results_table(reports)
    (Path(out) / "results.csv").write_text(csv_text)
    (Path(out) / "results.txt").write_text(aligned)
    print(aligned, end="")


def cmd_report(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = _read_report_rows(args.reports)
    if not rows:
        raise DataError("no report rows found")
    _write_results(rows, out)
    write_manifest(out, "report", cfg, [str(out / "results.csv"), str(out / "results.txt")])
    return EXIT_OK


def cmd_ablate(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = dict(cfg)
    cfg.setdefault("model.variant", "FCM")
    report_paths = []
    for mask_text in ABLATION_MASKS:
        arm = out / ("arm_" + mask_text.replace(",", "_"))
        arm.mkdir(exist_ok=True)
        arm_cfg = dict(cfg)
        arm_cfg["train.mask"] = mask_text
        arm_cfg["eval.name"] = cfgmod.get_str(arm_cfg, "model.variant", "FCM")
        train_args = argparse.Namespace(data=args.data, out=str(arm), manifest=None)
        status = cmd_train(train_args, dict(arm_cfg))
        if status != EXIT_OK:
            return status
        eval_args = argparse.Namespace(
            checkpoint=str(arm / "checkpoint.mfuse"), data=args.data, split="test", out=str(arm)
        )
        status = cmd_eval(eval_args, dict(arm_cfg))
        if status != EXIT_OK:
            return status
        report_paths.append(arm / "report.csv")
    rows = _read_report_rows(report_paths)
    _write_results(rows, out)
    write_manifest(out, "ablate", cfg, [str(out / "results.csv"), str(out / "results.txt")])
    return EXIT_OK


def cmd_gradcheck(args, cfg):
    seed = cfgmod.get_seed(cfg, "gradcheck.seed", 0)
    results = run_suite(seed=seed)
    failures = 0
    for name, err, ok in results:
        print(f"{'PASS' if ok else 'FAIL'} {name} max_rel_err={err:.3e}")
        failures += not ok
    print(f"gradcheck: {len(results) - failures}/{len(results)} checks passed")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "gradcheck.csv", "w") as fh:
            fh.write("check,max_rel_error,passed\n")
            for name, err, ok in results:
                fh.write(f"{name},{err!r},{int(ok)}\n")
        write_manifest(out, "gradcheck", cfg, [str(out / "gradcheck.csv")])
    return EXIT_OK if failures == 0 else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmfuse",
        description="Multimodal hate-speech models: data preparation, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument(
            "--set", dest="overrides", action="append", default=[],
            metavar="KEY=VALUE", help="config override (repeatable)",
        )
        if out_required:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("prepare", help="filter, aggregate and split a raw corpus")
    p.add_argument("--corpus", required=True, help="line-delimited corpus file")
    common(p)

    p = sub.add_parser("synth", help="generate a synthetic multimodal corpus")
    common(p)

    p = sub.add_parser("train", help="train a model on a data directory")
    p.add_argument("--data", required=True, help="data directory (synth/prepare output)")
    p.add_argument("--manifest", help="re-run training from a previous manifest")
    common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    common(p)

    p = sub.add_parser("ablate", help="train+eval one model per input mask")
    p.add_argument("--data", required=True)
    common(p)

    p = sub.add_parser("gradcheck", help="run the gradient-check suite")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", help="optional output directory for the results CSV")

    p = sub.add_parser("report", help="merge eval reports into a comparison table")
    p.add_argument("reports", nargs="+", help="report.csv files to merge")
    common(p)

    return parser


COMMANDS = {
    "prepare": cmd_prepare,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load_config(getattr(args, "config", None), getattr(args, "overrides", []))
        return COMMANDS[args.verb](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, dataset.CorpusError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AutodiffError, evaluation.MetricError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
