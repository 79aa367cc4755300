"""Command-line front end: ``prismfp extract|train|predict|evaluate``.

Exit status: 0 success (including partial extraction), 1 usage error,
2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from .evaluation import (
    GROUPINGS,
    make_splits,
    paired_accuracies,
    run_ablation,
    run_protocol,
    write_report,
    binarize_labels,
)
from .exceptions import EmptyManifest, PrismError
from .io import FeatureTable, read_features, read_manifest, write_features
from .lda import NORMALIZATIONS, LdaAttributor
from .radial import DEFAULT_N_R, SUBSETS, extract_features, extract_many

logger = logging.getLogger("prismfp")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _regularization(text):
    if text.lower() == "auto":
        return None
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError("regularization must be >= 0 or 'auto'")
    return value


def _label_set(text):
    return [s.strip() for s in text.split(",") if s.strip()]


def _maybe_binarize(table: FeatureTable, fake_labels) -> FeatureTable:
    if not fake_labels:
        return table
    return table.with_labels(binarize_labels(table.labels, fake_labels))


def cmd_extract(manifest, output, n_r=DEFAULT_N_R, workers=1) -> dict:
    """Extract one feature row per decodable manifest entry, in manifest order."""
    entries = read_manifest(manifest)
    results = extract_many([e.resolved_path for e in entries], n_r, workers)
    kept, rows, failures = [], [], []
    for entry, (features, err) in zip(entries, results):
        if err is None:
            kept.append(entry)
            rows.append(features)
        else:
            failures.append({"path": entry.path, "reason": f"{type(err).__name__}: {err}"})
            logger.warning("failed to extract %s: %s", entry.path, err)
    if not rows:
        raise EmptyManifest(f"none of the {len(entries)} entries could be decoded")
    table = FeatureTable(
        [e.path for e in kept], [e.label for e in kept], [e.prompt_id for e in kept], np.vstack(rows)
    )
    write_features(table, output)
    return {
        "count": len(rows),
        "failures": failures,
        "n_features": int(table.X.shape[1]),
        "duplicates": entries.duplicates,
    }


def cmd_train(features, output, reg=None, subset="all", normalization="zscore", fake_labels=None) -> dict:
    table = _maybe_binarize(read_features(features), fake_labels)
    d = table.X.shape[1]
    model = LdaAttributor(
        reg=reg, subset=subset, n_r=d // 6 if d % 6 == 0 else None, normalization=normalization
    )
    model.fit(table.X, np.asarray(table.labels))
    model.save(output)
    train_acc = float(np.mean(model.predict(table.X) == np.asarray(table.labels)))
    return {
        "class_counts": dict(sorted(Counter(table.labels).items())),
        "n_components": int(model.n_components_),
        "n_features_used": int(len(model.feature_indices_)),
        "train_accuracy": train_acc,
    }


def cmd_predict(model_path, target):
    """Yield one record per image: path, label, posteriors (or an error)."""
    model = LdaAttributor.load(model_path)
    n_r = model.n_r if model.n_r is not None else model.n_features_in_ // 6
    target = Path(target)
    if target.suffix.lower() == ".csv":
        paths = [(e.path, e.resolved_path) for e in read_manifest(target)]
    else:
        paths = [(str(target), target)]
    vocab = [str(c) for c in model.classes_]
    for shown, path in paths:
        try:
            f = extract_features(path, n_r)[None, :]
            label = model.predict(f)[0]
            proba = model.predict_proba(f)[0]
        except (PrismError, FileNotFoundError) as exc:
            yield {"path": shown, "error": f"{type(exc).__name__}: {exc}"}
            continue
        yield {
            "path": shown,
            "label": str(label),
            "posteriors": {v: float(p) for v, p in zip(vocab, proba)},
        }


def cmd_evaluate(
    features,
    report,
    n_splits=100,
    ratio=0.8,
    seed=0,
    grouping="prompt-pairs",
    reg=None,
    subset="all",
    normalization="zscore",
    ablation=False,
    fake_labels=None,
    published_train=None,
    workers=1,
):
    table = _maybe_binarize(read_features(features), fake_labels)
    train_idx = None
    if grouping == "published":
        if published_train is None:
            raise UsageError("--grouping published needs --train-list")
        wanted = {line.strip() for line in Path(published_train).read_text().splitlines() if line.strip()}
        train_idx = [i for i, p in enumerate(table.paths) if p in wanted]
    splits = make_splits(table.entries, n_splits, ratio, grouping, seed, train_idx)
    d = table.X.shape[1]
    params = {
        "reg": reg,
        "subset": subset,
        "n_r": d // 6 if d % 6 == 0 else None,
        "normalization": normalization,
    }
    y = np.asarray(table.labels)
    if ablation:
        summaries = run_ablation(table.X, y, splits, n_jobs=workers, **params)
        summary = summaries["all"]
        summary.ablation = {
            "paired_accuracy": paired_accuracies(summaries),
            "stats": {name: s.stats["accuracy"] for name, s in summaries.items()},
        }
    else:
        summary = run_protocol(table.X, y, splits, n_jobs=workers, **params)
    summary.config["ratio"] = ratio
    summary.config["n_splits_requested"] = n_splits
    write_report(summary, report)
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prismfp", description="Radial DFT fingerprints and LDA attribution of images.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def lda_flags(p):
        p.add_argument("--subset", choices=SUBSETS, default="all", help="feature subset (default: all)")
        p.add_argument(
            "--lambda", dest="reg", type=_regularization, default=None, metavar="REG",
            help="within-class scatter ridge, or 'auto' for 1e-6*trace/d (default: auto)",
        )
        p.add_argument("--normalization", choices=NORMALIZATIONS, default="zscore", help="(default: zscore)")
        p.add_argument(
            "--fake-labels", type=_label_set, default=None, metavar="L1,L2,...",
            help="collapse these labels to 'fake' and all others to 'real'",
        )

    p = sub.add_parser("extract", help="extract features for every manifest entry")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True, help="feature CSV to write")
    p.add_argument("--n-r", type=_positive_int, default=DEFAULT_N_R, help="radial bins per channel (default: 64)")
    p.add_argument("--workers", type=_positive_int, default=1, help="worker processes (default: 1)")

    p = sub.add_parser("train", help="fit an LDA attribution model")
    p.add_argument("features")
    p.add_argument("-o", "--output", required=True, help="model file to write")
    lda_flags(p)

    p = sub.add_parser("predict", help="attribute an image or every entry of a manifest")
    p.add_argument("model")
    p.add_argument("target", help="image file, or a .csv manifest")

    p = sub.add_parser("evaluate", help="resampled train/test evaluation")
    p.add_argument("features")
    p.add_argument("-o", "--output", required=True, help="JSON report to write")
    p.add_argument("--n-splits", type=_positive_int, default=100, help="resampled splits N_s (default: 100)")
    p.add_argument("--ratio", type=float, default=0.8, help="train fraction (default: 0.8)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p.add_argument("--grouping", choices=GROUPINGS, default="prompt-pairs", help="(default: prompt-pairs)")
    p.add_argument("--train-list", default=None, help="paths of training rows, for --grouping published")
    p.add_argument("--ablation", action="store_true", help="also run magnitude-only and phase-only")
    p.add_argument("--workers", type=_positive_int, default=1, help="parallel splits (default: 1)")
    lda_flags(p)
    return parser


def _run(args) -> int:
    if args.command == "extract":
        summary = cmd_extract(args.manifest, args.output, args.n_r, args.workers)
        print(json.dumps(summary, sort_keys=True))
        return EXIT_OK
    if args.command == "train":
        summary = cmd_train(args.features, args.output, args.reg, args.subset, args.normalization, args.fake_labels)
        print(json.dumps(summary, sort_keys=True))
        return EXIT_OK
    if args.command == "predict":
        failed = 0
        total = 0
        for record in cmd_predict(args.model, args.target):
            total += 1
            failed += "error" in record
            print(json.dumps(record, sort_keys=True))
        return EXIT_DATA if total and failed == total else EXIT_OK
    if args.command == "evaluate":
        summary = cmd_evaluate(
            args.features, args.output, args.n_splits, args.ratio, args.seed, args.grouping,
            args.reg, args.subset, args.normalization, args.ablation, args.fake_labels,
            args.train_list, args.workers,
        )
        acc = summary.stats["accuracy"]
        print(json.dumps({
            "n_splits": summary.n_splits,
            "accuracy_mean": acc["mean"],
            "accuracy_std": acc["std"],
            "average_split": summary.average_split,
        }, sort_keys=True))
        return EXIT_OK
    raise UsageError(f"unknown command {args.command}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _run(args)
    except UsageError as exc:
        print(f"prismfp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PrismError, FileNotFoundError) as exc:
        print(f"prismfp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # anything else is a bug
        logger.exception("internal error")
        print(f"prismfp: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
