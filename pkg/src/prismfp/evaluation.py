"""Resampled train/test evaluation with weighted multi-class metrics."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exceptions import (
    EmptyClass,
    InvalidRatio,
    LengthMismatch,
    MissingPromptId,
    PrismError,
    SplitError,
    UnknownLabel,
)
from .io import ManifestEntry
from .lda import LdaAttributor

REPORT_SCHEMA_VERSION = 1
GROUPINGS = ("prompt-pairs", "random-stratified", "published")
N_PROMPT_PAIRS = 20
METRIC_NAMES = ("accuracy", "weighted_precision", "weighted_recall", "weighted_f1")

_SEED_MASK = (1 << 64) - 1


@dataclass
class SplitSpec:
    index: int
    seed: int
    grouping: str
    train: np.ndarray
    test: np.ndarray
    test_groups: Optional[tuple] = None


def _split_rng(seed: int, index: int) -> np.random.Generator:
    # one independent stream per (seed, split index): extra splits never shift earlier ones
    return np.random.default_rng([int(seed) & _SEED_MASK, int(index)])


def _check_ratio(ratio: float) -> float:
    ratio = float(ratio)
    if not 0.0 < ratio < 1.0:
        raise InvalidRatio(f"train ratio must lie in (0, 1), got {ratio}")
    return ratio


def prompt_pair_groups(prompt_ids: Sequence) -> np.ndarray:
    """Map prompt ids 1..40 to pair groups 0..19, so ``p_i`` and ``p_{i+20}`` share a group."""
    if any(p is None for p in prompt_ids):
        missing = sum(p is None for p in prompt_ids)
        raise MissingPromptId(f"{missing} entries lack a prompt_id; prompt-pair grouping needs all")
    return (np.asarray(prompt_ids, dtype=np.int64) - 1) % N_PROMPT_PAIRS


def make_splits(
    entries: Sequence[ManifestEntry],
    n_splits: int,
    ratio: float = 0.8,
    grouping: str = "prompt-pairs",
    seed: int = 0,
    published_train: Optional[Sequence[int]] = None,
) -> list[SplitSpec]:
    """Generate train/test partitions of ``entries``.

    ``prompt-pairs`` holds out whole prompt pairs (4 of 20 at ratio 0.8).
    ``random-stratified`` splits every label separately. ``published``
    returns the single split given by ``published_train`` (indices of the
    training entries); ``n_splits`` is ignored for it.
    """
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}, got {grouping!r}")
    n = len(entries)
    if n == 0:
        raise EmptyClass("no entries to split")
    if grouping == "published":
        if published_train is None:
            raise ValueError("published grouping needs the training indices")
        train_mask = np.zeros(n, dtype=bool)
        train_mask[np.asarray(list(published_train), dtype=np.intp)] = True
        return [SplitSpec(0, seed, grouping, np.flatnonzero(train_mask), np.flatnonzero(~train_mask))]

    ratio = _check_ratio(ratio)
    if n_splits < 1:
        raise ValueError(f"n_splits must be >= 1, got {n_splits}")

    if grouping == "prompt-pairs":
        groups = prompt_pair_groups([e.prompt_id for e in entries])
        present = np.unique(groups)
        n_test_f = (1.0 - ratio) * len(present)
        n_test = int(round(n_test_f))
        if abs(n_test_f - n_test) > 1e-9 or not 0 < n_test < len(present):
            raise InvalidRatio(
                f"ratio {ratio} does not split {len(present)} prompt pairs into whole groups"
            )
        splits = []
        for k in range(n_splits):
            held = np.sort(_split_rng(seed, k).choice(present, size=n_test, replace=False))
            test_mask = np.isin(groups, held)
            splits.append(
                SplitSpec(
                    k, seed, grouping,
                    np.flatnonzero(~test_mask), np.flatnonzero(test_mask),
                    tuple(int(g) + 1 for g in held),
                )
            )
        return splits

    labels = np.asarray([e.label for e in entries])
    splits = []
    for k in range(n_splits):
        rng = _split_rng(seed, k)
        test_mask = np.zeros(n, dtype=bool)
        for label in np.unique(labels):
            idx = rng.permutation(np.flatnonzero(labels == label))
            n_test = int(round(len(idx) * (1.0 - ratio)))
            if len(idx) >= 2:
                n_test = min(max(n_test, 1), len(idx) - 1)
            test_mask[idx[:n_test]] = True
        splits.append(SplitSpec(k, seed, grouping, np.flatnonzero(~test_mask), np.flatnonzero(test_mask)))
    return splits


@dataclass
class MetricsReport:
    vocabulary: list
    confusion: np.ndarray
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray

    def to_dict(self) -> dict:
        return {
            "vocabulary": [str(v) for v in self.vocabulary],
            "confusion": self.confusion.tolist(),
            **{name: float(getattr(self, name)) for name in METRIC_NAMES},
            "per_class": {
                "precision": self.precision.tolist(),
                "recall": self.recall.tolist(),
                "f1": self.f1.tolist(),
                "support": self.support.tolist(),
            },
        }


def _safe_div(num, den):
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(den), where=den > 0)


def compute_metrics(true_labels, predicted_labels, vocabulary=None) -> MetricsReport:
    """Confusion matrix (rows true, columns predicted) and support-weighted scores.

    Zero-denominator precision, recall or F1 count as 0.
    """
    y_true = np.asarray(true_labels)
    y_pred = np.asarray(predicted_labels)
    if len(y_true) != len(y_pred):
        raise LengthMismatch(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    if len(y_true) == 0:
        raise LengthMismatch("no labels to score")
    if vocabulary is None:
        vocabulary = np.unique(np.concatenate([y_true, y_pred]))
    vocabulary = list(vocabulary)
    index = {label: i for i, label in enumerate(vocabulary)}
    try:
        t = np.fromiter((index[v] for v in y_true.tolist()), dtype=np.intp, count=len(y_true))
        p = np.fromiter((index[v] for v in y_pred.tolist()), dtype=np.intp, count=len(y_pred))
    except KeyError as exc:
        raise UnknownLabel(f"label {exc.args[0]!r} not in vocabulary") from None

    m = len(vocabulary)
    confusion = np.bincount(t * m + p, minlength=m * m).reshape(m, m)
    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    precision = _safe_div(tp, predicted)
    recall = _safe_div(tp, support)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    weights = support / support.sum()
    return MetricsReport(
        vocabulary=vocabulary,
        confusion=confusion,
        accuracy=float(tp.sum() / support.sum()),
        weighted_precision=float(weights @ precision),
        weighted_recall=float(weights @ recall),
        weighted_f1=float(weights @ f1),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
    )


@dataclass
class SplitResult:
    index: int
    n_train: int
    n_test: int
    train_accuracy: float
    metrics: MetricsReport
    test_groups: Optional[tuple] = None

    def to_dict(self) -> dict:
        out = {
            "index": self.index,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "train_accuracy": self.train_accuracy,
            "test_groups": None if self.test_groups is None else list(self.test_groups),
        }
        out.update({k: v for k, v in self.metrics.to_dict().items() if k in METRIC_NAMES})
        return out


@dataclass
class ResamplingSummary:
    vocabulary: list
    config: dict
    splits: list
    stats: dict
    average_split: int
    collisions: int = 0
    ablation: Optional[dict] = field(default=None)

    @property
    def n_splits(self) -> int:
        return len(self.splits)

    def metric(self, name: str) -> np.ndarray:
        if name == "train_accuracy":
            return np.array([s.train_accuracy for s in self.splits])
        return np.array([getattr(s.metrics, name) for s in self.splits])

    def to_dict(self) -> dict:
        avg = self.splits[self.average_split]
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "vocabulary": [str(v) for v in self.vocabulary],
            "config": self.config,
            "n_splits": self.n_splits,
            "collisions": self.collisions,
            "stats": self.stats,
            "average_split": {
                "index": self.average_split,
                "metrics": avg.metrics.to_dict(),
            },
            "splits": [s.to_dict() for s in self.splits],
            "ablation": self.ablation,
        }


def _describe(values: np.ndarray) -> dict:
    return {
        "mean": float(values.mean()),
        "std": float(values.std()),
        "p5": float(np.percentile(values, 5)),
        "p95": float(np.percentile(values, 95)),
        "min": float(values.min()),
        "max": float(values.max()),
    }


def select_average_split(accuracy, f1) -> int:
    """Index of the split nearest the across-split mean of (accuracy, F1); lowest index on ties."""
    accuracy = np.asarray(accuracy, dtype=np.float64)
    f1 = np.asarray(f1, dtype=np.float64)
    dev = (accuracy - accuracy.mean()) ** 2 + (f1 - f1.mean()) ** 2
    return int(np.argmin(dev))


def _count_collisions(splits: Sequence[SplitSpec]) -> int:
    seen = set()
    dup = 0
    for s in splits:
        key = s.test_groups if s.test_groups is not None else s.test.tobytes()
        dup += key in seen
        seen.add(key)
    return dup


def run_protocol(
    X,
    y,
    splits: Sequence[SplitSpec],
    *,
    n_jobs: int = 1,
    **lda_params,
) -> ResamplingSummary:
    """Fit on each split's train part, score its test part, and aggregate.

    ``lda_params`` are forwarded to :class:`~prismfp.lda.LdaAttributor`.
    Split results come back in split order regardless of ``n_jobs``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(X) != len(y):
        raise LengthMismatch(f"{len(X)} feature rows vs {len(y)} labels")
    if not splits:
        raise ValueError("no splits to run")
    vocabulary = np.unique(y).tolist()

    def one(split: SplitSpec) -> SplitResult:
        try:
            model = LdaAttributor(**lda_params).fit(X[split.train], y[split.train])
            train_acc = float(np.mean(model.predict(X[split.train]) == y[split.train]))
            pred = model.predict(X[split.test])
            metrics = compute_metrics(y[split.test], pred, vocabulary)
        except PrismError as exc:
            raise SplitError(split.index, exc) from exc
        return SplitResult(
            split.index, len(split.train), len(split.test), train_acc, metrics, split.test_groups
        )

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(one, splits))
    else:
        results = [one(s) for s in splits]

    stats = {name: _describe(np.array([getattr(r.metrics, name) for r in results])) for name in METRIC_NAMES}
    stats["train_accuracy"] = _describe(np.array([r.train_accuracy for r in results]))
    average = select_average_split(
        [r.metrics.accuracy for r in results], [r.metrics.weighted_f1 for r in results]
    )
    config = {k: lda_params[k] for k in sorted(lda_params)}
    config["grouping"] = splits[0].grouping
    config["seed"] = splits[0].seed
    return ResamplingSummary(
        vocabulary=vocabulary,
        config=config,
        splits=results,
        stats=stats,
        average_split=average,
        collisions=_count_collisions(splits),
    )


def run_ablation(X, y, splits, *, n_jobs=1, **lda_params) -> dict:
    """Run the protocol once per feature subset on identical splits.

    Returns ``{subset: ResamplingSummary}`` for ``all``, ``magnitude`` and
    ``phase``.
    """
    lda_params.pop("subset", None)
    return {
        subset: run_protocol(X, y, splits, n_jobs=n_jobs, subset=subset, **lda_params)
        for subset in ("all", "magnitude", "phase")
    }


def paired_accuracies(summaries: dict) -> dict:
    """Per-split test accuracies, aligned by split index, for external paired tests."""
    return {name: s.metric("accuracy").tolist() for name, s in summaries.items()}


def write_report(summary: ResamplingSummary, path) -> None:
    text = json.dumps(summary.to_dict(), indent=1, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def binarize_labels(labels, fake_labels, real_name="real", fake_name="fake") -> list:
    fake = set(fake_labels)
    if not fake:
        raise EmptyClass("fake label set is empty")
    observed = set(labels)
    unknown = fake - observed
    if unknown:
        raise UnknownLabel(f"fake labels not present in data: {sorted(unknown)}")
    out = [fake_name if label in fake else real_name for label in labels]
    if fake >= observed:
        raise EmptyClass("every label is marked fake; no real class remains")
    return out


def binarize(entries: Sequence[ManifestEntry], fake_labels) -> list[ManifestEntry]:
    """Relabel entries as ``fake`` (label in ``fake_labels``) or ``real``; prompt ids kept."""
    new = binarize_labels([e.label for e in entries], fake_labels)
    return [
        ManifestEntry(e.path, label, e.prompt_id, e.base_dir) for e, label in zip(entries, new)
    ]
