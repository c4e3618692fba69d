"""Multiclass and multi-label metrics, k-fold splits and cross-validation.

Macro precision/recall/F1 average per-class values over the classes present
in the gold labels; macro F1 is the mean of per-class F1. An abstention
(prediction None) is a false negative of its gold class and lowers
coverage, but never counts as a false positive.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from typing import Any, Callable, Hashable, Iterable, Optional, Sequence

import numpy as np
from sklearn.metrics import (
    accuracy_score,
    confusion_matrix,
    hamming_loss,
    precision_recall_fscore_support,
    zero_one_loss,
)
from sklearn.model_selection import KFold, StratifiedKFold
from sklearn.preprocessing import MultiLabelBinarizer

from .corpus import Document, DocumentSet
from .utils import CascadeTitlesError, DegenerateInputError, ParameterError, logger

METRICS = ("macro_precision", "macro_recall", "macro_f1", "accuracy", "coverage")

Predictor = Callable[[Document], Optional[Hashable]]
Trainer = Callable[[DocumentSet], Predictor]


@dataclass(frozen=True)
class ConfusionCounts:
    """Predictions encoded as indices into `labels`.

    `len(labels)` encodes an abstention; it is outside every class, so it is
    a false negative of its gold class and a false positive of none.
    """

    labels: tuple
    y_true: np.ndarray
    y_pred: np.ndarray
    gold_classes: tuple
    n_total: int
    n_predicted: int

    @property
    def classes(self) -> list:
        return list(self.labels)

    @property
    def matrix(self) -> np.ndarray:
        """Rows gold, columns predicted, last column abstentions"""
        size = len(self.labels) + 1
        if not self.n_total:
            return np.zeros((size, size), dtype=np.int64)
        return confusion_matrix(self.y_true, self.y_pred, labels=np.arange(size))

    def _per_class(self, values: np.ndarray) -> dict:
        return dict(zip(self.labels, values.tolist()))

    @property
    def tp(self) -> dict:
        return self._per_class(np.diag(self.matrix)[:-1])

    @property
    def fp(self) -> dict:
        matrix = self.matrix[:-1, :-1]
        return self._per_class(matrix.sum(axis=0) - np.diag(matrix))

    @property
    def fn(self) -> dict:
        matrix = self.matrix[:-1]
        return self._per_class(matrix.sum(axis=1) - np.diag(matrix))


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    coverage: float
    per_class: tuple[ClassMetrics, ...] = ()
    hamming_loss: float | None = None
    zero_one_loss: float | None = None
    agreement: float | None = None

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["per_class"] = [asdict(row) for row in self.per_class]
        return {key: value for key, value in out.items() if value is not None}

    def with_extras(self, **extras: float | None) -> EvalReport:
        return EvalReport(**{**self.__dict__, **extras})


@dataclass(frozen=True)
class CVReport:
    folds: tuple[EvalReport, ...]
    mean: dict[str, float]
    std: dict[str, float]
    notes: tuple[str, ...] = ()
    valid: bool = True

    def to_dict(self) -> dict[str, Any]:
        return {
            "folds": [fold.to_dict() for fold in self.folds],
            "mean": self.mean,
            "std": self.std,
            "notes": list(self.notes),
            "valid": self.valid,
        }


def confusion_counts(
    preds: Sequence[Hashable | None], golds: Sequence[Hashable]
) -> ConfusionCounts:
    if len(preds) != len(golds):
        raise ParameterError(
            f"{len(preds)} predictions for {len(golds)} gold labels"
        )
    labels = tuple(
        sorted(set(golds) | {p for p in preds if p is not None}, key=str)
    )
    index = {label: i for i, label in enumerate(labels)}
    abstain = len(labels)
    return ConfusionCounts(
        labels=labels,
        y_true=np.asarray([index[g] for g in golds], dtype=np.int64),
        y_pred=np.asarray(
            [abstain if p is None else index[p] for p in preds], dtype=np.int64
        ),
        gold_classes=tuple(sorted(set(golds), key=str)),
        n_total=len(golds),
        n_predicted=sum(p is not None for p in preds),
    )


def macro_metrics(counts: ConfusionCounts) -> EvalReport:
    if not counts.gold_classes:
        raise DegenerateInputError("no gold labels to evaluate against")

    index = {label: i for i, label in enumerate(counts.labels)}
    precision, recall, f1, support = precision_recall_fscore_support(
        counts.y_true,
        counts.y_pred,
        labels=[index[cls] for cls in counts.gold_classes],
        average=None,
        zero_division=0,
    )
    rows = tuple(
        ClassMetrics(str(cls), float(p), float(r), float(f), int(s))
        for cls, p, r, f, s in zip(counts.gold_classes, precision, recall, f1, support)
    )

    predicted = counts.y_pred != len(counts.labels)
    return EvalReport(
        macro_precision=float(np.mean(precision)),
        macro_recall=float(np.mean(recall)),
        macro_f1=float(np.mean(f1)),
        accuracy=(
            float(accuracy_score(counts.y_true[predicted], counts.y_pred[predicted]))
            if predicted.any()
            else 0.0
        ),
        coverage=counts.n_predicted / counts.n_total,
        per_class=rows,
    )


def multilabel_losses(
    pred_sets: Sequence[Iterable[Hashable]],
    gold_sets: Sequence[Iterable[Hashable]],
    label_universe: Iterable[Hashable],
) -> tuple[float, float]:
    """(Hamming loss, zero-one loss)"""
    universe = sorted(set(label_universe), key=str)
    if not universe:
        raise ParameterError("label universe must not be empty")
    if len(pred_sets) != len(gold_sets):
        raise ParameterError(
            f"{len(pred_sets)} predicted sets for {len(gold_sets)} gold sets"
        )
    if not pred_sets:
        return 0.0, 0.0

    pred_sets = [set(pred) for pred in pred_sets]
    gold_sets = [set(gold) for gold in gold_sets]
    allowed = set(universe)
    if any(not (p <= allowed and g <= allowed) for p, g in zip(pred_sets, gold_sets)):
        raise ParameterError("label sets must lie within the universe")

    binarizer = MultiLabelBinarizer(classes=universe)
    gold = binarizer.fit_transform(gold_sets)
    pred = binarizer.transform(pred_sets)
    return float(hamming_loss(gold, pred)), float(zero_one_loss(gold, pred))


def kfold_split(
    n: int,
    k: int = 10,
    seed: int = 0,
    labels: Sequence[Hashable] | None = None,
) -> list[list[int]]:
    """k disjoint, exhaustive folds of range(n), sizes within 1.

    With `labels` the folds are stratified: every class is spread over the
    folds as evenly as its size allows.
    """
    if k < 2 or k > n:
        raise ParameterError(f"fold count must be in [2, {n}], got {k}")

    placeholder = np.zeros((n, 1))
    if labels is None:
        splits = KFold(k, shuffle=True, random_state=seed).split(placeholder)
        return [sorted(test.tolist()) for _, test in splits]

    if len(labels) != n:
        raise ParameterError(f"{len(labels)} labels for {n} items")
    classes = {label: i for i, label in enumerate(sorted(set(labels), key=str))}
    y = np.asarray([classes[label] for label in labels])
    if np.bincount(y).max() < k:
        raise ParameterError(
            f"stratified folds need a class with at least {k} instances"
        )
    with warnings.catch_warnings():
        # small classes are reported by cross_validate
        warnings.simplefilter("ignore", UserWarning)
        splits = list(
            StratifiedKFold(k, shuffle=True, random_state=seed).split(placeholder, y)
        )
    return [sorted(test.tolist()) for _, test in splits]


def _aggregate(reports: Sequence[EvalReport]) -> tuple[dict, dict]:
    mean, std = {}, {}
    for name in METRICS:
        values = np.asarray([getattr(r, name) for r in reports], dtype=float)
        mean[name] = float(values.mean()) if values.size else 0.0
        std[name] = float(values.std()) if values.size else 0.0
    return mean, std


def cross_validate(
    data: DocumentSet,
    trainer: Trainer,
    k: int = 10,
    seed: int = 0,
    gold: Callable[[Document], Hashable] | None = None,
    stratified: bool = False,
) -> CVReport:
    """Train on k-1 folds, evaluate on the held-out one, for every fold.

    `trainer` maps a training set to a predictor (None = abstain); `gold`
    maps a document to its class (default: the gold major group). A failing
    fold stops the run and the partial report is flagged invalid.
    """
    gold = gold or (lambda doc: doc.gold_soc.major)
    data = data.labeled
    golds = [gold(doc) for doc in data]

    notes = []
    sizes: dict[Hashable, int] = {}
    for label in golds:
        sizes[label] = sizes.get(label, 0) + 1
    for label in sorted(sizes, key=str):
        if sizes[label] < k:
            note = f"class {label} has {sizes[label]} instances, fewer than {k} folds"
            logger.warning(note)
            notes.append(note)

    folds = kfold_split(len(data), k, seed, golds if stratified else None)
    reports = []
    valid = True
    for fold_id, test in enumerate(folds):
        held = set(test)
        train_set = data.take(i for i in range(len(data)) if i not in held)
        test_set = data.take(test)
        try:
            predictor = trainer(train_set)
            preds = [predictor(doc) for doc in test_set]
        except CascadeTitlesError as e:
            logger.warning("fold %d failed: %s", fold_id, e)
            notes.append(f"fold {fold_id} failed: {e}")
            valid = False
            break
        report = macro_metrics(confusion_counts(preds, [golds[i] for i in test]))
        logger.debug("fold %d: macro_f1 %.4f", fold_id, report.macro_f1)
        reports.append(report)

    mean, std = _aggregate(reports)
    return CVReport(tuple(reports), mean, std, tuple(notes), valid)


def agreement(preds: Sequence[Hashable | None], reference: Sequence[Hashable]) -> float:
    """Fraction of items whose prediction equals the reference tagger's"""
    if len(preds) != len(reference):
        raise ParameterError(
            f"{len(preds)} predictions for {len(reference)} reference labels"
        )
    if not preds:
        return 0.0
    return sum(p == r for p, r in zip(preds, reference)) / len(preds)


def _table(rows: Sequence[Sequence[str]]) -> list[str]:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return [
        "  ".join(
            cell.ljust(width) if i == 0 else cell.rjust(width)
            for i, (cell, width) in enumerate(zip(row, widths))
        ).rstrip()
        for row in rows
    ]


def format_report(report: EvalReport) -> str:
    rows = [("metric", "value")]
    for name in (*METRICS, "hamming_loss", "zero_one_loss", "agreement"):
        value = getattr(report, name)
        if value is not None:
            rows.append((name, f"{value:.4f}"))
    lines = _table(rows)
    if report.per_class:
        lines.append("")
        class_rows = [("class", "precision", "recall", "f1", "support")]
        class_rows.extend(
            (
                row.label,
                f"{row.precision:.4f}",
                f"{row.recall:.4f}",
                f"{row.f1:.4f}",
                str(row.support),
            )
            for row in report.per_class
        )
        lines.extend(_table(class_rows))
    return "\n".join(lines)


def format_cv_report(report: CVReport) -> str:
    rows = [("metric", "mean", "std")]
    rows.extend(
        (name, f"{report.mean[name]:.4f}", f"{report.std[name]:.4f}")
        for name in METRICS
    )
    lines = [f"folds: {len(report.folds)}", *_table(rows)]
    lines.extend(f"note: {note}" for note in report.notes)
    if not report.valid:
        lines.append("report is INVALID: not every fold completed")
    return "\n".join(lines)


def dumps_report(report: EvalReport | CVReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"

