"""Train/test splits, confusion-matrix metrics, ROC/AUC and result tables."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import InsufficientDataError, UndefinedStatisticError, ValidationError
from .psychometrics import TRAITS, Scheme, TraitLabel

FAMILY_ORDER = ("GLM", "LR", "MLP", "RF", "DT")
FAMILY_DISPLAY = {"GLM": "GLM", "LR": "LR", "MLP": "DL", "RF": "RF", "DT": "DT"}
SCHEME_METRICS = {Scheme.TWO: ("accuracy", "auc", "precision"), Scheme.THREE: ("accuracy", "weighted_f1")}


def split_train_test(rows, ratio: float = 0.8, seed: int = 0, stratify: Sequence | None = None):
    """Seeded shuffle then prefix split: ``floor(ratio * n)`` rows train.

    ``rows`` is either a count or a sequence of ids; the result has the same
    kind. With ``stratify`` the split is taken per label group instead.
    """
    ids = np.arange(rows) if isinstance(rows, (int, np.integer)) else np.asarray(list(rows))
    n = len(ids)
    if n < 5:
        raise InsufficientDataError(f"need at least 5 rows to split, got {n}")
    if not 0 < ratio < 1:
        raise ValidationError("ratio must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    if stratify is None:
        order = rng.permutation(n)
        k = int(np.floor(ratio * n))
        return ids[np.sort(order[:k])], ids[np.sort(order[k:])]
    groups = np.asarray([_value(s) for s in stratify], dtype=object)
    if len(groups) != n:
        raise ValidationError("stratify labels must align with rows")
    train, test = [], []
    for g in sorted(set(groups.tolist())):
        members = np.flatnonzero(groups == g)
        members = members[rng.permutation(len(members))]
        k = int(np.floor(ratio * len(members)))
        train.extend(members[:k])
        test.extend(members[k:])
    return ids[np.sort(train)], ids[np.sort(test)]


def _value(label):
    return label.value if isinstance(label, TraitLabel) else label


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""

    classes: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        k = len(self.classes)
        if c.shape != (k, k):
            raise ValidationError("confusion matrix shape does not match classes")
        if (c < 0).any():
            raise ValidationError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @classmethod
    def from_labels(cls, y_true, y_pred, classes: Sequence[str]) -> "ConfusionMatrix":
        classes = tuple(classes)
        index = {c: i for i, c in enumerate(classes)}
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for t, p in zip(y_true, y_pred, strict=True):
            try:
                counts[index[_value(t)], index[_value(p)]] += 1
            except KeyError as exc:
                raise ValidationError(f"label {exc.args[0]!r} not among {classes}") from None
        return cls(classes, counts)

    @classmethod
    def two_level(cls, tp: int, fp: int, fn: int, tn: int) -> "ConfusionMatrix":
        """Positive class is High."""
        return cls(Scheme.TWO.classes, np.array([[tn, fp], [fn, tp]]))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def _binary(self):
        if len(self.classes) != 2:
            raise ValidationError("TP/FP/FN/TN need a two-class matrix")
        return self.counts

    tp = property(lambda self: int(self._binary()[1, 1]))
    fp = property(lambda self: int(self._binary()[0, 1]))
    fn = property(lambda self: int(self._binary()[1, 0]))
    tn = property(lambda self: int(self._binary()[0, 0]))

    def accuracy(self) -> float:
        if self.total == 0:
            raise InsufficientDataError("empty confusion matrix")
        return int(np.trace(self.counts)) / self.total

    def class_sizes(self) -> list[int]:
        return [int(v) for v in self.counts.sum(axis=1)]


@dataclass(frozen=True)
class BinaryMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    undefined: tuple[str, ...] = ()


def _ratio(num: int, den: int, name: str, flags: list) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def _f1_counts(tp: int, fp: int, fn: int, flags: list, name="f1") -> float:
    # 2PR/(P+R) reduces to 2TP/(2TP+FP+FN); undefined whenever P or R is
    if tp + fp == 0 or tp + fn == 0 or tp == 0:
        if tp + fp == 0 or tp + fn == 0:
            flags.append(name)
        return 0.0
    return (2 * tp) / (2 * tp + fp + fn)


def metrics_two_level(cm: ConfusionMatrix) -> BinaryMetrics:
    """Accuracy, precision, recall and F1 with High as the positive class.

    A zero denominator yields 0 and the metric name appears in ``undefined``.
    """
    if cm.total == 0:
        raise InsufficientDataError("empty confusion matrix")
    tp, fp, fn, tn = cm.tp, cm.fp, cm.fn, cm.tn
    flags: list[str] = []
    acc = (tp + tn) / (tp + fp + fn + tn)
    prec = _ratio(tp, tp + fp, "precision", flags)
    rec = _ratio(tp, tp + fn, "recall", flags)
    f1 = _f1_counts(tp, fp, fn, flags)
    return BinaryMetrics(acc, prec, rec, f1, tuple(flags))


def per_class_f1(cm: ConfusionMatrix) -> list[float]:
    """One-vs-rest F1 per class, in class order."""
    c = cm.counts
    out = []
    for i in range(len(cm.classes)):
        tp = int(c[i, i])
        fp = int(c[:, i].sum()) - tp
        fn = int(c[i, :].sum()) - tp
        out.append(_f1_counts(tp, fp, fn, []))
    return out


def weighted_f1(f1_scores: Sequence[float], class_sizes: Sequence[int]) -> float:
    """Size-weighted mean of per-class F1 values."""
    f = np.asarray(f1_scores, dtype=float)
    s = np.asarray(class_sizes, dtype=float)
    if f.shape != s.shape:
        raise ValidationError("per-class F1 and class sizes differ in length")
    if (s < 0).any():
        raise ValidationError("class sizes must be non-negative")
    if s.sum() == 0:
        raise InsufficientDataError("class sizes sum to zero")
    return float(np.dot(s, f) / s.sum())


def _binary_labels(labels) -> np.ndarray:
    out = []
    for lab in labels:
        v = _value(lab)
        if isinstance(v, str):
            if v not in ("Low", "High"):
                raise ValidationError(f"AUC needs two-level labels, got {v!r}")
            v = v == "High"
        out.append(bool(v))
    return np.array(out, dtype=bool)


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the rank-sum (Mann-Whitney) statistic.

    ``labels`` are booleans/0-1 or Low/High with High positive; ties in the
    scores count one half.
    """
    s = np.asarray(scores, dtype=float)
    pos = _binary_labels(labels)
    if s.shape != pos.shape:
        raise ValidationError("scores and labels differ in length")
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedStatisticError("AUC needs both classes present")
    ranks = rankdata(s)  # average ranks handle ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels):
    """ROC points (fpr, tpr) at every distinct threshold, from (0, 0) to (1, 1)."""
    s = np.asarray(scores, dtype=float)
    pos = _binary_labels(labels)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedStatisticError("ROC needs both classes present")
    order = np.argsort(-s, kind="mergesort")
    s, pos = s[order], pos[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tps = np.cumsum(pos)[last]
    fps = np.cumsum(~pos)[last]
    return np.r_[0.0, fps / n_neg], np.r_[0.0, tps / n_pos]


def trapezoid_auc(scores, labels) -> float:
    fpr, tpr = roc_curve(scores, labels)
    return float(np.trapezoid(tpr, fpr))


@dataclass
class EvaluationResult:
    """Test-set scores of one (trait, scheme, family) model."""

    trait: str
    scheme: str
    family: str
    n_test: int
    split_seed: int
    accuracy: float
    class_sizes: list
    per_class_f1: list
    weighted_f1: float
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    auc: float | None = None
    majority_rate: float = 0.0
    notes: list = field(default_factory=list)

    def metric(self, name: str):
        return getattr(self, name)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_predictions(trait, scheme, family, y_true, y_pred, proba=None, split_seed: int = 0) -> EvaluationResult:
    """Score predictions; ``proba`` columns follow the scheme's class order."""
    scheme = Scheme(scheme)
    cm = ConfusionMatrix.from_labels(y_true, y_pred, scheme.classes)
    sizes = cm.class_sizes()
    f1s = per_class_f1(cm)
    res = EvaluationResult(
        trait=trait, scheme=scheme.value, family=family, n_test=cm.total, split_seed=int(split_seed),
        accuracy=cm.accuracy(), class_sizes=sizes, per_class_f1=f1s,
        weighted_f1=weighted_f1(f1s, sizes), majority_rate=max(sizes) / cm.total,
    )
    if scheme is Scheme.TWO:
        m = metrics_two_level(cm)
        res.precision, res.recall, res.f1 = m.precision, m.recall, m.f1
        res.notes.extend(f"{name} undefined (zero denominator), reported as 0" for name in m.undefined)
        if proba is not None:
            try:
                res.auc = roc_auc(np.asarray(proba)[:, 1], [_value(t) for t in y_true])
            except UndefinedStatisticError:
                res.notes.append("auc undefined: test set holds a single class")
    return res


@dataclass
class EvaluationReport:
    results: list
    families: tuple
    notes: list

    def cells(self) -> list[dict]:
        """One record per (scheme, trait, family, metric) with a best-in-row flag."""
        out = []
        for scheme, metrics in SCHEME_METRICS.items():
            rows = [r for r in self.results if r.scheme == scheme.value]
            for trait in _trait_order({r.trait for r in rows}):
                here = {r.family: r for r in rows if r.trait == trait}
                for metric in metrics:
                    values = {f: here[f].metric(metric) for f in self.families if f in here}
                    present = [v for v in values.values() if v is not None]
                    best = max(present) if present else None
                    for fam, v in values.items():
                        out.append({
                            "scheme": scheme.value, "trait": trait, "family": fam, "metric": metric,
                            "value": v, "best": v is not None and v == best,
                        })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scheme", "trait", "family", "metric", "value", "best"])
        for c in self.cells():
            w.writerow([c["scheme"], c["trait"], c["family"], c["metric"],
                        "" if c["value"] is None else repr(float(c["value"])), str(c["best"]).lower()])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "families": list(self.families),
            "notes": list(self.notes),
            "results": [r.to_dict() for r in self.results],
            "cells": self.cells(),
        }
        return json.dumps(doc, indent=1, allow_nan=False) + "\n"

    def to_text(self) -> str:
        lines = []
        cells = self.cells()
        for scheme, metrics in SCHEME_METRICS.items():
            sub = [c for c in cells if c["scheme"] == scheme.value]
            if not sub:
                continue
            fams = [f for f in self.families if any(c["family"] == f for c in sub)]
            title = "two-level classification" if scheme is Scheme.TWO else "three-level classification"
            lines.append(f"== {title} ==")
            header = ["trait"] + [f"{FAMILY_DISPLAY[f]}:{m}" for f in fams for m in metrics]
            header += [f"best:{m}" for m in metrics]
            rows = [header]
            for trait in _trait_order({c["trait"] for c in sub}):
                lookup = {(c["family"], c["metric"]): c for c in sub if c["trait"] == trait}
                row = [trait]
                for f in fams:
                    for m in metrics:
                        c = lookup.get((f, m))
                        row.append("-" if c is None or c["value"] is None else f"{c['value']:.3f}")
                for m in metrics:
                    winners = [FAMILY_DISPLAY[f] for f in fams if lookup.get((f, m), {}).get("best")]
                    row.append("/".join(winners) or "-")
                rows.append(row)
            widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
            for r in rows:
                lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
            lines.append("")
        for note in self.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines).rstrip() + "\n"

    def write(self, directory, stem: str = "report") -> dict:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {"csv": d / f"{stem}.csv", "json": d / f"{stem}.json", "text": d / f"{stem}.txt"}
        paths["csv"].write_text(self.to_csv(), encoding="utf-8")
        paths["json"].write_text(self.to_json(), encoding="utf-8")
        paths["text"].write_text(self.to_text(), encoding="utf-8")
        return paths


def _trait_order(traits):
    known = [t for t in TRAITS if t in traits]
    return known + sorted(set(traits) - set(known))


def build_report(results: Sequence[EvaluationResult], families: Sequence[str] | None = None) -> EvaluationReport:
    """Collect results into trait-by-family tables.

    Requested families without any result for a scheme are omitted from that
    scheme's table and noted.
    """
    results = list(results)
    if not results:
        raise InsufficientDataError("no completed evaluations to report")
    seen = {r.family for r in results}
    requested = list(families) if families is not None else [f for f in FAMILY_ORDER if f in seen]
    requested += sorted(seen - set(requested))
    notes = []
    for scheme in SCHEME_METRICS:
        have = {r.family for r in results if r.scheme == scheme.value}
        if not any(r.scheme == scheme.value for r in results):
            continue
        for fam in requested:
            if fam not in have:
                notes.append(f"{FAMILY_DISPLAY.get(fam, fam)} omitted from {scheme.value}-level table: no results")
    key = {f: i for i, f in enumerate(requested)}
    tindex = {t: i for i, t in enumerate(TRAITS)}
    results.sort(key=lambda r: (r.scheme != "two", tindex.get(r.trait, len(TRAITS)), r.trait, key[r.family]))
    return EvaluationReport(results, tuple(requested), notes)
