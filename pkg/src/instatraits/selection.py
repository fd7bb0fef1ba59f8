"""Pearson correlation analysis and correlation-based feature selection."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import special
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted

from .errors import InsufficientDataError, UndefinedStatisticError, ValidationError
from .psychometrics import Scheme, TraitLabel

_LEVEL_ORDER = {"Low": 0, "Medium": 1, "High": 2}


def _complete_pairs(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("pearson expects two 1-D vectors of equal length")
    keep = ~(np.isnan(x) | np.isnan(y))
    return x[keep], y[keep]


def pearson(x, y) -> float:
    """Product-moment correlation over pairwise-complete observations."""
    x, y = _complete_pairs(x, y)
    if x.size < 3:
        raise InsufficientDataError(f"{x.size} complete pairs; need at least 3")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedStatisticError("correlation with a constant vector is undefined")
    dx = x - x.mean()
    dy = y - y.mean()
    r = float(np.dot(dx, dy) / math.sqrt(np.dot(dx, dx) * np.dot(dy, dy)))
    return min(1.0, max(-1.0, r))


def pearson_pvalue(r: float, n: int) -> float:
    """Two-sided p-value of ``r`` under the t-test with n - 2 degrees of freedom."""
    if n < 3:
        raise InsufficientDataError("p-value needs n >= 3")
    if abs(r) > 1:
        raise ValidationError("|r| must not exceed 1")
    if abs(r) == 1:
        return 0.0
    df = n - 2
    t2 = r * r * df / (1.0 - r * r)
    return float(_t_two_sided(np.float64(t2), np.float64(df)))


def _t_two_sided(t2, df):
    # P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2); the complement form keeps
    # precision when t is small and the argument sits next to 1
    x = df / (df + t2)
    with np.errstate(invalid="ignore"):
        return np.where(
            x < 0.5,
            special.betainc(df / 2.0, 0.5, x),
            special.betaincc(0.5, df / 2.0, t2 / (df + t2)),
        )


def correlate_columns(X, y):
    """Vectorised pairwise-complete Pearson of every column of ``X`` with ``y``.

    Returns ``(r, p, n)``; ``r`` and ``p`` are ``nan`` where undefined
    (fewer than 3 complete pairs or a constant side).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    mask = ~np.isnan(X) & ~np.isnan(y)[:, None]
    n = mask.sum(axis=0)
    Xz = np.where(mask, X, 0.0)
    Yz = np.where(mask, y[:, None], 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mx = Xz.sum(axis=0) / n
        my = Yz.sum(axis=0) / n
        dx = np.where(mask, X - mx, 0.0)
        dy = np.where(mask, y[:, None] - my, 0.0)
        sxy = (dx * dy).sum(axis=0)
        sxx = (dx * dx).sum(axis=0)
        syy = (dy * dy).sum(axis=0)
        r = sxy / np.sqrt(sxx * syy)
    xmax = np.where(mask, X, -np.inf).max(axis=0, initial=-np.inf)
    xmin = np.where(mask, X, np.inf).min(axis=0, initial=np.inf)
    ymax = np.where(mask, y[:, None], -np.inf).max(axis=0, initial=-np.inf)
    ymin = np.where(mask, y[:, None], np.inf).min(axis=0, initial=np.inf)
    undefined = (n < 3) | (xmax == xmin) | (ymax == ymin)
    r = np.clip(np.where(undefined, np.nan, r), -1.0, 1.0)
    p = np.full_like(r, np.nan)
    ok = ~undefined
    if ok.any():
        rr = r[ok]
        df = n[ok] - 2.0
        with np.errstate(divide="ignore"):
            t2 = np.where(np.abs(rr) >= 1, np.inf, rr * rr * df / (1.0 - rr * rr))
        p[ok] = np.where(np.isinf(t2), 0.0, _t_two_sided(np.where(np.isinf(t2), 1.0, t2), df))
    return r, p, n


# --------------------------------------------------------------------------
# correlation report


@dataclass
class CorrelationReport:
    features: tuple[str, ...]
    traits: tuple[str, ...]
    r: np.ndarray  # features x traits
    p: np.ndarray
    n: np.ndarray

    def rows(self, p_max: float | None = None):
        for i, f in enumerate(self.features):
            for j, t in enumerate(self.traits):
                r, p = self.r[i, j], self.p[i, j]
                if math.isnan(r):
                    continue
                if p_max is not None and not p < p_max:
                    continue
                yield f, t, float(r), float(p), int(self.n[i, j])

    def to_csv(self, path, p_max: float | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "trait", "r", "p", "n"])
            for f, t, r, p, n in self.rows(p_max):
                w.writerow([f, t, f"{r:.6f}", f"{p:.6g}", n])


def correlation_report(X, feature_names: Sequence[str], targets: Mapping[str, Sequence[float]]) -> CorrelationReport:
    """Correlate every feature with every numeric target (``nan`` = missing)."""
    X = np.asarray(X, dtype=float)
    traits = tuple(targets)
    shape = (X.shape[1], len(traits))
    R, P, N = np.empty(shape), np.empty(shape), np.empty(shape, dtype=int)
    for j, t in enumerate(traits):
        R[:, j], P[:, j], N[:, j] = correlate_columns(X, np.asarray(targets[t], dtype=float))
    return CorrelationReport(tuple(feature_names), traits, R, P, N)


# --------------------------------------------------------------------------
# selection


def _label_value(label):
    return label.value if isinstance(label, TraitLabel) else label


def _order_key(value):
    if isinstance(value, TraitLabel):
        return (0, value.code, "")
    if isinstance(value, str):
        return (0, _LEVEL_ORDER[value], "") if value in _LEVEL_ORDER else (1, 0, value)
    return (0, float(value), "")


def target_indicator(labels: Sequence, scheme: Scheme | str | None = None):
    """Indicator of the modal class; ties go to the higher-ordered class.

    Labels may be ``TraitLabel`` objects, class names (Low < Medium < High) or
    numeric codes. Returns ``(indicator, chosen_class)``.
    """
    values = [_label_value(l) for l in labels]
    values = [v.item() if isinstance(v, np.generic) else v for v in values]
    if scheme is not None:
        bad = {v for v in values if v not in Scheme(scheme).classes}
        if bad:
            raise ValidationError(f"labels {sorted(map(str, bad))} not legal for scheme {Scheme(scheme).value}")
    counts: dict = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    if len(counts) < 2:
        raise ValidationError("target has a single class; indicator would be constant")
    best = max(counts.values())
    chosen = max((v for v, c in counts.items() if c == best), key=_order_key)
    indicator = np.array([1 if v == chosen else 0 for v in values], dtype=int)
    return indicator, chosen


@dataclass
class SelectedFeatureSet:
    trait: str
    scheme: str
    features: tuple[str, ...]
    r_min: float
    p_max: float
    target_class: str
    stats: dict = field(default_factory=dict)  # name -> (r, p, n)
    notes: list = field(default_factory=list)
    method: str = "correlation"
    validation_accuracy: float | None = None

    def to_dict(self) -> dict:
        return {
            "format": "instatraits.selected_features",
            "version": 1,
            "trait": self.trait,
            "scheme": self.scheme,
            "method": self.method,
            "parameters": {"r_min": self.r_min, "p_max": self.p_max},
            "target_class": self.target_class,
            "features": [
                {"name": f, "r": self.stats[f][0], "p": self.stats[f][1], "n": self.stats[f][2]}
                if f in self.stats else {"name": f}
                for f in self.features
            ],
            "validation_accuracy": self.validation_accuracy,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SelectedFeatureSet":
        stats = {f["name"]: (f["r"], f["p"], f["n"]) for f in data["features"] if "r" in f}
        return cls(
            data["trait"], data["scheme"], tuple(f["name"] for f in data["features"]),
            data["parameters"]["r_min"], data["parameters"]["p_max"], data["target_class"],
            stats, list(data.get("notes", [])), data.get("method", "correlation"),
            data.get("validation_accuracy"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def _as_matrix(matrix, feature_names):
    if hasattr(matrix, "values") and hasattr(matrix, "names"):
        return np.asarray(matrix.values, dtype=float), tuple(matrix.names)
    X = np.asarray(matrix, dtype=float)
    if feature_names is None:
        feature_names = tuple(f"x{i}" for i in range(X.shape[1]))
    return X, tuple(feature_names)


def select_features(
    matrix,
    labels: Sequence,
    r_min: float = 0.01,
    p_max: float = 0.05,
    *,
    scheme: Scheme | str | None = None,
    trait: str = "",
    feature_names: Sequence[str] | None = None,
) -> SelectedFeatureSet:
    """Features whose correlation with the modal-class indicator is at least
    ``r_min`` (signed) with p-value at most ``p_max``.

    ``matrix`` is a ``FeatureMatrix`` or an array (then ``feature_names``
    names its columns). Output order: descending |r|, then name.
    """
    X, names = _as_matrix(matrix, feature_names)
    if X.shape[0] != len(labels):
        raise ValidationError("matrix rows and labels differ in length")
    indicator, chosen = target_indicator(labels, scheme)
    r, p, n = correlate_columns(X, indicator.astype(float))
    notes = []
    picked = []
    for j, name in enumerate(names):
        if math.isnan(r[j]):
            notes.append(f"skipped {name}: correlation undefined")
            continue
        if r[j] >= r_min and p[j] <= p_max:
            picked.append(j)
    picked.sort(key=lambda j: (-abs(r[j]), names[j]))
    return SelectedFeatureSet(
        trait=trait,
        scheme=Scheme(scheme).value if scheme is not None else "",
        features=tuple(names[j] for j in picked),
        r_min=r_min,
        p_max=p_max,
        target_class=str(chosen),
        stats={names[j]: (float(r[j]), float(p[j]), int(n[j])) for j in picked},
        notes=notes,
    )


def refine_features(
    matrix,
    labels: Sequence,
    model_trainer: Callable,
    seed: int,
    r_min: float = 0.01,
    p_max: float = 0.05,
    *,
    scheme: Scheme | str | None = None,
    trait: str = "",
    feature_names: Sequence[str] | None = None,
    initial: SelectedFeatureSet | None = None,
    n_folds: int = 3,
    validation_ratio: float = 0.8,
) -> SelectedFeatureSet:
    """Greedy backward-then-forward search over the correlation-ranked candidates.

    ``model_trainer(X, y)`` must return a fitted object with ``predict``.
    Candidate subsets are scored by validation accuracy pooled over seeded
    internal folds (``n_folds=1``: a single ``validation_ratio`` hold-out).
    The backward pass drops the lowest-ranked features one at a time and
    keeps the best prefix; the forward pass re-adds dropped features that
    strictly improve the score. Ties keep the smaller set.
    """
    from .evaluation import split_train_test  # local: evaluation imports nothing from here
    from .learners.tree import kfold_indices

    X, names = _as_matrix(matrix, feature_names)
    if initial is None:
        initial = select_features(X, labels, r_min, p_max, scheme=scheme, trait=trait, feature_names=names)
    candidates = list(initial.features)
    if not candidates:
        raise ValidationError("refinement needs at least one candidate feature")
    notes = list(initial.notes)
    if len(candidates) == 1:
        return _refined(initial, candidates, notes)

    y = np.array([_label_value(l) for l in labels])
    if n_folds > 1:
        splits = kfold_indices(len(y), n_folds, seed)
    else:
        splits = [split_train_test(len(y), validation_ratio, seed)]
    if any(len(set(y[fit])) < 2 for fit, _ in splits):
        notes.append("internal split left one class in a fitting part; refinement skipped")
        return _refined(initial, candidates, notes)
    col = {n: i for i, n in enumerate(names)}
    cache: dict[tuple[str, ...], float] = {}

    def score(subset):
        key = tuple(sorted(subset))
        if key not in cache:
            cols = [col[f] for f in subset]
            try:
                hits = 0
                for fit_idx, val_idx in splits:
                    model = model_trainer(X[np.ix_(fit_idx, cols)], y[fit_idx])
                    pred = np.asarray(model.predict(X[np.ix_(val_idx, cols)]))
                    hits += int(np.sum(pred == y[val_idx]))
                cache[key] = hits / sum(len(v) for _, v in splits)
            except Exception as exc:  # a failing subset is skipped, not fatal
                notes.append(f"trainer failed on {len(subset)}-feature subset: {exc}")
                cache[key] = -math.inf
        return cache[key]

    best_k = len(candidates)
    best = score(candidates)
    for k in range(len(candidates) - 1, 0, -1):
        s = score(candidates[:k])
        if s >= best:
            best, best_k = s, k
    current = candidates[:best_k]
    for f in candidates[best_k:]:
        trial = current + [f]
        s = score(trial)
        if s > best:
            best, current = s, trial
    order = {f: i for i, f in enumerate(candidates)}
    current.sort(key=order.__getitem__)
    out = _refined(initial, current, notes)
    out.validation_accuracy = best
    return out


def _refined(initial: SelectedFeatureSet, features, notes) -> SelectedFeatureSet:
    return SelectedFeatureSet(
        initial.trait, initial.scheme, tuple(features), initial.r_min, initial.p_max,
        initial.target_class, {f: initial.stats[f] for f in features if f in initial.stats},
        notes, method="correlation+greedy",
    )


class CorrelationSelector(SelectorMixin, BaseEstimator):
    """Transformer wrapper around :func:`select_features`.

    ``fit`` accepts ``nan`` cells (pairwise deletion).
    """

    def __init__(self, r_min=0.01, p_max=0.05):
        self.r_min = r_min
        self.p_max = p_max

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        result = select_features(X, list(y), self.r_min, self.p_max)
        chosen = {int(name[1:]) for name in result.features}
        self.support_ = np.array([j in chosen for j in range(X.shape[1])], dtype=bool)
        self.order_ = np.array([int(name[1:]) for name in result.features], dtype=int)
        self.target_class_ = result.target_class
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.input_tags.allow_nan = True
        return tags
