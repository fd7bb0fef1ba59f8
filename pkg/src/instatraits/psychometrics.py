"""Questionnaire scoring, cohort norms, level binning and scale reliability."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    InsufficientDataError,
    SchemaError,
    UndefinedStatisticError,
    ValidationError,
)

BIG_FIVE = (
    "neuroticism",
    "extraversion",
    "openness",
    "agreeableness",
    "conscientiousness",
)

COMPETENCIES = (
    "innovation",
    "negotiation",
    "communication",
    "gaining_commitment",
    "sales_ability",
    "strategic_decision_making",
    "stress_tolerance",
    "initiative",
    "work_standards",
    "decision_making",
    "teamwork",
    "energy",
    "planning_and_organizing",
    "follow_up",
    "continuous_learning",
    "quality_orientation",
)

TRAITS = BIG_FIVE + COMPETENCIES

DISPLAY_NAMES = {
    "neuroticism": "Neuroticism",
    "extraversion": "Extraversion",
    "openness": "Openness to Experience",
    "agreeableness": "Agreeableness",
    "conscientiousness": "Conscientiousness",
    "innovation": "Innovation",
    "negotiation": "Negotiation",
    "communication": "Communication",
    "gaining_commitment": "Gaining Commitment",
    "sales_ability": "Sales Ability/Persuasiveness",
    "strategic_decision_making": "Strategic Decision Making",
    "stress_tolerance": "Stress Tolerance",
    "initiative": "Initiative",
    "work_standards": "Work Standards",
    "decision_making": "Decision Making",
    "teamwork": "Teamwork",
    "energy": "Energy",
    "planning_and_organizing": "Planning and Organizing",
    "follow_up": "Follow-Up",
    "continuous_learning": "Continuous Learning",
    "quality_orientation": "Quality Orientation",
}


class Scheme(str, Enum):
    TWO = "two"
    THREE = "three"

    @property
    def classes(self) -> tuple[str, ...]:
        """Class names in ascending order."""
        if self is Scheme.TWO:
            return ("Low", "High")
        return ("Low", "Medium", "High")


@dataclass(frozen=True)
class TraitLabel:
    scheme: Scheme
    value: str

    def __post_init__(self):
        if self.value not in self.scheme.classes:
            raise ValidationError(f"label {self.value!r} is not legal for scheme {self.scheme.value}")

    @property
    def code(self) -> int:
        return self.scheme.classes.index(self.value)


# --------------------------------------------------------------------------
# scoring keys


@dataclass(frozen=True)
class TraitKey:
    trait: str
    items: tuple[int, ...]
    reverse: frozenset[int] = frozenset()

    def __post_init__(self):
        if not self.items:
            raise SchemaError(f"trait {self.trait!r} has no items")
        if len(set(self.items)) != len(self.items):
            raise SchemaError(f"trait {self.trait!r} lists an item twice")
        stray = set(self.reverse) - set(self.items)
        if stray:
            raise SchemaError(f"reverse-keyed items {sorted(stray)} are not items of {self.trait!r}")


@dataclass(frozen=True)
class ScoringKey:
    """Item-to-trait mapping for one instrument.

    Every item is answered on the integer range ``[item_min, item_max]``.
    Reverse-keyed items contribute ``item_min + item_max - answer``.
    """

    instrument: str
    traits: tuple[TraitKey, ...]
    item_min: int = 0
    item_max: int = 4
    version: str = "1"

    def __post_init__(self):
        if self.item_max <= self.item_min:
            raise SchemaError("item_max must exceed item_min")
        seen: dict[int, str] = {}
        for tk in self.traits:
            for item in tk.items:
                if item in seen:
                    raise SchemaError(f"item q{item} is keyed to both {seen[item]!r} and {tk.trait!r}")
                seen[item] = tk.trait

    @property
    def items(self) -> list[int]:
        return sorted(i for tk in self.traits for i in tk.items)

    def trait_key(self, trait: str) -> TraitKey:
        for tk in self.traits:
            if tk.trait == trait:
                return tk
        raise KeyError(trait)

    def min_total(self, trait: str) -> int:
        return len(self.trait_key(trait).items) * self.item_min

    def max_total(self, trait: str) -> int:
        return len(self.trait_key(trait).items) * self.item_max

    def to_dict(self) -> dict:
        return {
            "format": "instatraits.scoring_key",
            "version": self.version,
            "instrument": self.instrument,
            "item_range": [self.item_min, self.item_max],
            "traits": {
                tk.trait: {"items": list(tk.items), "reverse": sorted(tk.reverse)}
                for tk in self.traits
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScoringKey":
        try:
            lo, hi = data["item_range"]
            traits = tuple(
                TraitKey(name, tuple(int(i) for i in spec["items"]), frozenset(int(i) for i in spec.get("reverse", ())))
                for name, spec in data["traits"].items()
            )
            return cls(data["instrument"], traits, int(lo), int(hi), str(data["version"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"malformed scoring key: {exc}") from exc


# Competency items are blocks of 0-4 items, one block per competency; block
# sizes follow the reference score maxima (max / 4).
_COMPETENCY_ITEM_COUNTS = {
    "innovation": 5,
    "negotiation": 5,
    "communication": 5,
    "gaining_commitment": 6,
    "sales_ability": 3,
    "strategic_decision_making": 4,
    "stress_tolerance": 3,
    "initiative": 4,
    "work_standards": 8,
    "decision_making": 4,
    "teamwork": 3,
    "energy": 3,
    "planning_and_organizing": 3,
    "follow_up": 4,
    "continuous_learning": 6,
    "quality_orientation": 6,
}

# NEO-FFI cycles N, E, O, A, C through its 60 items.
_NEO_REVERSED = {1, 3, 8, 9, 12, 14, 15, 16, 18, 23, 24, 27, 29, 30, 31, 33,
                 38, 39, 42, 44, 45, 46, 48, 54, 55, 57, 59}


def default_competency_key() -> ScoringKey:
    traits = []
    start = 1
    for trait in COMPETENCIES:
        n = _COMPETENCY_ITEM_COUNTS[trait]
        traits.append(TraitKey(trait, tuple(range(start, start + n))))
        start += n
    return ScoringKey("competency", tuple(traits))


def default_neo_key(offset: int | None = None) -> ScoringKey:
    """NEO-FFI key, 12 items per factor; items numbered after the competency block."""
    if offset is None:
        offset = sum(_COMPETENCY_ITEM_COUNTS.values())
    traits = []
    for pos, trait in enumerate(BIG_FIVE):
        local = tuple(range(pos + 1, 61, 5))
        traits.append(TraitKey(
            trait,
            tuple(offset + i for i in local),
            frozenset(offset + i for i in local if i in _NEO_REVERSED),
        ))
    return ScoringKey("neo-ffi", tuple(traits))


def default_keys() -> tuple[ScoringKey, ScoringKey]:
    return default_competency_key(), default_neo_key()


def trait_range(keys: Sequence[ScoringKey], trait: str) -> tuple[int, int]:
    for key in keys:
        try:
            return key.min_total(trait), key.max_total(trait)
        except KeyError:
            continue
    raise KeyError(trait)


def load_keys(path) -> tuple[ScoringKey, ...]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, Mapping) and "keys" in data:
        data = data["keys"]
    if isinstance(data, Mapping):
        data = [data]
    return tuple(ScoringKey.from_dict(d) for d in data)


def save_keys(keys: Sequence[ScoringKey], path) -> None:
    payload = {"format": "instatraits.scoring_keys", "keys": [k.to_dict() for k in keys]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# scoring


@dataclass(frozen=True)
class TraitProfile:
    participant_id: str
    scores: Mapping[str, float]
    incomplete: frozenset[str] = frozenset()

    def score(self, trait: str) -> float | None:
        return self.scores.get(trait)


def score_questionnaire(
    responses: Mapping[int, int | None],
    keys: Sequence[ScoringKey],
    participant_id: str = "",
) -> TraitProfile:
    """Sum keyed item points per trait.

    ``responses`` maps item number to the integer answer, or ``None`` when the
    item was skipped. A trait with any skipped item is reported in
    ``incomplete`` and gets no score.
    """
    known = {i for key in keys for i in key.items}
    unknown = set(responses) - known
    if unknown:
        raise SchemaError(f"unknown item index q{min(unknown)}")
    absent = known - set(responses)
    if absent:
        raise SchemaError(f"item q{min(absent)} neither answered nor marked missing")

    scores: dict[str, float] = {}
    incomplete = set()
    for key in keys:
        flip = key.item_min + key.item_max
        for tk in key.traits:
            total = 0
            missing = False
            for item in tk.items:
                answer = responses[item]
                if answer is None:
                    missing = True
                    continue
                if not key.item_min <= answer <= key.item_max:
                    raise ValidationError(
                        f"participant {participant_id!r}: answer {answer} to item q{item} "
                        f"outside [{key.item_min}, {key.item_max}]"
                    )
                total += flip - answer if item in tk.reverse else answer
            if missing:
                incomplete.add(tk.trait)
            else:
                scores[tk.trait] = float(total)
    return TraitProfile(participant_id, scores, frozenset(incomplete))


def read_responses(path) -> list[tuple[str, dict[int, int | None]]]:
    """Read a ``participant_id, q1..qN`` CSV; empty cells are missing answers."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or reader.fieldnames[0] != "participant_id":
            raise SchemaError("responses CSV must start with a participant_id column")
        items = {}
        for col in reader.fieldnames[1:]:
            if not (col.startswith("q") and col[1:].isdigit()):
                raise SchemaError(f"unexpected column {col!r}")
            items[col] = int(col[1:])
        seen = set()
        for rec in reader:
            pid = rec["participant_id"]
            if pid in seen:
                raise SchemaError(f"duplicate participant {pid!r}")
            seen.add(pid)
            answers: dict[int, int | None] = {}
            for col, item in items.items():
                cell = (rec.get(col) or "").strip()
                if cell == "":
                    answers[item] = None
                    continue
                try:
                    answers[item] = int(cell)
                except ValueError:
                    raise ValidationError(f"participant {pid!r}: non-integer answer {cell!r} to {col}") from None
            rows.append((pid, answers))
    return rows


def score_file(path, keys: Sequence[ScoringKey]) -> list[TraitProfile]:
    return [score_questionnaire(ans, keys, pid) for pid, ans in read_responses(path)]


def write_scores(profiles: Iterable[TraitProfile], path, traits: Sequence[str] = TRAITS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant_id", *traits])
        for p in profiles:
            w.writerow([p.participant_id, *(_fmt(p.scores.get(t)) for t in traits)])


def read_scores(path) -> list[TraitProfile]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        traits = [c for c in reader.fieldnames[1:]]
        for rec in reader:
            scores, incomplete = {}, set()
            for t in traits:
                cell = rec[t].strip()
                if cell == "":
                    incomplete.add(t)
                else:
                    scores[t] = float(cell)
            out.append(TraitProfile(rec["participant_id"], scores, frozenset(incomplete)))
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if not float(v).is_integer() else str(int(v))


# --------------------------------------------------------------------------
# norms and binning


@dataclass(frozen=True)
class NormEntry:
    mean: float
    sd: float
    n: int

    def __post_init__(self):
        if self.sd < 0:
            raise ValidationError("standard deviation must be non-negative")
        if self.n < 2:
            raise InsufficientDataError("a norm needs at least two observations")


@dataclass(frozen=True)
class NormTable:
    entries: Mapping[str, NormEntry]
    version: str = "1"

    def __getitem__(self, trait: str) -> NormEntry:
        return self.entries[trait]

    def __contains__(self, trait) -> bool:
        return trait in self.entries

    def to_dict(self) -> dict:
        return {
            "format": "instatraits.norms",
            "version": self.version,
            "traits": {t: {"mean": e.mean, "sd": e.sd, "n": e.n} for t, e in self.entries.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "NormTable":
        try:
            entries = {t: NormEntry(float(v["mean"]), float(v["sd"]), int(v["n"])) for t, v in data["traits"].items()}
            return cls(entries, str(data["version"]))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed norm table: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NormTable":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def compute_norms(
    profiles: Sequence[TraitProfile],
    traits: Sequence[str] | None = None,
    version: str = "1",
) -> NormTable:
    """Per-trait sample mean and sample SD (n - 1) over complete scores.

    A new cohort gets a new ``version``; existing tables are never updated in
    place.
    """
    if traits is None:
        traits = [t for t in TRAITS if any(t in p.scores for p in profiles)]
    entries = {}
    for t in traits:
        values = np.array([p.scores[t] for p in profiles if t in p.scores], dtype=float)
        if values.size < 2:
            raise InsufficientDataError(f"trait {t!r} has {values.size} complete score(s); need at least 2")
        entries[t] = NormEntry(float(values.mean()), float(values.std(ddof=1)), int(values.size))
    return NormTable(entries, version)


def bin_score(score: float, norm: NormEntry, scheme: Scheme | str) -> TraitLabel:
    """Map a score to Low/High (around the mean) or Low/Medium/High (mean +/- sd).

    Scores sitting exactly on a cutoff take the less extreme class.
    """
    scheme = Scheme(scheme)
    if not (math.isfinite(norm.mean) and math.isfinite(norm.sd)):
        raise ValidationError("norm must be finite")
    if scheme is Scheme.TWO:
        return TraitLabel(scheme, "High" if score > norm.mean else "Low")
    if score > norm.mean + norm.sd:
        return TraitLabel(scheme, "High")
    if score < norm.mean - norm.sd:
        return TraitLabel(scheme, "Low")
    return TraitLabel(scheme, "Medium")


def three_level_cutoffs(norm: NormEntry) -> tuple[float, float]:
    """(high cutoff, low cutoff)."""
    return norm.mean + norm.sd, norm.mean - norm.sd


def label_profiles(profiles: Sequence[TraitProfile], norms: NormTable, trait: str, scheme) -> dict[str, TraitLabel]:
    """Labels for every participant with a complete score on ``trait``."""
    entry = norms[trait]
    return {
        p.participant_id: bin_score(p.scores[trait], entry, scheme)
        for p in profiles
        if trait in p.scores
    }


# --------------------------------------------------------------------------
# reliability


def cronbach_alpha(item_matrix) -> float:
    """Cronbach's alpha of a participants x items matrix (sample variances)."""
    x = np.asarray(item_matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise InsufficientDataError("need at least two participants and two items")
    if np.isnan(x).any():
        raise ValidationError("item matrix contains missing cells")
    k = x.shape[1]
    total_var = x.sum(axis=1).var(ddof=1)
    if total_var == 0:
        raise UndefinedStatisticError("total score variance is zero; reliability undefined")
    item_var = x.var(axis=0, ddof=1).sum()
    return float(k / (k - 1) * (1.0 - item_var / total_var))
