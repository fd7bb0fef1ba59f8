"""Popular-account catalog, demographic encoding and the feature matrix."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EncodingError, SchemaError, ValidationError
from .ingestion import POST_FEATURES, ProfileSnapshot, derive_post_features

FOLLOWING = "FollowingIndicator"
POST_PROFILE = "PostProfile"
DEMOGRAPHIC = "Demographic"
CATEGORIES = (FOLLOWING, POST_PROFILE, DEMOGRAPHIC)

FOLLOW_PREFIX = "follows:"

GENDERS = {"Male": 0, "Female": 1}
EDUCATION = (
    "High school student",
    "Diploma",
    "Associate Degree",
    "Bachelor's Degree",
    "Master's Degree",
    "Doctorate Degree",
)
OCCUPATION = (
    "Artist",
    "Employee",
    "Housewife",
    "Retired",
    "Self-employed",
    "Student",
    "Unemployed",
)


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in text.lower()).strip("_")


# --------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class PopularAccountCatalog:
    handles: tuple[str, ...]
    min_followers: int = 50_000
    min_participants: int = 6

    def __post_init__(self):
        if len(set(self.handles)) != len(self.handles):
            raise SchemaError("catalog handles must be unique")

    def __len__(self):
        return len(self.handles)

    @property
    def version(self) -> str:
        """Content hash; two catalogs with the same handles and thresholds share it."""
        h = hashlib.sha256()
        h.update(f"{self.min_followers}|{self.min_participants}\n".encode())
        for handle in self.handles:
            h.update(handle.encode("utf-8") + b"\n")
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "format": "instatraits.catalog",
            "version": self.version,
            "min_followers_exclusive": self.min_followers,
            "min_participants": self.min_participants,
            "handles": list(self.handles),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PopularAccountCatalog":
        try:
            cat = cls(tuple(data["handles"]), int(data["min_followers_exclusive"]), int(data["min_participants"]))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed catalog: {exc}") from exc
        if "version" in data and data["version"] != cat.version:
            raise SchemaError("catalog version does not match its content")
        return cat

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PopularAccountCatalog":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_popular_catalog(
    snapshots: Iterable[ProfileSnapshot],
    min_followers: int = 50_000,
    min_participants: int = 6,
) -> PopularAccountCatalog:
    """Accounts with more than ``min_followers`` followers that at least
    ``min_participants`` cohort members follow, sorted by handle."""
    snapshots = list(snapshots)
    if not any(not s.is_private for s in snapshots):
        raise ValidationError("catalog needs at least one public snapshot")
    followed = Counter()
    popular = set()
    for s in snapshots:
        for acc in s.following:
            followed[acc.handle] += 1
            if acc.follower_count is not None and acc.follower_count > min_followers:
                popular.add(acc.handle)
    handles = sorted(h for h in popular if followed[h] >= min_participants)
    return PopularAccountCatalog(tuple(handles), min_followers, min_participants)


# --------------------------------------------------------------------------
# demographics


@dataclass(frozen=True)
class Demographics:
    participant_id: str
    gender: str
    age: float | None = None
    education: str | None = None
    occupation: str | None = None
    private_page: bool | None = None


DEMOGRAPHIC_FEATURES = (
    ("gender", "age", "education", "occupation", "private_page")
    + tuple(f"education={_slug(e)}" for e in EDUCATION)
    + tuple(f"occupation={_slug(o)}" for o in OCCUPATION)
)


def _lookup(value: str, options: Sequence[str], what: str) -> int:
    for i, opt in enumerate(options):
        if value.strip().lower() == opt.lower():
            return i
    raise EncodingError(f"unknown {what} category {value!r}")


def encode_demographics(d: Demographics) -> dict[str, float]:
    """Ordinal codes plus one-hot indicators; unknown values stay ``nan``."""
    nan = math.nan
    out = dict.fromkeys(DEMOGRAPHIC_FEATURES, nan)
    if d.gender not in GENDERS:
        raise EncodingError(f"unknown gender {d.gender!r}")
    out["gender"] = float(GENDERS[d.gender])
    out["age"] = nan if d.age is None else float(d.age)
    out["private_page"] = nan if d.private_page is None else float(bool(d.private_page))
    for attr, options in (("education", EDUCATION), ("occupation", OCCUPATION)):
        value = getattr(d, attr)
        if value is None:
            continue
        code = _lookup(value, options, attr)
        out[attr] = float(code)
        for i, opt in enumerate(options):
            out[f"{attr}={_slug(opt)}"] = float(i == code)
    return out


def read_demographics(path) -> dict[str, Demographics]:
    """CSV with ``participant_id, gender, age, education, occupation, private_page``."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            pid = rec["participant_id"]
            if pid in out:
                raise SchemaError(f"duplicate participant {pid!r} in demographics")

            def cell(name):
                v = (rec.get(name) or "").strip()
                return v or None

            age = cell("age")
            private = cell("private_page")
            out[pid] = Demographics(
                participant_id=pid,
                gender=cell("gender") or "",
                age=None if age is None else float(age),
                education=cell("education"),
                occupation=cell("occupation"),
                private_page=None if private is None else private.lower() in ("1", "true", "yes"),
            )
    return out


def write_demographics(demographics: Iterable[Demographics], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant_id", "gender", "age", "education", "occupation", "private_page"])
        for d in demographics:
            w.writerow([
                d.participant_id,
                d.gender,
                "" if d.age is None else _num(d.age),
                d.education or "",
                d.occupation or "",
                "" if d.private_page is None else int(d.private_page),
            ])


# --------------------------------------------------------------------------
# matrix


@dataclass
class FeatureMatrix:
    """Participants x named features with ``nan`` for missing cells."""

    row_ids: tuple[str, ...]
    names: tuple[str, ...]
    categories: tuple[str, ...]
    values: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.row_ids), len(self.names)):
            raise SchemaError("value grid shape does not match row ids and names")
        if len(set(self.names)) != len(self.names):
            raise SchemaError("feature names must be unique")
        if len(set(self.row_ids)) != len(self.row_ids):
            raise SchemaError("row ids must be unique")
        if len(self.categories) != len(self.names):
            raise SchemaError("every feature needs a category")
        ind = self.values[:, self.category_mask(FOLLOWING)]
        if np.any(~np.isnan(ind) & (ind != 0) & (ind != 1)):
            raise SchemaError("following indicators must be 0, 1 or missing")

    @property
    def shape(self):
        return self.values.shape

    def category_mask(self, category: str) -> np.ndarray:
        return np.array([c == category for c in self.categories], dtype=bool)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def columns(self, names: Sequence[str]) -> np.ndarray:
        index = {n: i for i, n in enumerate(self.names)}
        try:
            return self.values[:, [index[n] for n in names]]
        except KeyError as exc:
            raise SchemaError(f"unknown feature {exc.args[0]!r}") from None

    def rows(self, ids: Sequence[str]) -> "FeatureMatrix":
        index = {r: i for i, r in enumerate(self.row_ids)}
        take = [index[r] for r in ids]
        return FeatureMatrix(tuple(ids), self.names, self.categories, self.values[take], dict(self.params))

    def catalog_dict(self) -> dict:
        return {
            "format": "instatraits.feature_catalog",
            "version": 1,
            "params": self.params,
            "features": [{"name": n, "category": c} for n, c in zip(self.names, self.categories)],
        }

    def save(self, csv_path, catalog_path=None) -> None:
        csv_path = Path(csv_path)
        catalog_path = Path(catalog_path) if catalog_path else csv_path.with_suffix(".catalog.json")
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["participant_id", *self.names])
            for rid, row in zip(self.row_ids, self.values):
                w.writerow([rid, *("" if math.isnan(v) else _num(v) for v in row)])
        catalog_path.write_text(json.dumps(self.catalog_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, csv_path, catalog_path=None) -> "FeatureMatrix":
        csv_path = Path(csv_path)
        catalog_path = Path(catalog_path) if catalog_path else csv_path.with_suffix(".catalog.json")
        meta = json.loads(catalog_path.read_text(encoding="utf-8"))
        names = tuple(f["name"] for f in meta["features"])
        cats = tuple(f["category"] for f in meta["features"])
        ids, rows = [], []
        with open(csv_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header[1:]) != names:
                raise SchemaError("feature CSV header does not match its catalog")
            for rec in reader:
                ids.append(rec[0])
                rows.append([float(v) if v != "" else math.nan for v in rec[1:]])
        values = np.array(rows, dtype=float).reshape(len(ids), len(names))
        return cls(tuple(ids), names, cats, values, meta.get("params", {}))


def _num(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def feature_layout(catalog: PopularAccountCatalog | None, include_instagram: bool = True):
    """Ordered (name, category) pairs of the assembled matrix."""
    layout = []
    if include_instagram:
        handles = catalog.handles if catalog is not None else ()
        layout += [(FOLLOW_PREFIX + h, FOLLOWING) for h in handles]
        layout += [(n, POST_PROFILE) for n in POST_FEATURES]
        layout.append(("number_of_following_popular_accounts", POST_PROFILE))
    layout += [(n, DEMOGRAPHIC) for n in DEMOGRAPHIC_FEATURES]
    return layout


def feature_row(
    snapshot: ProfileSnapshot | None,
    demographics: Demographics | None,
    catalog: PopularAccountCatalog | None,
    include_instagram: bool = True,
) -> dict[str, float]:
    row: dict[str, float] = {}
    if include_instagram:
        handles = catalog.handles if catalog is not None else ()
        if snapshot is None or snapshot.is_private:
            row.update({FOLLOW_PREFIX + h: math.nan for h in handles})
        else:
            follows = snapshot.following_handles
            row.update({FOLLOW_PREFIX + h: float(h in follows) for h in handles})
        if snapshot is None:
            row.update(dict.fromkeys(POST_FEATURES, math.nan))
            row["number_of_following_popular_accounts"] = math.nan
        else:
            row.update(derive_post_features(snapshot))
            if snapshot.is_private:
                row["number_of_following_popular_accounts"] = math.nan
            else:
                follows = snapshot.following_handles
                row["number_of_following_popular_accounts"] = float(sum(h in follows for h in handles))
    if demographics is not None:
        enc = encode_demographics(demographics)
        if math.isnan(enc["private_page"]) and snapshot is not None:
            enc["private_page"] = float(snapshot.is_private)
        row.update(enc)
    else:
        row.update(dict.fromkeys(DEMOGRAPHIC_FEATURES, math.nan))
        if snapshot is not None:
            row["private_page"] = float(snapshot.is_private)
    return row


def assemble_matrix(
    participants: Sequence,
    snapshots: Mapping[str, ProfileSnapshot] | None,
    catalog: PopularAccountCatalog | None,
    demographics: Mapping[str, Demographics] | None = None,
) -> FeatureMatrix:
    """One row per participant, columns ordered indicators, post/profile, demographics.

    ``participants`` holds participant ids or ``TraitProfile`` objects.

    ``snapshots=None`` builds a demographics-only matrix. A participant without
    a snapshot keeps its row with every Instagram column missing.
    """
    ids = tuple(p if isinstance(p, str) else p.participant_id for p in participants)
    if len(set(ids)) != len(ids):
        dup = next(i for i, c in Counter(ids).items() if c > 1)
        raise SchemaError(f"duplicate participant id {dup!r}")
    include_instagram = snapshots is not None
    layout = feature_layout(catalog, include_instagram)
    names = tuple(n for n, _ in layout)
    cats = tuple(c for _, c in layout)
    values = np.empty((len(ids), len(names)))
    for i, pid in enumerate(ids):
        row = feature_row(
            snapshots.get(pid) if snapshots is not None else None,
            demographics.get(pid) if demographics is not None else None,
            catalog,
            include_instagram,
        )
        values[i] = [row[n] for n in names]
    params = {}
    if catalog is not None and include_instagram:
        params = {"catalog_version": catalog.version, "catalog_size": len(catalog),
                  "min_followers_exclusive": catalog.min_followers, "min_participants": catalog.min_participants}
    return FeatureMatrix(ids, names, cats, values, params)

