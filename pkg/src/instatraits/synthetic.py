"""Seeded synthetic cohorts with planted following-indicator signal.

Each trait owns a block of planted catalog accounts. Following behaviour inside
a block shares one interest factor (``cohesion``), and the trait latent is

    z = effect * g(S) + sqrt(1 - effect**2) * eps

where ``S`` is the standardised sum of the block's indicators and ``g`` a
left-skewing monotone map, so the above-mean class is the larger one whenever
the signal is present. With ``effect = 0`` the latent is pure Gaussian noise.
Scores are ``z`` rescaled to reference means/SDs, rounded and clipped to the
scoring key range, then split into item answers.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.stats import norm

from .errors import ConfigurationError
from .featureset import EDUCATION, FOLLOW_PREFIX, OCCUPATION, Demographics, write_demographics
from .ingestion import FollowedAccount, PostKind, PostRecord, ProfileSnapshot, write_snapshot
from .psychometrics import TRAITS, ScoringKey, TraitProfile, default_keys, trait_range

# reference cohort descriptives (mean, sd) used to scale synthetic scores
REFERENCE_NORMS = {
    "neuroticism": (21.87, 9.51),
    "extraversion": (31.28, 7.72),
    "openness": (29.55, 5.60),
    "agreeableness": (30.65, 5.58),
    "conscientiousness": (33.94, 6.88),
    "innovation": (11.20, 3.21),
    "negotiation": (13.56, 2.67),
    "communication": (13.48, 3.23),
    "gaining_commitment": (16.25, 4.53),
    "sales_ability": (6.63, 2.53),
    "strategic_decision_making": (10.70, 3.12),
    "stress_tolerance": (6.95, 2.79),
    "initiative": (10.53, 2.82),
    "work_standards": (24.93, 4.38),
    "decision_making": (10.29, 3.27),
    "teamwork": (8.33, 2.35),
    "energy": (7.48, 3.19),
    "planning_and_organizing": (7.65, 2.81),
    "follow_up": (10.05, 2.64),
    "continuous_learning": (17.02, 3.24),
    "quality_orientation": (15.53, 4.44),
}

GENDER_WEIGHTS = {"Male": 143, "Female": 257}
EDUCATION_WEIGHTS = dict(zip(EDUCATION, (13, 27, 18, 120, 202, 20)))
OCCUPATION_WEIGHTS = {"Artist": 23, "Employee": 243, "Housewife": 14, "Retired": 0,
                      "Self-employed": 25, "Student": 71, "Unemployed": 24}


@dataclass(frozen=True)
class SyntheticCohortSpec:
    n_participants: int = 400
    catalog_width: int = 830
    planted_per_trait: int | Mapping[str, int] = 20
    effect_size: float | Mapping[str, float] = 1.0
    cohesion: float = 0.75
    skew: float = 5.0
    label_noise: float = 0.0
    private_rate: float = 102 / 400
    no_snapshot_rate: float = 9 / 400
    no_posts_rate: float = 45 / 289
    occupation_missing_rate: float = 66 / 400
    age_missing_rate: float = 25 / 400
    planted_prevalence: tuple[float, float] = (0.3, 0.6)
    noise_prevalence: tuple[float, float] = (0.04, 0.15)
    max_crawled_posts: int = 24
    min_followers: int = 50_000
    min_participants: int = 6
    seed: int = 0

    def planted_count(self, trait: str) -> int:
        v = self.planted_per_trait
        return int(v.get(trait, 0) if isinstance(v, Mapping) else v)

    def effect(self, trait: str) -> float:
        v = self.effect_size
        return float(v.get(trait, 0.0) if isinstance(v, Mapping) else v)

    def validate(self) -> None:
        if self.n_participants < 10:
            raise ConfigurationError("a synthetic cohort needs at least 10 participants")
        if not 0 <= self.label_noise < 1:
            raise ConfigurationError("label_noise must lie in [0, 1)")
        if not 0 <= self.cohesion < 1:
            raise ConfigurationError("cohesion must lie in [0, 1)")
        for t in TRAITS:
            if self.planted_count(t) < 0:
                raise ConfigurationError(f"negative planted count for {t}")
            if not 0 <= self.effect(t) <= 1:
                raise ConfigurationError(f"effect size for {t} must lie in [0, 1]")
        planted = sum(self.planted_count(t) for t in TRAITS)
        if planted > self.catalog_width:
            raise ConfigurationError(f"{planted} planted features exceed catalog width {self.catalog_width}")
        public = self.n_participants * (1 - self.private_rate - self.no_snapshot_rate)
        if public < 2 * self.min_participants:
            raise ConfigurationError(
                f"about {public:.0f} public profiles cannot support accounts followed by "
                f"{self.min_participants} participants")
        if any(self.effect(t) > 0 and self.planted_count(t) == 0 for t in TRAITS):
            raise ConfigurationError("a positive effect size needs at least one planted feature")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("planted_per_trait", "effect_size"):
            if isinstance(d[k], Mapping):
                d[k] = dict(sorted(d[k].items()))
        d["planted_prevalence"] = list(self.planted_prevalence)
        d["noise_prevalence"] = list(self.noise_prevalence)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticCohortSpec":
        d = dict(d)
        for k in ("planted_prevalence", "noise_prevalence"):
            if k in d:
                d[k] = tuple(d[k])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown synthetic spec fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SyntheticCohort:
    spec: SyntheticCohortSpec
    profiles: list
    responses: list  # (participant_id, {item: answer})
    snapshots: dict
    demographics: dict
    ground_truth: dict = field(default_factory=dict)

    def write(self, directory) -> Path:
        """Write snapshots/, responses.csv, demographics.csv and ground_truth.json."""
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        snap_root = root / "snapshots"
        snap_root.mkdir(exist_ok=True)
        for pid in sorted(self.snapshots):
            write_snapshot(self.snapshots[pid], snap_root / pid)
        items = sorted({i for _, ans in self.responses for i in ans})
        with open(root / "responses.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["participant_id"] + [f"q{i}" for i in items])
            for pid, ans in self.responses:
                w.writerow([pid] + ["" if ans[i] is None else ans[i] for i in items])
        write_demographics([self.demographics[p] for p in sorted(self.demographics)], root / "demographics.csv")
        (root / "ground_truth.json").write_text(json.dumps(self.ground_truth, indent=1) + "\n", encoding="utf-8")
        return root


def _weighted_choice(rng, weights: Mapping[str, float], size: int):
    names = list(weights)
    p = np.array([weights[k] for k in names], dtype=float)
    return [names[i] for i in rng.choice(len(names), size=size, p=p / p.sum())]


def _skewed(S, skew):
    g = -np.exp(-skew * S)
    sd = g.std()
    return (g - g.mean()) / sd if sd > 0 else np.zeros_like(g)


def _standardise(A):
    sd = A.std(axis=0)
    return np.where(sd > 0, (A - A.mean(axis=0)) / np.where(sd > 0, sd, 1), 0.0)


def _split_items(total: int, n_items: int, lo: int, hi: int, rng) -> list[int]:
    """Random item points in [lo, hi] summing to ``total``."""
    points = [lo] * n_items
    left = total - lo * n_items
    open_items = list(range(n_items))
    while left > 0:
        j = open_items[int(rng.integers(len(open_items)))]
        points[j] += 1
        left -= 1
        if points[j] == hi:
            open_items.remove(j)
    return points


def _posts(rng, pid: str, count: int, cap: int) -> tuple[PostRecord, ...]:
    n = min(count, cap)
    kinds = rng.choice(3, size=n, p=[0.88, 0.06, 0.06])
    out = []
    for k in range(n):
        disabled = rng.random() < 0.03
        caption = int(rng.exponential(170)) if rng.random() < 0.8 else 0
        out.append(PostRecord(
            post_id=f"{pid}-{k:03d}",
            kind=(PostKind.IMAGE, PostKind.SLIDE, PostKind.VIDEO)[int(kinds[k])],
            like_count=int(rng.lognormal(3.5, 1.0)),
            comment_count=None if disabled else int(rng.poisson(6)),
            caption_length=caption,
            hashtag_count=int(rng.poisson(3)) if rng.random() < 0.32 else 0,
            has_location=bool(rng.random() < 0.18),
        ))
    return tuple(out)


def generate_synthetic_cohort(spec: SyntheticCohortSpec = SyntheticCohortSpec(),
                              keys: tuple[ScoringKey, ...] | None = None) -> SyntheticCohort:
    spec.validate()
    keys = keys or default_keys()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_participants
    ids = [f"p{i + 1:04d}" for i in range(n)]

    # snapshot availability
    u = rng.random(n)
    no_snapshot = u < spec.no_snapshot_rate
    private = (~no_snapshot) & (u < spec.no_snapshot_rate + spec.private_rate)
    public = ~(no_snapshot | private)
    pub_idx = np.flatnonzero(public)

    # catalog: handles are neutral; planted blocks are a seeded subset
    width = spec.catalog_width
    handles = [f"page{j + 1:04d}" for j in range(width)]
    order = rng.permutation(width)
    planted: dict[str, list[int]] = {}
    pos = 0
    for t in TRAITS:
        k = spec.planted_count(t)
        planted[t] = sorted(int(j) for j in order[pos:pos + k])
        pos += k

    follows = np.zeros((n, width), dtype=bool)
    lo, hi = spec.noise_prevalence
    follows[:, :] = rng.random((n, width)) < rng.uniform(lo, hi, size=width)
    interest = {}
    for t in TRAITS:
        cols = planted[t]
        v = rng.normal(size=n)
        interest[t] = v
        if not cols:
            continue
        q = rng.uniform(*spec.planted_prevalence, size=len(cols))
        a = spec.cohesion
        e = rng.normal(size=(n, len(cols)))
        follows[:, cols] = a * v[:, None] + math.sqrt(1 - a * a) * e > norm.ppf(1 - q)
    # private and absent profiles still have interests; they are just never observed
    # every catalog account needs enough public followers to enter the catalog
    for j in range(width):
        have = int(follows[pub_idx, j].sum())
        if have < spec.min_participants:
            candidates = pub_idx[~follows[pub_idx, j]]
            extra = rng.choice(candidates, size=spec.min_participants - have, replace=False)
            follows[extra, j] = True
    catalog_followers = np.exp(rng.uniform(np.log(spec.min_followers + 1), np.log(5e6), size=width)).astype(int)

    # trait scores
    scores = {}
    labels_rate = {}
    empirical_r = {}
    for t in TRAITS:
        cols = planted[t]
        rho = spec.effect(t)
        eps = rng.normal(size=n)
        if cols and rho > 0:
            Xp = follows[:, cols].astype(float)
            Z = _standardise(Xp)
            S = Z.sum(axis=1)
            S = (S - S.mean()) / S.std() if S.std() > 0 else S * 0
            z = rho * _skewed(S, spec.skew) + math.sqrt(max(0.0, 1 - rho * rho)) * eps
        else:
            z = eps
        noisy = rng.random(n) < spec.label_noise
        z = np.where(noisy, rng.normal(size=n), z)
        mean, sd = REFERENCE_NORMS[t]
        lo_t, hi_t = trait_range(keys, t)
        s = np.clip(np.rint(mean + sd * z), lo_t, hi_t)
        scores[t] = s
        high = s > s.mean()
        labels_rate[t] = float(high.mean())
        if cols:
            pub = public
            rs = {}
            for j in cols:
                x = follows[pub, j].astype(float)
                y = high[pub].astype(float)
                rs[FOLLOW_PREFIX + handles[j]] = float(np.corrcoef(x, y)[0, 1]) if x.std() > 0 and y.std() > 0 else 0.0
            empirical_r[t] = rs

    profiles = [TraitProfile(pid, {t: float(scores[t][i]) for t in TRAITS}) for i, pid in enumerate(ids)]

    # item answers reproducing the scores
    responses = []
    for i, pid in enumerate(ids):
        answers: dict[int, int | None] = {}
        for key in keys:
            flip = key.item_min + key.item_max
            for tk in key.traits:
                pts = _split_items(int(scores[tk.trait][i]), len(tk.items), key.item_min, key.item_max, rng)
                for item, p in zip(tk.items, pts):
                    answers[item] = flip - p if item in tk.reverse else p
        responses.append((pid, dict(sorted(answers.items()))))

    # demographics
    genders = _weighted_choice(rng, GENDER_WEIGHTS, n)
    educations = _weighted_choice(rng, EDUCATION_WEIGHTS, n)
    occupations = _weighted_choice(rng, OCCUPATION_WEIGHTS, n)
    ages = np.clip(np.rint(rng.normal(28.38, 6.77, size=n)), 14, 65)
    occ_missing = rng.random(n) < spec.occupation_missing_rate
    age_missing = rng.random(n) < spec.age_missing_rate
    demographics = {
        pid: Demographics(
            participant_id=pid,
            gender=genders[i],
            age=None if age_missing[i] else float(ages[i]),
            education=educations[i],
            occupation=None if occ_missing[i] else occupations[i],
            private_page=None if no_snapshot[i] else bool(private[i]),
        )
        for i, pid in enumerate(ids)
    }

    # snapshots, with decoy accounts that must stay out of the catalog
    local_pool = [(f"local{j + 1:04d}", int(f)) for j, f in enumerate(rng.integers(10, 50_000, size=600))]
    rare_popular = [(f"rare{j + 1:03d}", int(f)) for j, f in enumerate(rng.integers(60_000, 2_000_000, size=40))]
    if spec.min_participants < 2:
        rare_popular = []  # every followed account would qualify
    rare_followers = {h: rng.choice(pub_idx, size=int(rng.integers(1, spec.min_participants)), replace=False)
                      for h, _ in rare_popular}
    threshold_decoy = ("borderline", spec.min_followers)  # exactly at the cutoff: not popular
    snapshots = {}
    for i, pid in enumerate(ids):
        if no_snapshot[i]:
            continue
        followers = int(rng.lognormal(5.2, 1.3))
        following_count = int(rng.lognormal(5.6, 0.8))
        post_count = int(rng.lognormal(3.8, 1.2))
        if private[i]:
            snapshots[pid] = ProfileSnapshot(pid, f"user_{pid}", True, followers, following_count, post_count)
            continue
        if rng.random() < spec.no_posts_rate:
            post_count = 0
        posts = _posts(rng, pid, post_count, spec.max_crawled_posts)
        accounts = [FollowedAccount(handles[j], int(catalog_followers[j])) for j in np.flatnonzero(follows[i])]
        for j in sorted(rng.choice(len(local_pool), size=int(rng.integers(5, 60)), replace=False)):
            accounts.append(FollowedAccount(*local_pool[j]))
        accounts += [FollowedAccount(h, f) for h, f in rare_popular if i in rare_followers[h]]
        if rng.random() < 0.3:
            accounts.append(FollowedAccount(*threshold_decoy))
        following_count = max(following_count, len(accounts))
        snapshots[pid] = ProfileSnapshot(pid, f"user_{pid}", False, followers, following_count,
                                         post_count, posts, tuple(accounts))

    truth = {
        "seed": spec.seed,
        "spec": spec.to_dict(),
        "catalog": handles,
        "planted": {t: [FOLLOW_PREFIX + handles[j] for j in planted[t]] for t in TRAITS},
        "high_rate": labels_rate,
        "planted_r": empirical_r,
        "n_public": int(public.sum()),
        "n_private": int(private.sum()),
        "n_without_snapshot": int(no_snapshot.sum()),
    }
    return SyntheticCohort(spec, profiles, responses, snapshots, demographics, truth)
