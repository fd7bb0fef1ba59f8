"""Pre-crawled Instagram exports: parsing and profile/post features.

An export is one directory per participant holding ``profile.json``,
``posts.jsonl`` and ``following.jsonl`` (see ``docs/export_schema.md``).
Missing feature values are ``nan``, never 0.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import SchemaError

SCHEMA_VERSION = 1
POPULAR_FOLLOWER_THRESHOLD = 50_000
MISSING = float("nan")


class PostKind(str, Enum):
    IMAGE = "image"
    SLIDE = "slide"
    VIDEO = "video"


@dataclass(frozen=True)
class PostRecord:
    post_id: str
    kind: PostKind
    like_count: int | None  # None: likes hidden
    comment_count: int | None  # None: comments disabled
    caption_length: int = 0
    hashtag_count: int = 0
    has_location: bool = False

    @property
    def comments_disabled(self) -> bool:
        return self.comment_count is None


@dataclass(frozen=True)
class FollowedAccount:
    handle: str
    follower_count: int | None = None


@dataclass(frozen=True)
class ProfileSnapshot:
    participant_id: str
    username: str
    is_private: bool
    follower_count: int
    following_count: int
    post_count: int
    posts: tuple[PostRecord, ...] = ()
    following: tuple[FollowedAccount, ...] = ()
    issues: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        for name in ("follower_count", "following_count", "post_count"):
            if getattr(self, name) < 0:
                raise SchemaError(f"{name} must be non-negative")
        if self.is_private and (self.posts or self.following):
            raise SchemaError("private snapshot cannot carry posts or following")
        if len(self.posts) > self.post_count:
            raise SchemaError(f"{len(self.posts)} posts exceed post_count {self.post_count}")
        handles = [a.handle for a in self.following]
        if len(set(handles)) != len(handles):
            raise SchemaError("duplicate handle in following list")

    @property
    def following_handles(self) -> frozenset[str]:
        return frozenset(a.handle for a in self.following)


# --------------------------------------------------------------------------
# parsing


def _count(data: dict, key: str, where: str) -> int:
    if key not in data or data[key] is None:
        raise SchemaError(f"{where}: missing mandatory field {key!r}")
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise SchemaError(f"{where}: {key!r} must be a non-negative integer")
    return value


def _optional_count(value, what: str):
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ValueError(f"{what} must be a non-negative integer or null")
    return value


def _parse_post(rec: dict) -> PostRecord:
    kind = PostKind(str(rec["kind"]).lower())
    comments = rec.get("comment_count")
    if rec.get("comments_disabled"):
        comments = None
    caption_length = rec.get("caption_length")
    if caption_length is None:
        caption_length = len(rec.get("caption") or "")
    hashtags = rec.get("hashtag_count")
    if hashtags is None:
        hashtags = len(rec.get("hashtags") or ())
    return PostRecord(
        post_id=str(rec["post_id"]),
        kind=kind,
        like_count=_optional_count(rec.get("like_count"), "like_count"),
        comment_count=_optional_count(comments, "comment_count"),
        caption_length=_optional_count(int(caption_length), "caption_length"),
        hashtag_count=_optional_count(int(hashtags), "hashtag_count"),
        has_location=bool(rec.get("has_location", False)),
    )


def _parse_account(rec: dict) -> FollowedAccount:
    handle = str(rec.get("handle") or "").strip()
    if not handle:
        raise ValueError("empty handle")
    return FollowedAccount(handle, _optional_count(rec.get("follower_count"), "follower_count"))


def _read_jsonl(path: Path):
    if not path.exists():
        return
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if line:
                yield lineno, line


def parse_profile(profile: dict, posts: Iterable[tuple[int, str]] = (), following: Iterable[tuple[int, str]] = (),
                  participant_id: str | None = None) -> ProfileSnapshot:
    """Build a snapshot from already-loaded export documents.

    ``posts`` and ``following`` yield ``(line_number, json_text)`` pairs.
    Malformed post or following lines are recorded in ``issues``.
    """
    pid = participant_id or profile.get("participant_id")
    if not pid:
        raise SchemaError("profile: missing participant_id")
    pid = str(pid)
    where = f"participant {pid}"
    counts = {k: _count(profile, k, where) for k in ("follower_count", "following_count", "post_count")}
    is_private = bool(profile.get("is_private", False))
    issues: list[str] = []
    post_records: list[PostRecord] = []
    accounts: list[FollowedAccount] = []
    if is_private:
        if any(True for _ in posts) or any(True for _ in following):
            issues.append("private profile export carried posts/following; ignored")
    else:
        seen_posts = set()
        for lineno, text in posts:
            try:
                rec = _parse_post(json.loads(text))
            except (ValueError, KeyError, TypeError) as exc:
                issues.append(f"posts.jsonl:{lineno}: {exc}")
                continue
            if rec.post_id in seen_posts:
                raise SchemaError(f"{where}: duplicate post_id {rec.post_id!r}")
            seen_posts.add(rec.post_id)
            post_records.append(rec)
        seen_handles = set()
        for lineno, text in following:
            try:
                acc = _parse_account(json.loads(text))
            except (ValueError, KeyError, TypeError) as exc:
                issues.append(f"following.jsonl:{lineno}: {exc}")
                continue
            if acc.handle in seen_handles:
                issues.append(f"following.jsonl:{lineno}: duplicate handle {acc.handle!r}")
                continue
            seen_handles.add(acc.handle)
            accounts.append(acc)
    if len(post_records) > counts["post_count"]:
        raise SchemaError(f"{where}: {len(post_records)} posts exceed post_count {counts['post_count']}")
    return ProfileSnapshot(
        participant_id=pid,
        username=str(profile.get("username", "")),
        is_private=is_private,
        posts=tuple(post_records),
        following=tuple(accounts),
        issues=tuple(issues),
        **counts,
    )


def parse_snapshot(directory) -> ProfileSnapshot:
    """Parse one participant export directory."""
    directory = Path(directory)
    profile_path = directory / "profile.json"
    if not profile_path.exists():
        raise SchemaError(f"{directory}: profile.json not found")
    try:
        profile = json.loads(profile_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{profile_path}: {exc}") from exc
    version = profile.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"{profile_path}: unsupported schema_version {version}")
    return parse_profile(
        profile,
        _read_jsonl(directory / "posts.jsonl"),
        _read_jsonl(directory / "following.jsonl"),
        participant_id=profile.get("participant_id") or directory.name,
    )


def load_snapshots(root) -> dict[str, ProfileSnapshot]:
    """Parse every participant directory under ``root``, keyed by participant id."""
    out: dict[str, ProfileSnapshot] = {}
    for sub in sorted(p for p in Path(root).iterdir() if p.is_dir()):
        snap = parse_snapshot(sub)
        if snap.participant_id in out:
            raise SchemaError(f"duplicate participant {snap.participant_id!r} in {root}")
        out[snap.participant_id] = snap
    return out


def write_snapshot(snapshot: ProfileSnapshot, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    profile = {
        "schema_version": SCHEMA_VERSION,
        "participant_id": snapshot.participant_id,
        "username": snapshot.username,
        "is_private": snapshot.is_private,
        "follower_count": snapshot.follower_count,
        "following_count": snapshot.following_count,
        "post_count": snapshot.post_count,
    }
    (directory / "profile.json").write_text(json.dumps(profile, indent=2) + "\n", encoding="utf-8")
    if snapshot.is_private:
        return
    with open(directory / "posts.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for p in snapshot.posts:
            fh.write(json.dumps({
                "post_id": p.post_id,
                "kind": p.kind.value,
                "like_count": p.like_count,
                "comment_count": p.comment_count,
                "comments_disabled": p.comments_disabled,
                "caption_length": p.caption_length,
                "hashtag_count": p.hashtag_count,
                "has_location": p.has_location,
            }) + "\n")
    with open(directory / "following.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for a in snapshot.following:
            fh.write(json.dumps({"handle": a.handle, "follower_count": a.follower_count}) + "\n")


# --------------------------------------------------------------------------
# profile / post features

POST_FEATURES = (
    "number_of_followers",
    "number_of_followings",
    "number_of_posts",
    "total_post_likes",
    "average_post_likes",
    "total_post_comments",
    "average_post_comments",
    "hashtag_usage_ratio",
    "number_of_captions",
    "average_caption_length",
    "number_of_locations",
    "location_usage_ratio",
    "number_of_disabled_comments",
    "total_caption_length",
    "number_of_image_posts",
    "image_posts_ratio",
    "number_of_slide_posts",
    "slide_posts_ratio",
    "number_of_video_posts",
    "video_posts_ratio",
    "average_post_engagement",
    "total_followers_of_followings",
    "max_followers_of_followings",
    "number_of_popular_followings",
)
COUNT_FEATURES = POST_FEATURES[:3]


def _ratio(num, den):
    return num / den if den > 0 else MISSING


def derive_post_features(snapshot: ProfileSnapshot) -> dict[str, float]:
    """Profile and post quantities for one snapshot, ``nan`` where undefined.

    Private profiles only expose the three counts. Post-derived values need at
    least one crawled post; following-derived values need a public profile.
    """
    f = dict.fromkeys(POST_FEATURES, MISSING)
    f["number_of_followers"] = float(snapshot.follower_count)
    f["number_of_followings"] = float(snapshot.following_count)
    f["number_of_posts"] = float(snapshot.post_count)
    if snapshot.is_private:
        return f

    posts = snapshot.posts
    n = len(posts)
    if n:
        liked = [p.like_count for p in posts if p.like_count is not None]
        if liked:
            f["total_post_likes"] = float(sum(liked))
            f["average_post_likes"] = sum(liked) / len(liked)
        enabled = [p.comment_count for p in posts if p.comment_count is not None]
        if enabled:
            f["total_post_comments"] = float(sum(enabled))
            f["average_post_comments"] = sum(enabled) / len(enabled)
        f["number_of_disabled_comments"] = float(n - len(enabled))

        f["hashtag_usage_ratio"] = sum(1 for p in posts if p.hashtag_count > 0) / n
        captioned = [p.caption_length for p in posts if p.caption_length > 0]
        f["number_of_captions"] = float(len(captioned))
        f["total_caption_length"] = float(sum(p.caption_length for p in posts))
        f["average_caption_length"] = _ratio(sum(captioned), len(captioned))
        located = sum(1 for p in posts if p.has_location)
        f["number_of_locations"] = float(located)
        f["location_usage_ratio"] = located / n

        for kind, stem in ((PostKind.IMAGE, "image"), (PostKind.SLIDE, "slide"), (PostKind.VIDEO, "video")):
            c = sum(1 for p in posts if p.kind is kind)
            f[f"number_of_{stem}_posts"] = float(c)
            f[f"{stem}_posts_ratio"] = c / n

        if snapshot.follower_count > 0:
            rates = []
            for p in posts:
                if p.like_count is None and p.comment_count is None:
                    continue
                rates.append(((p.like_count or 0) + (p.comment_count or 0)) / snapshot.follower_count)
            if rates:
                f["average_post_engagement"] = math.fsum(rates) / len(rates)

    known = [a.follower_count for a in snapshot.following if a.follower_count is not None]
    if known:
        f["total_followers_of_followings"] = float(sum(known))
        f["max_followers_of_followings"] = float(max(known))
    f["number_of_popular_followings"] = float(sum(1 for c in known if c > POPULAR_FOLLOWER_THRESHOLD))
    return f
