import json
import math

import pytest
from hypothesis import given, strategies as st

from instatraits.errors import SchemaError
from instatraits.ingestion import (
    COUNT_FEATURES,
    POST_FEATURES,
    FollowedAccount,
    PostKind,
    PostRecord,
    ProfileSnapshot,
    derive_post_features,
    load_snapshots,
    parse_profile,
    parse_snapshot,
    write_snapshot,
)


def lines(*records):
    return [(i, json.dumps(r)) for i, r in enumerate(records, 1)]


def profile(**kw):
    base = {"participant_id": "p1", "username": "u", "follower_count": 100, "following_count": 20, "post_count": 5}
    base.update(kw)
    return base


def post(pid, kind="image", likes=10, comments=2, caption=0, tags=0, loc=False):
    return PostRecord(pid, PostKind(kind), likes, comments, caption, tags, loc)


def snap(posts=(), following=(), followers=100, private=False):
    return ProfileSnapshot("p", "u", private, followers, 10, max(len(posts), 1), tuple(posts), tuple(following))


# --- parsing ---------------------------------------------------------------

def test_private_profile_keeps_only_counts():
    s = parse_profile(profile(is_private=True, follower_count=120, following_count=300, post_count=45),
                      lines({"post_id": "a", "kind": "image"}), lines({"handle": "x"}))
    assert s.is_private
    assert (s.follower_count, s.following_count, s.post_count) == (120, 300, 45)
    assert s.posts == () and s.following == ()
    assert s.issues


def test_empty_public_profile_is_valid():
    s = parse_profile(profile(post_count=0))
    assert s.posts == ()
    f = derive_post_features(s)
    assert math.isnan(f["average_post_likes"])
    assert f["number_of_followers"] == 100


def test_single_image_post():
    s = parse_profile(profile(), lines({"post_id": "1", "kind": "Image", "like_count": 10, "comment_count": 2}))
    assert s.posts == (PostRecord("1", PostKind.IMAGE, 10, 2),)


def test_missing_count_is_schema_error():
    data = profile()
    del data["post_count"]
    with pytest.raises(SchemaError):
        parse_profile(data)
    with pytest.raises(SchemaError):
        parse_profile(profile(follower_count=-1))


def test_duplicate_post_id_is_schema_error():
    with pytest.raises(SchemaError):
        parse_profile(profile(), lines({"post_id": "1", "kind": "image"}, {"post_id": "1", "kind": "video"}))


def test_malformed_records_collected():
    s = parse_profile(
        profile(),
        lines({"post_id": "1", "kind": "image"}, {"post_id": "2", "kind": "hologram"}, {"kind": "image"}),
        lines({"handle": "a"}, {"handle": ""}, {"handle": "a"}, {"handle": "b", "follower_count": -3}),
    )
    assert [p.post_id for p in s.posts] == ["1"]
    assert [a.handle for a in s.following] == ["a"]
    assert len(s.issues) == 5


def test_disabled_comments_and_caption_text():
    s = parse_profile(profile(), lines({"post_id": "1", "kind": "slide", "like_count": 3, "comments_disabled": True,
                                        "comment_count": 9, "caption": "hello", "hashtags": ["#a", "#b"]}))
    p = s.posts[0]
    assert p.comments_disabled and p.comment_count is None
    assert p.caption_length == 5 and p.hashtag_count == 2


def test_too_many_posts_rejected():
    with pytest.raises(SchemaError):
        parse_profile(profile(post_count=1), lines({"post_id": "1", "kind": "image"}, {"post_id": "2", "kind": "image"}))


def test_snapshot_invariants():
    with pytest.raises(SchemaError):
        ProfileSnapshot("p", "u", True, 1, 1, 1, (post("a"),))
    with pytest.raises(SchemaError):
        ProfileSnapshot("p", "u", False, 1, 1, 5, (), (FollowedAccount("a"), FollowedAccount("a")))


def test_directory_round_trip(tmp_path):
    s = snap([post("1", caption=4, tags=1, loc=True), post("2", kind="video", comments=None)],
             [FollowedAccount("big", 60000), FollowedAccount("small")])
    write_snapshot(s, tmp_path / "p")
    assert parse_snapshot(tmp_path / "p") == s
    private = ProfileSnapshot("q", "v", True, 5, 6, 7)
    write_snapshot(private, tmp_path / "q")
    loaded = load_snapshots(tmp_path)
    assert loaded == {"p": s, "q": private}


def test_parse_snapshot_errors(tmp_path):
    with pytest.raises(SchemaError):
        parse_snapshot(tmp_path)
    (tmp_path / "profile.json").write_text(json.dumps(profile(schema_version=99)))
    with pytest.raises(SchemaError):
        parse_snapshot(tmp_path)
    (tmp_path / "profile.json").write_text("{not json")
    with pytest.raises(SchemaError):
        parse_snapshot(tmp_path)


# --- features --------------------------------------------------------------

def test_hashtag_ratio():
    s = snap([post("1", tags=2), post("2", tags=1), post("3"), post("4")])
    assert derive_post_features(s)["hashtag_usage_ratio"] == 0.5


def test_engagement():
    f = derive_post_features(snap([post("1", likes=10, comments=2)], followers=100))
    assert f["average_post_engagement"] == pytest.approx(0.12)


def test_engagement_with_disabled_comments_and_zero_followers():
    f = derive_post_features(snap([post("1", likes=10, comments=None)], followers=100))
    assert f["average_post_engagement"] == pytest.approx(0.10)
    assert f["number_of_disabled_comments"] == 1
    assert math.isnan(f["average_post_comments"])
    f = derive_post_features(snap([post("1")], followers=0))
    assert math.isnan(f["average_post_engagement"])


def test_private_features_only_counts():
    f = derive_post_features(ProfileSnapshot("p", "u", True, 120, 300, 45))
    assert [f[k] for k in COUNT_FEATURES] == [120, 300, 45]
    assert all(math.isnan(f[k]) for k in POST_FEATURES if k not in COUNT_FEATURES)


def test_following_features():
    f = derive_post_features(snap([], [FollowedAccount("a", 60000), FollowedAccount("b", 50000), FollowedAccount("c")]))
    assert f["total_followers_of_followings"] == 110000
    assert f["max_followers_of_followings"] == 60000
    assert f["number_of_popular_followings"] == 1


posts_st = st.lists(
    st.builds(
        lambda kind, likes, comments, cap, tags, loc: (kind, likes, comments, cap, tags, loc),
        st.sampled_from(list(PostKind)),
        st.one_of(st.none(), st.integers(0, 500)),
        st.one_of(st.none(), st.integers(0, 50)),
        st.integers(0, 300), st.integers(0, 5), st.booleans(),
    ),
    min_size=1, max_size=12,
)


def build(raw, followers=250):
    return snap([PostRecord(str(i), *r) for i, r in enumerate(raw)], followers=followers)


@given(posts_st)
def test_ratio_and_total_invariants(raw):
    f = derive_post_features(build(raw))
    assert f["image_posts_ratio"] + f["slide_posts_ratio"] + f["video_posts_ratio"] == pytest.approx(1, abs=1e-9)
    for key in ("hashtag_usage_ratio", "location_usage_ratio", "image_posts_ratio"):
        assert 0 <= f[key] <= 1
    assert f["total_caption_length"] == sum(r[3] for r in raw)
    if f["number_of_captions"] > 0:
        assert f["average_caption_length"] * f["number_of_captions"] == pytest.approx(f["total_caption_length"], abs=1e-9)


@given(posts_st, st.randoms(use_true_random=False))
def test_order_invariance(raw, rnd):
    a = derive_post_features(build(raw))
    shuffled = list(raw)
    rnd.shuffle(shuffled)
    b = derive_post_features(build(shuffled))
    for k in POST_FEATURES:
        assert (math.isnan(a[k]) and math.isnan(b[k])) or a[k] == b[k]


@given(posts_st)
def test_removing_a_post_never_raises_totals(raw):
    full = derive_post_features(build(raw))
    fewer = derive_post_features(build(raw[:-1]))
    for k in ("total_post_likes", "total_post_comments", "total_caption_length"):
        if not math.isnan(fewer[k]):
            assert fewer[k] <= full[k]
