import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from instatraits.errors import EncodingError, SchemaError, ValidationError
from instatraits.featureset import (
    DEMOGRAPHIC,
    FOLLOW_PREFIX,
    FOLLOWING,
    POST_PROFILE,
    Demographics,
    FeatureMatrix,
    PopularAccountCatalog,
    assemble_matrix,
    build_popular_catalog,
    encode_demographics,
    read_demographics,
    write_demographics,
)
from instatraits.ingestion import COUNT_FEATURES, FollowedAccount, ProfileSnapshot


def public(pid, follows):
    accounts = tuple(FollowedAccount(h, c) for h, c in follows)
    return ProfileSnapshot(pid, pid, False, 100, len(accounts), 0, (), accounts)


def cohort(handle, followers, n_followers, extra=0):
    snaps = [public(f"p{i}", [(handle, followers)]) for i in range(n_followers)]
    snaps += [public(f"q{i}", []) for i in range(extra)]
    return snaps


# --- catalog ---------------------------------------------------------------

def test_catalog_thresholds():
    assert build_popular_catalog(cohort("big", 60_000, 6)).handles == ("big",)
    assert build_popular_catalog(cohort("edge", 50_000, 6)).handles == ()
    assert build_popular_catalog(cohort("huge", 10**6, 5)).handles == ()


def test_catalog_lexicographic_and_unknown_counts():
    snaps = []
    for i in range(6):
        snaps.append(public(f"p{i}", [("zeta", 70_000), ("alpha", 80_000), ("mystery", None)]))
    cat = build_popular_catalog(snaps)
    assert cat.handles == ("alpha", "zeta")


def test_catalog_needs_public_snapshot():
    with pytest.raises(ValidationError):
        build_popular_catalog([ProfileSnapshot("p", "u", True, 1, 1, 1)])


def test_catalog_round_trip_and_version(tmp_path):
    cat = PopularAccountCatalog(("a", "b"), 50_000, 6)
    cat.save(tmp_path / "c.json")
    back = PopularAccountCatalog.load(tmp_path / "c.json")
    assert back == cat and back.version == cat.version
    assert PopularAccountCatalog(("a",)).version != cat.version
    data = cat.to_dict()
    data["handles"] = ["a", "c"]
    with pytest.raises(SchemaError):
        PopularAccountCatalog.from_dict(data)
    with pytest.raises(SchemaError):
        PopularAccountCatalog(("a", "a"))


@given(st.lists(st.lists(st.tuples(st.sampled_from("abcdefgh"), st.sampled_from([10, 40_000, 60_000, 90_000])),
                         max_size=6, unique_by=lambda t: t[0]), min_size=1, max_size=15),
       st.integers(1, 6), st.integers(1, 6), st.sampled_from([0, 20_000, 50_000, 70_000]))
def test_catalog_monotone_in_thresholds(raw, m1, m2, f2):
    # one follower count per handle across the cohort
    counts = {}
    for follows in raw:
        for h, c in follows:
            counts.setdefault(h, c)
    snaps = [public(f"p{i}", [(h, counts[h]) for h, _ in follows]) for i, follows in enumerate(raw)]
    strict = build_popular_catalog(snaps, 50_000, max(m1, m2))
    loose = build_popular_catalog(snaps, min(f2, 50_000), min(m1, m2))
    assert set(strict.handles) <= set(loose.handles)
    matrix = assemble_matrix([s.participant_id for s in snaps], {s.participant_id: s for s in snaps}, strict)
    ind = matrix.values[:, matrix.category_mask(FOLLOWING)]
    assert np.all(ind.sum(axis=0) >= strict.min_participants)


# --- demographics ----------------------------------------------------------

def test_encode_demographics():
    enc = encode_demographics(Demographics("p", "Female", 30, "Doctorate Degree", "Housewife", False))
    assert enc["gender"] == 1
    assert enc["education"] == 5
    assert enc["occupation"] == 2
    assert enc["occupation=housewife"] == 1
    assert enc["occupation=artist"] == 0
    assert enc["private_page"] == 0
    assert enc["age"] == 30
    assert encode_demographics(Demographics("p", "Male"))["gender"] == 0


def test_missing_demographics_stay_missing():
    enc = encode_demographics(Demographics("p", "Male", None, "Diploma", None))
    assert math.isnan(enc["age"]) and math.isnan(enc["occupation"]) and math.isnan(enc["occupation=student"])
    assert enc["education"] == 1


def test_encoding_errors():
    with pytest.raises(EncodingError):
        encode_demographics(Demographics("p", "Other"))
    with pytest.raises(EncodingError):
        encode_demographics(Demographics("p", "Male", occupation="Astronaut"))


def test_demographics_csv_round_trip(tmp_path):
    rows = [Demographics("a", "Female", 31.0, "Master's Degree", "Employee", True),
            Demographics("b", "Male", None, None, None, None)]
    write_demographics(rows, tmp_path / "d.csv")
    assert read_demographics(tmp_path / "d.csv") == {"a": rows[0], "b": rows[1]}


# --- matrix ----------------------------------------------------------------

def catalog830():
    return PopularAccountCatalog(tuple(f"page{i:04d}" for i in range(830)))


def test_public_participant_indicator_block():
    cat = catalog830()
    s = public("p", [("page0001", 60_000), ("page0100", 60_000), ("page0829", 60_000), ("other", 10)])
    m = assemble_matrix(["p"], {"p": s}, cat)
    block = m.values[0, m.category_mask(FOLLOWING)]
    assert block.size == 830
    assert block.sum() == 3 and not np.isnan(block).any()
    assert m.column("number_of_following_popular_accounts")[0] == 3


def test_private_participant_indicator_missing():
    cat = catalog830()
    s = ProfileSnapshot("p", "u", True, 120, 300, 45)
    m = assemble_matrix(["p"], {"p": s}, cat)
    assert np.isnan(m.values[0, m.category_mask(FOLLOWING)]).all()
    assert [m.column(c)[0] for c in COUNT_FEATURES] == [120, 300, 45]
    assert m.column("private_page")[0] == 1


def test_participant_without_snapshot():
    cat = PopularAccountCatalog(("a",))
    demo = {"p": Demographics("p", "Female", 22, "Diploma", "Student", True)}
    m = assemble_matrix(["p"], {}, cat, demo)
    inst = m.category_mask(FOLLOWING) | m.category_mask(POST_PROFILE)
    assert np.isnan(m.values[0, inst]).all()
    assert m.column("gender")[0] == 1


def test_demographics_only_layout():
    m = assemble_matrix(["a", "b"], None, None, {"a": Demographics("a", "Male")})
    assert set(m.categories) == {DEMOGRAPHIC}
    assert np.isnan(m.values[1]).all()


def test_duplicate_participant_rejected():
    with pytest.raises(SchemaError):
        assemble_matrix(["a", "a"], None, None)


def test_matrix_validation():
    with pytest.raises(SchemaError):
        FeatureMatrix(("a",), ("x",), (FOLLOWING,), np.array([[2.0]]))
    with pytest.raises(SchemaError):
        FeatureMatrix(("a",), ("x", "x"), (DEMOGRAPHIC, DEMOGRAPHIC), np.zeros((1, 2)))
    with pytest.raises(SchemaError):
        FeatureMatrix(("a",), ("x",), (DEMOGRAPHIC,), np.zeros((2, 1)))


def test_matrix_round_trip_and_determinism(tmp_path):
    cat = PopularAccountCatalog(("a", "b"))
    snaps = {"p": public("p", [("a", 70_000)]), "q": ProfileSnapshot("q", "u", True, 1, 2, 3)}
    demo = {"p": Demographics("p", "Male", 40.5, "Diploma", "Retired", False)}
    m1 = assemble_matrix(["p", "q"], snaps, cat, demo)
    m2 = assemble_matrix(["p", "q"], snaps, cat, demo)
    assert m1.names == m2.names
    np.testing.assert_array_equal(m1.values, m2.values)
    m1.save(tmp_path / "f.csv")
    back = FeatureMatrix.load(tmp_path / "f.csv")
    assert back.names == m1.names and back.categories == m1.categories and back.row_ids == m1.row_ids
    np.testing.assert_array_equal(back.values, m1.values)
    assert back.params["catalog_version"] == cat.version
    text = (tmp_path / "f.csv").read_text().splitlines()[2]
    assert ",," in text  # missing cells are empty strings
    sub = m1.rows(["q"])
    assert sub.row_ids == ("q",)
    with pytest.raises(SchemaError):
        m1.columns([FOLLOW_PREFIX + "zzz"])
