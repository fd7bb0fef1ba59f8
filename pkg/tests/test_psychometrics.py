import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from instatraits.errors import (
    InsufficientDataError,
    SchemaError,
    UndefinedStatisticError,
    ValidationError,
)
from instatraits.psychometrics import (
    BIG_FIVE,
    COMPETENCIES,
    NormEntry,
    NormTable,
    Scheme,
    ScoringKey,
    TraitKey,
    TraitLabel,
    TraitProfile,
    bin_score,
    compute_norms,
    cronbach_alpha,
    default_competency_key,
    default_keys,
    default_neo_key,
    label_profiles,
    load_keys,
    read_scores,
    save_keys,
    score_file,
    score_questionnaire,
    three_level_cutoffs,
    trait_range,
    write_scores,
)

NEURO = NormEntry(21.87, 9.51, 400)
ORDER = {"Low": 0, "Medium": 1, "High": 2}


def small_key():
    return ScoringKey("toy", (TraitKey("a", (1, 2, 3), frozenset({2})), TraitKey("b", (4, 5))))


# --- keys ------------------------------------------------------------------

def test_default_keys_cover_all_traits():
    comp, neo = default_keys()
    assert [t.trait for t in comp.traits] == list(COMPETENCIES)
    assert [t.trait for t in neo.traits] == list(BIG_FIVE)
    assert not set(comp.items) & set(neo.items)


def test_default_key_maxima():
    keys = default_keys()
    assert trait_range(keys, "neuroticism") == (0, 48)
    assert trait_range(keys, "work_standards") == (0, 32)
    assert trait_range(keys, "stress_tolerance") == (0, 12)
    with pytest.raises(KeyError):
        trait_range(keys, "charisma")


def test_neo_key_has_twelve_items_per_factor():
    neo = default_neo_key(offset=0)
    for tk in neo.traits:
        assert len(tk.items) == 12
    assert sorted(neo.items) == list(range(1, 61))


def test_key_validation():
    with pytest.raises(SchemaError):
        TraitKey("a", ())
    with pytest.raises(SchemaError):
        TraitKey("a", (1, 1))
    with pytest.raises(SchemaError):
        TraitKey("a", (1, 2), frozenset({3}))
    with pytest.raises(SchemaError):
        ScoringKey("x", (TraitKey("a", (1,)), TraitKey("b", (1,))))
    with pytest.raises(SchemaError):
        ScoringKey("x", (TraitKey("a", (1,)),), item_min=4, item_max=4)
    with pytest.raises(SchemaError):
        ScoringKey.from_dict({"instrument": "x"})


def test_key_round_trip(tmp_path):
    keys = default_keys()
    save_keys(keys, tmp_path / "keys.json")
    assert load_keys(tmp_path / "keys.json") == keys


# --- scoring ---------------------------------------------------------------

def test_score_with_reverse_item():
    prof = score_questionnaire({1: 4, 2: 4, 3: 1, 4: 2, 5: 3}, [small_key()], "p1")
    # item 2 reverse keyed: 0 + 4 - 4 = 0
    assert prof.scores == {"a": 5.0, "b": 5.0}
    assert prof.incomplete == frozenset()


def test_missing_item_marks_trait_incomplete():
    prof = score_questionnaire({1: 4, 2: None, 3: 1, 4: 2, 5: 3}, [small_key()])
    assert "a" not in prof.scores
    assert prof.incomplete == {"a"}
    assert prof.scores["b"] == 5.0


def test_scoring_errors():
    key = small_key()
    with pytest.raises(ValidationError):
        score_questionnaire({1: 5, 2: 0, 3: 0, 4: 0, 5: 0}, [key])
    with pytest.raises(SchemaError):
        score_questionnaire({1: 0, 2: 0, 3: 0, 4: 0, 5: 0, 9: 1}, [key])
    with pytest.raises(SchemaError):
        score_questionnaire({1: 0, 2: 0, 3: 0, 4: 0}, [key])


@given(st.lists(st.integers(0, 4), min_size=5, max_size=5), st.permutations([1, 2, 3]))
def test_score_invariant_to_item_order(answers, perm):
    responses = dict(zip(range(1, 6), answers))
    base = score_questionnaire(responses, [small_key()])
    shuffled = ScoringKey("toy", (TraitKey("a", tuple(perm), frozenset({2})), TraitKey("b", (5, 4))))
    assert score_questionnaire(responses, [shuffled]).scores == base.scores


def test_score_file_and_scores_round_trip(tmp_path):
    path = tmp_path / "responses.csv"
    path.write_text("participant_id,q1,q2,q3,q4,q5\np1,4,4,1,2,3\np2,0,,0,1,1\n")
    profiles = score_file(path, [small_key()])
    assert profiles[0].scores == {"a": 5.0, "b": 5.0}
    assert profiles[1].incomplete == {"a"}
    write_scores(profiles, tmp_path / "scores.csv", traits=["a", "b"])
    back = read_scores(tmp_path / "scores.csv")
    assert back == profiles


def test_responses_reject_bad_header(tmp_path):
    path = tmp_path / "responses.csv"
    path.write_text("id,q1\np1,2\n")
    with pytest.raises(SchemaError):
        score_file(path, [small_key()])


# --- norms and binning -----------------------------------------------------

def test_neuroticism_cutoffs():
    high, low = three_level_cutoffs(NEURO)
    assert high == pytest.approx(31.38, abs=1e-9)
    assert low == pytest.approx(12.36, abs=1e-9)
    assert bin_score(35, NEURO, Scheme.THREE).value == "High"
    assert bin_score(20, NEURO, Scheme.THREE).value == "Medium"
    assert bin_score(10, NEURO, Scheme.THREE).value == "Low"


def test_bin_boundaries_take_less_extreme_class():
    norm = NormEntry(20.0, 5.0, 10)
    assert bin_score(20.0, norm, "two").value == "Low"
    assert bin_score(15.0, norm, "three").value == "Medium"
    assert bin_score(25.0, norm, "three").value == "Medium"
    assert bin_score(20.0 + 1e-9, norm, "two").value == "High"


def test_bin_rejects_non_finite_norm():
    with pytest.raises(ValidationError):
        bin_score(1.0, NormEntry(math.nan, 1.0, 5), "two")


def test_trait_label_validation():
    with pytest.raises(ValidationError):
        TraitLabel(Scheme.TWO, "Medium")
    assert TraitLabel(Scheme.THREE, "High").code == 2


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(finite, finite, finite, st.floats(0, 1e4, allow_nan=False), st.sampled_from(["two", "three"]))
def test_bin_monotone(s1, s2, mean, sd, scheme):
    lo, hi = sorted((s1, s2))
    norm = NormEntry(mean, sd, 10)
    assert ORDER[bin_score(lo, norm, scheme).value] <= ORDER[bin_score(hi, norm, scheme).value]


@given(finite, finite, st.floats(0, 1e4, allow_nan=False))
def test_two_and_three_levels_agree(score, mean, sd):
    norm = NormEntry(mean, sd, 10)
    three = bin_score(score, norm, "three").value
    two = bin_score(score, norm, "two").value
    if three == "High":
        assert two == "High"
    if three == "Low":
        assert two == "Low"


def test_compute_norms_sample_sd():
    profiles = [TraitProfile(str(i), {"a": float(v)}) for i, v in enumerate([2, 4, 4, 4, 5, 5, 7, 9])]
    table = compute_norms(profiles, ["a"])
    assert table["a"].mean == 5.0
    assert table["a"].sd == pytest.approx(np.std([2, 4, 4, 4, 5, 5, 7, 9], ddof=1))
    assert table["a"].n == 8


def test_compute_norms_skips_incomplete_and_needs_two():
    profiles = [TraitProfile("1", {"a": 1.0}), TraitProfile("2", {}, frozenset({"a"}))]
    with pytest.raises(InsufficientDataError):
        compute_norms(profiles, ["a"])


def test_norm_table_round_trip(tmp_path):
    table = NormTable({"neuroticism": NEURO}, version="7")
    table.save(tmp_path / "n.json")
    assert NormTable.load(tmp_path / "n.json") == table


def test_medium_is_modal_for_symmetric_scores():
    rng = np.random.default_rng(5)
    for _ in range(5):
        scores = rng.normal(30, 8, size=200)
        profiles = [TraitProfile(str(i), {"a": float(s)}) for i, s in enumerate(scores)]
        labels = label_profiles(profiles, compute_norms(profiles, ["a"]), "a", "three")
        counts = {c: sum(l.value == c for l in labels.values()) for c in ("Low", "Medium", "High")}
        assert counts["Medium"] >= max(counts["Low"], counts["High"])


# --- reliability -----------------------------------------------------------

def test_alpha_identical_columns_is_one():
    col = np.array([1, 3, 2, 4, 0], dtype=float)
    assert cronbach_alpha(np.column_stack([col, col, col])) == pytest.approx(1.0, abs=1e-12)


def test_alpha_uncorrelated_pair_is_zero():
    x = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    assert cronbach_alpha(x) == pytest.approx(0.0, abs=1e-12)


def test_alpha_matches_direct_formula():
    x = np.random.default_rng(0).integers(0, 5, size=(5, 4)).astype(float)
    k = 4
    n = 5
    def var(v):
        m = sum(v) / n
        return sum((a - m) ** 2 for a in v) / (n - 1)
    item = sum(var(list(x[:, j])) for j in range(k))
    total = var([sum(row) for row in x.tolist()])
    assert cronbach_alpha(x) == pytest.approx(k / (k - 1) * (1 - item / total), abs=1e-12)


def test_alpha_errors():
    with pytest.raises(UndefinedStatisticError):
        cronbach_alpha(np.ones((4, 3)))
    with pytest.raises(InsufficientDataError):
        cronbach_alpha(np.ones((4, 1)))
    with pytest.raises(ValidationError):
        cronbach_alpha([[1, np.nan], [2, 3]])


@given(st.lists(st.lists(st.integers(0, 4), min_size=3, max_size=3), min_size=3, max_size=12))
def test_alpha_at_most_one(rows):
    x = np.array(rows, dtype=float)
    if x.sum(axis=1).var() == 0:
        return
    assert cronbach_alpha(x) <= 1.0 + 1e-12


def test_alpha_one_for_shifted_columns():
    col = np.array([1.0, 3.0, 2.0, 4.0])
    assert cronbach_alpha(np.column_stack([col, col + 2, col - 1])) == pytest.approx(1.0, abs=1e-12)
