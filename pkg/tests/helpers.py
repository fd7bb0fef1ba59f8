"""Shared test plumbing: synthetic cohort -> labelled training design."""
import numpy as np

from instatraits.evaluation import split_train_test
from instatraits.featureset import FOLLOWING, assemble_matrix, build_popular_catalog
from instatraits.pipeline import derive_seed
from instatraits.psychometrics import compute_norms, label_profiles
from instatraits.selection import correlate_columns, select_features, target_indicator


def cohort_design(cohort, base_seed=0):
    """Feature matrix, two-level labels per trait and the pipeline's training ids."""
    catalog = build_popular_catalog(cohort.snapshots.values(), cohort.spec.min_followers,
                                    cohort.spec.min_participants)
    ids = [p.participant_id for p in cohort.profiles]
    matrix = assemble_matrix(ids, cohort.snapshots, catalog, cohort.demographics)
    norms = compute_norms(cohort.profiles)
    labels = {t: {pid: lab.value for pid, lab in label_profiles(cohort.profiles, norms, t, "two").items()}
              for t in norms.entries}
    train, _ = split_train_test(ids, 0.8, derive_seed(base_seed, "split"))
    return matrix, labels, [str(i) for i in train]


def planted_recall(cohort, base_seed=0, r_min=0.01, p_max=0.05):
    """Per-trait recall of planted indicators by select_features on training rows."""
    matrix, labels, train = cohort_design(cohort, base_seed)
    row = {pid: i for i, pid in enumerate(matrix.row_ids)}
    out = {}
    for trait, planted in cohort.ground_truth["planted"].items():
        if not planted:
            continue
        rows = [row[p] for p in train]
        y = [labels[trait][p] for p in train]
        sel = select_features(matrix.values[rows], y, r_min, p_max, scheme="two", trait=trait,
                              feature_names=matrix.names)
        out[trait] = len(set(planted) & set(sel.features)) / len(planted)
    return out


def null_indicator_rates(cohort, base_seed=0, p_max=0.05):
    """(signed, two-sided) fraction of indicator columns passing at ``p_max`` across traits."""
    matrix, labels, train = cohort_design(cohort, base_seed)
    row = {pid: i for i, pid in enumerate(matrix.row_ids)}
    rows = [row[p] for p in train]
    X = matrix.values[rows][:, matrix.category_mask(FOLLOWING)]
    signed, two_sided, total = 0, 0, 0
    for trait in labels:
        ind, _ = target_indicator([labels[trait][p] for p in train])
        r, p, _ = correlate_columns(X, ind.astype(float))
        ok = ~np.isnan(r)
        signed += int(np.sum((r[ok] >= 0.01) & (p[ok] <= p_max)))
        two_sided += int(np.sum(p[ok] <= p_max))
        total += int(ok.sum())
    return signed / total, two_sided / total
