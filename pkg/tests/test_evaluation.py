import csv
import math
import warnings

import numpy as np
import pytest

import oracles
from conftest import random_feature_set
from homofuse.candidates import CandidateSet, build_candidates
from homofuse.errors import DataError
from homofuse.evaluation import (
    Criterion,
    label_correct_overlap,
    label_correct_pixel,
    label_pair,
    mds_embed,
    overlap_error,
    precision_recall,
    rank_entries,
    select_per_feature,
    total_correct_possible,
    write_embedding_csv,
)
from homofuse.feature_io import FeatureSet, SceneGroundTruth

I3 = np.eye(3)


def toy_cands(p_of, q_ids):
    """Candidate set with explicit p-index / q-id columns; geometry irrelevant."""
    n_p = max(p_of) + 1
    fp = FeatureSet(np.arange(n_p), np.zeros((n_p, 2)), np.tile(np.eye(2), (n_p, 1, 1)))
    uq = sorted(set(q_ids))
    fq = FeatureSet(uq, np.zeros((len(uq), 2)), np.tile(np.eye(2), (len(uq), 1, 1)))
    qi = [uq.index(q) for q in q_ids]
    order = np.lexsort((qi, p_of))
    return CandidateSet(fp, fq, np.array(p_of)[order], np.array(qi)[order],
                        [("A",)] * len(p_of), [{}] * len(p_of)), order


def test_select_argmax_ties_and_singletons():
    cands, order = toy_cands([0, 0, 0, 1, 2, 2], [10, 11, 12, 10, 12, 11])
    raw = np.array([0.2, 0.9, -0.1, -5.0, 0.3, 0.3])
    scores = raw[order]
    picked = select_per_feature(cands, scores)
    got = {int(cands.p_index[k]): int(cands.q_ids[k]) for k in picked}
    assert got == {0: 11, 1: 10, 2: 11}


def test_rank_descending_ties_by_p_id():
    cands, order = toy_cands([0, 1, 2, 3], [10, 10, 10, 10])
    scores = np.array([0.5, 0.7, 0.5, 0.1])[order]
    entries = rank_entries(cands, np.arange(4), scores)
    assert [e.p_id for e in entries] == [1, 0, 2, 3]


def gt_two_objects(tol=8.0):
    return SceneGroundTruth({1: 1, 2: 1, 3: 2, 4: -1}, {1: I3, 2: I3}, tol)


def test_pixel_label_examples():
    gt = gt_two_objects()
    assert label_correct_pixel(1, 2, (5, 5), (5, 5), gt)
    assert label_correct_pixel(1, 2, (0, 0), (8.0, 0), gt)
    assert not label_correct_pixel(1, 2, (0, 0), (8.01, 0), gt)
    assert not label_correct_pixel(1, 3, (5, 5), (5, 5), gt)   # other object
    assert not label_correct_pixel(4, 4, (5, 5), (5, 5), gt)   # background
    shifted = SceneGroundTruth({1: 1, 2: 1}, {1: [[1, 0, 3], [0, 1, 4], [0, 0, 1]]}, 5.0)
    assert label_correct_pixel(1, 2, (0, 0), (0, 0), shifted)
    assert not label_correct_pixel(1, 2, (0, 0), (0, 0), SceneGroundTruth(
        {1: 1, 2: 1}, {1: [[1, 0, 3], [0, 1, 4.01], [0, 0, 1]]}, 5.0))


def test_overlap_examples():
    e = np.eye(2)
    assert overlap_error(e, (0, 0), e, (0, 0)) == 0.0
    assert overlap_error(e, (0, 0), e, (5, 0)) == 1.0
    lens = 2 * math.pi / 3 - math.sqrt(3) / 2        # intersection of unit circles 1 apart
    closed = 1 - lens / (2 * math.pi - lens)
    err = overlap_error(e, (0, 0), e, (1, 0))
    assert abs(err - closed) < 0.005
    gt = SceneGroundTruth({1: 1, 2: 1}, {1: I3})
    assert label_correct_overlap(1, 2, (0, 0), e, (0, 0), e, gt)
    assert not label_correct_overlap(1, 2, (0, 0), e, (5, 0), e, gt)
    assert not label_correct_overlap(1, 2, (0, 0), e, (1, 0), e, gt)


def test_overlap_of_scaled_concentric_ellipses():
    # area ratio 1/4 -> overlap error 3/4, independent of orientation
    a = np.array([[3.0, 1.0], [0.0, 2.0]])
    assert abs(overlap_error(a, (2, 1), 2 * a, (2, 1)) - 0.75) < 0.005


def test_pr_reference_case():
    labels = [1, 0, 1, 1]          # nTP 3, nFP 1; total 5 -> nFN 2
    curve, _ = precision_recall(labels, 5)
    assert curve[-1] == (0.6, 0.75)


def test_ap_examples():
    assert precision_recall([1, 1, 1], 3)[1] == 1.0
    assert precision_recall([1, 0, 1], 2)[1] == 5 / 6
    assert round(precision_recall([1, 0, 1], 2)[1], 4) == 0.8333


def test_ap_matches_all_threshold_enumeration():
    rng = np.random.default_rng(21)
    for _ in range(500):
        n = int(rng.integers(1, 31))
        labels = (rng.random(n) < rng.uniform(0.1, 0.9)).astype(int).tolist()
        total = sum(labels) + int(rng.integers(0 if sum(labels) else 1, 6))
        curve, ap = precision_recall(labels, total)
        exact = [(float(r), float(p)) for r, p in oracles.pr_at_depths(labels, total)]
        assert curve == exact
        assert ap == float(oracles.ap_all_thresholds(labels, total))


def test_pr_errors():
    with pytest.raises(DataError):
        precision_recall([1, 0], 0)
    with pytest.raises(DataError):
        precision_recall([1, 1, 1], 2)


def brute_total(fp, fq, gt, tol):
    count = 0
    for i in range(len(fp)):
        obj = gt.object_of(fp.ids[i])
        if obj == -1:
            continue
        h = gt.object_transforms[obj]
        tx = h[0, 0] * fp.centers[i, 0] + h[0, 1] * fp.centers[i, 1] + h[0, 2]
        ty = h[1, 0] * fp.centers[i, 0] + h[1, 1] * fp.centers[i, 1] + h[1, 2]
        if any(gt.object_of(fq.ids[j]) == obj
               and math.hypot(fq.centers[j, 0] - tx, fq.centers[j, 1] - ty) <= tol
               for j in range(len(fq))):
            count += 1
    return count


def test_total_correct_possible_matches_scan(rng):
    fp = random_feature_set(rng, 60, extent=60)
    fq = random_feature_set(rng, 60, id_offset=60, extent=60)
    h = np.array([[1.0, 0.1, 2.0], [-0.1, 1.0, -3.0], [0, 0, 1]])
    assign = {int(i): int(rng.integers(-1, 3)) or 1 for i in np.r_[fp.ids, fq.ids]}
    gt = SceneGroundTruth(assign, {1: h, 2: I3})
    for tol in (2.0, 5.0, 8.0):
        assert total_correct_possible(fp, fq, gt, Criterion("pixel", tol)) == brute_total(fp, fq, gt, tol)


def test_total_correct_overlap_matches_scan(rng):
    fp = random_feature_set(rng, 25, extent=15)
    fq = random_feature_set(rng, 25, id_offset=25, extent=15)
    gt = SceneGroundTruth({int(i): 1 for i in np.r_[fp.ids, fq.ids]}, {1: I3})
    crit = Criterion("overlap", samples=2500)
    brute = sum(any(label_pair(fp, fq, p, q, gt, crit) for q in range(len(fq))) for p in range(len(fp)))
    assert total_correct_possible(fp, fq, gt, crit) == brute


def test_labels_ignore_source_tags(rng):
    descs = (("A", 3), ("B", 3))
    fp = random_feature_set(rng, 30, descs, extent=30)
    fq = random_feature_set(rng, 30, descs, id_offset=30, extent=30)
    gt = SceneGroundTruth({int(i): 1 for i in np.r_[fp.ids, fq.ids]}, {1: I3}, 6.0)
    only_a = build_candidates(fp.subset(["A"]), fq.subset(["A"]), 3)
    both = build_candidates(fp, fq, 3)
    crit = Criterion()
    lab_a = {(p, q): label_pair(fp, fq, p, q, gt, crit) for p, q in only_a.pair_set()}
    lab_both = {(p, q): label_pair(fp, fq, p, q, gt, crit) for p, q in both.pair_set()}
    assert all(lab_both[k] == v for k, v in lab_a.items())


def test_mds_planar_recovery():
    rng = np.random.default_rng(22)
    for _ in range(50):
        pts = rng.uniform(-100, 100, (int(rng.integers(3, 40)), 2))
        d = oracles.pairwise(pts)
        x = mds_embed(d)
        np.testing.assert_allclose(oracles.pairwise(x), d, rtol=0, atol=1e-6)


def test_mds_small_configurations():
    x = mds_embed(np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0.0]]))
    np.testing.assert_allclose(oracles.pairwise(x), 1 - np.eye(3), atol=1e-6)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        two = mds_embed(np.array([[0, 3.5], [3.5, 0]]))
        assert abs(np.linalg.norm(two[0] - two[1]) - 3.5) < 1e-9
        zero = mds_embed(np.zeros((4, 4)))
    assert np.all(zero == 0)


def test_mds_warns_and_handles_inf():
    with pytest.warns(RuntimeWarning):
        mds_embed(np.zeros((3, 3)))
    d = np.array([[0, 1, np.inf], [1, 0, np.inf], [np.inf, np.inf, 0]])
    x = mds_embed(d)
    assert np.all(np.isfinite(x))
    np.testing.assert_allclose(oracles.pairwise(x)[0, 2], 2.0, atol=1e-6)


def test_mds_sign_convention():
    rng = np.random.default_rng(23)
    pts = rng.normal(size=(10, 2))
    a = mds_embed(oracles.pairwise(pts))
    b = mds_embed(oracles.pairwise(pts * [-1, 1]))
    np.testing.assert_allclose(a, b, atol=1e-9)
    for axis in range(2):
        col = a[:, axis]
        assert col[np.flatnonzero(np.abs(col) > 1e-9)[0]] > 0


def test_embedding_csv(tmp_path):
    path = tmp_path / "e.csv"
    write_embedding_csv(path, np.array([[0.5, -1.0], [2.0, 3.0]]), ["A", "A+B"], [1, -1])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["corr_id", "x", "y", "source_tags", "correct"]
    assert rows[1:] == [["0", "0.5", "-1.0", "A", "1"], ["1", "2.0", "3.0", "A+B", "-1"]]
