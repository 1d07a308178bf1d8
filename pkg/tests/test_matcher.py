import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igasa.core import CorrespondenceSet, PointCloud, RigidTransform
from igasa.errors import DimensionMismatch, EmptyInput
from igasa.matcher import MatchConfig, consistency_scores, nn_match, superpoint_match, topk_filter

from conftest import random_rotation


def brute_nn(A, B):
    out = []
    for a in A.tolist():
        best, arg = math.inf, -1
        for k, b in enumerate(B.tolist()):
            d = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
            if d < best:
                best, arg = d, k
        out.append(arg)
    return out


def test_self_match(rng):
    F = rng.normal(size=(30, 8))
    c = nn_match(F, F)
    assert np.array_equal(c.pairs, np.stack([np.arange(30)] * 2, axis=1))


def test_single_target():
    c = nn_match(np.random.default_rng(0).normal(size=(7, 3)), np.zeros((1, 3)))
    assert np.all(c.target == 0) and len(c) == 7


def test_matches_brute_force(rng):
    A, B = rng.normal(size=(50, 16)), rng.normal(size=(50, 16))
    assert nn_match(A, B).target.tolist() == brute_nn(A, B)


def test_ties_go_to_smallest_index():
    B = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]])
    assert nn_match(np.zeros((1, 2)), B).target.tolist() == [0]


def test_match_errors():
    with pytest.raises(DimensionMismatch):
        nn_match(np.zeros((2, 3)), np.zeros((2, 4)))
    with pytest.raises(EmptyInput):
        nn_match(np.zeros((2, 3)), np.zeros((0, 3)))


def test_mutual_check(rng):
    A = rng.normal(size=(40, 4))
    B = np.concatenate([A[:20] + 1e-3, rng.normal(size=(5, 4))])
    c = nn_match(A, B, mutual=True)
    back = nn_match(B, A)
    for s, t in c.pairs:
        assert back.target[t] == s


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_nn_invariant_under_joint_isometry(seed):
    r = np.random.default_rng(seed)
    A, B = r.normal(size=(20, 3)), r.normal(size=(25, 3))
    Q = random_rotation(r)
    shift = r.normal(size=3)
    assert np.array_equal(nn_match(A, B).pairs, nn_match(A @ Q.T + shift, B @ Q.T + shift).pairs)


# ---------------------------------------------------------------- scores

def test_zero_residual_scores_one():
    pts = PointCloud(np.random.default_rng(1).normal(size=(5, 3)))
    c = CorrespondenceSet(np.stack([np.arange(5)] * 2, axis=1))
    assert np.all(consistency_scores(c, pts, pts, MatchConfig(sigma_score=0.1)) == 1.0)


def test_residual_sigma_scores_exp_minus_one():
    src = PointCloud([[0.0, 0, 0]])
    tar = PointCloud([[0.0, 0.3, 0.4]])
    s = consistency_scores(CorrespondenceSet([[0, 0]]), src, tar, MatchConfig(sigma_score=0.5))
    assert s[0] == pytest.approx(math.exp(-1), abs=1e-12)


def test_scores_match_scalar_oracle(rng):
    src, tar = PointCloud(rng.normal(size=(20, 3))), PointCloud(rng.normal(size=(20, 3)))
    c = CorrespondenceSet(np.stack([np.arange(20), rng.permutation(20)], axis=1))
    T = RigidTransform(random_rotation(rng), rng.normal(size=3))
    cfg = MatchConfig(sigma_score=0.9, initial_transform=T)
    got = consistency_scores(c, src, tar, cfg)
    for (i, j), g in zip(c.pairs, got):
        p = T.rotation @ src.points[i] + T.translation - tar.points[j]
        assert g == pytest.approx(math.exp(-float(p @ p) / 0.81), abs=1e-12)


def test_scores_strictly_decrease_with_residual():
    r = np.linspace(0, 2, 50)
    src = PointCloud(np.zeros((50, 3)))
    tar = PointCloud(np.stack([r, np.zeros(50), np.zeros(50)], axis=1))
    c = CorrespondenceSet(np.stack([np.arange(50)] * 2, axis=1))
    s = consistency_scores(c, src, tar, MatchConfig(sigma_score=1.0))
    assert np.all(np.diff(s) < 0)
    assert np.all((s > 0) & (s <= 1))


# ----------------------------------------------------------------- top-k

def _pairs(n):
    return CorrespondenceSet(np.stack([np.arange(n), np.arange(n)[::-1]], axis=1))


def test_topk_all_sorted():
    c = _pairs(4)
    out = topk_filter(c, np.array([0.1, 0.9, 0.5, 0.7]), 10)
    assert out.source.tolist() == [1, 3, 2, 0]
    assert out.scores.tolist() == [0.9, 0.7, 0.5, 0.1]


def test_topk_single_best():
    out = topk_filter(_pairs(4), np.array([0.1, 0.9, 0.5, 0.7]), 1)
    assert out.source.tolist() == [1]


def test_topk_stable_ties():
    out = topk_filter(_pairs(5), np.array([0.5, 0.8, 0.5, 0.8, 0.5]), 4)
    assert out.source.tolist() == [1, 3, 0, 2]


def test_topk_matches_full_sort(rng):
    scores = rng.uniform(size=100)
    out = topk_filter(_pairs(100), scores, 25)
    oracle = sorted(range(100), key=lambda i: (-scores[i], i))[:25]
    assert out.source.tolist() == oracle


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.integers(1, 70))
def test_topk_separates_kept_and_dropped(scores, k):
    scores = np.array(scores)
    out = topk_filter(_pairs(len(scores)), scores, k)
    assert len(out) == min(k, len(scores))
    assert np.all(np.diff(out.scores) <= 0)
    dropped = np.setdiff1d(np.arange(len(scores)), out.source)
    if dropped.size:
        assert out.scores.min() >= scores[dropped].max()


def test_default_k():
    assert MatchConfig().resolve_k(10) == 32
    assert MatchConfig().resolve_k(1000) == 250
    assert MatchConfig(k=7).resolve_k(1000) == 7


def test_superpoint_match_unweighted_svd_init(rng):
    pts = rng.uniform(size=(60, 3))
    R = random_rotation(rng)
    tar = PointCloud(pts @ R.T + 0.5)
    F = rng.normal(size=(60, 8))
    cfg = MatchConfig(k=10, sigma_score=0.1, tinit="unweighted-svd")
    out = superpoint_match(F, F, PointCloud(pts), tar, cfg)
    assert len(out) == 10
    np.testing.assert_allclose(out.scores, 1.0, atol=1e-9)
