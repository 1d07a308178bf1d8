import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igasa.core import CorrespondenceSet, PointCloud, RigidTransform, axis_angle_matrix
from igasa.errors import EmptyInput, InvalidProbability, InvalidRotation
from igasa.evaluation import (LossWeights, MetricThresholds, confidence_loss, correspondence_loss,
                              dense_loss, feature_matching_recall, infonce_loss, inlier_ratio,
                              keypoint_losses, keypoint_position_loss, matching_loss,
                              point_matching_loss, registration_passes, registration_recall,
                              rmse_under, rre, rte, total_loss)

from conftest import random_rotation
from oracles import quaternion_angle_deg


def ten_pair_fixture():
    """Source on a line, target equal to source except 7 pairs pushed 1.0 away."""
    src = np.column_stack([np.arange(10.0), np.zeros(10), np.zeros(10)])
    tar = src.copy()
    tar[3:, 1] += 1.0
    tar[0, 2] += 0.05
    tar[1, 2] += 0.09
    return PointCloud(src), PointCloud(tar), CorrespondenceSet(np.stack([np.arange(10)] * 2, axis=1))


# -------------------------------------------------------------- metrics

def test_rre_basic():
    R = axis_angle_matrix([0, 0, 1], 0.3)
    assert rre(R, R) == pytest.approx(0.0, abs=1e-6)
    assert rre(axis_angle_matrix([1, 0, 0], np.pi / 2), np.eye(3)) == pytest.approx(90.0, abs=1e-12)
    assert rre(axis_angle_matrix([1, 0, 0], np.pi), np.eye(3)) == pytest.approx(180.0, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_rre_matches_quaternion_angle(seed):
    r = np.random.default_rng(seed)
    A, B = random_rotation(r), random_rotation(r)
    e = rre(A, B)
    assert 0.0 <= e <= 180.0
    assert e == pytest.approx(rre(B, A), abs=1e-9)
    assert e == pytest.approx(quaternion_angle_deg(A, B), abs=1e-6)


def test_rre_rejects_non_rotation():
    with pytest.raises(InvalidRotation):
        rre(np.diag([1.0, 1.0, -1.0]), np.eye(3))


def test_rte():
    assert rte([3.0, 4.0, 0.0], [0.0, 0.0, 0.0]) == 5.0


def test_inlier_ratio_fixture():
    src, tar, c = ten_pair_fixture()
    assert inlier_ratio(c, src, tar, RigidTransform.identity(), 0.1) == pytest.approx(0.3, abs=1e-15)


def test_inlier_ratio_strict_radius():
    src = PointCloud([[0.0, 0, 0]])
    tar = PointCloud([[0.0, 0, 0.1]])
    c = CorrespondenceSet([[0, 0]])
    assert inlier_ratio(c, src, tar, RigidTransform.identity(), 0.1) == 0.0
    assert inlier_ratio(c, src, tar, RigidTransform.identity(), 0.1000001) == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_inlier_ratio_joint_rigid_invariance(seed):
    r = np.random.default_rng(seed)
    src = r.normal(size=(40, 3))
    T = RigidTransform(random_rotation(r), r.normal(size=3))
    tar = T.apply(src) + r.normal(size=(40, 3)) * 0.08
    c = CorrespondenceSet(np.stack([np.arange(40)] * 2, axis=1))
    g = RigidTransform(random_rotation(r), r.normal(size=3))
    T2 = RigidTransform(g.rotation @ T.rotation, g.rotation @ T.translation + g.translation)
    a = inlier_ratio(c, PointCloud(src), PointCloud(tar), T, 0.1)
    b = inlier_ratio(c, PointCloud(src), PointCloud(g.apply(tar)), T2, 0.1)
    assert a == b


def test_fmr_fixture():
    assert feature_matching_recall([0.02, 0.06, 0.5], 0.05) == pytest.approx(2 / 3, abs=1e-15)
    assert feature_matching_recall([0.05], 0.05) == 0.0


def test_registration_recall():
    th = MetricThresholds()
    res = [(1.0, 0.1)] * 7 + [(20.0, 0.1), (1.0, 0.5), (16.0, 0.4)]
    assert registration_recall(res, th) == pytest.approx(0.7)
    assert registration_passes(0.1, th) and not registration_passes(0.25, th)


def test_empty_inputs_raise():
    src, tar, _ = ten_pair_fixture()
    with pytest.raises(EmptyInput):
        inlier_ratio(CorrespondenceSet(np.zeros((0, 2), int)), src, tar, RigidTransform.identity())
    with pytest.raises(EmptyInput):
        feature_matching_recall([])
    with pytest.raises(EmptyInput):
        registration_recall([])


def test_rmse_under(rng):
    pts = rng.normal(size=(50, 3))
    T = RigidTransform.identity()
    assert rmse_under(T, T, pts) == 0.0
    assert rmse_under(RigidTransform(np.eye(3), [0.3, 0, 0]), T, pts) == pytest.approx(0.3)


# --------------------------------------------------------------- losses

def test_point_matching_loss_values():
    assert point_matching_loss([np.ones(4)], np.ones(4)) == 0.0
    assert point_matching_loss([np.array([math.exp(-1)])], np.array([1.0])) == pytest.approx(1.0, abs=1e-15)


def test_point_matching_loss_oracle(rng):
    layers = [rng.uniform(0.01, 1, 12) for _ in range(3)]
    w = rng.uniform(size=12)
    want = -sum(sum(wi * math.log(p) for wi, p in zip(w, P)) for P in layers) / 3
    assert point_matching_loss(layers, w) == pytest.approx(want, abs=1e-10)


def test_correspondence_loss_oracle(rng):
    P, om = rng.uniform(0.01, 1, 9), rng.uniform(size=9)
    ux, uy = rng.uniform(0, 0.99, 4), rng.uniform(0, 0.99, 5)
    base = -sum(o * math.log(p) for o, p in zip(om, P)) / sum(om)
    lx = -sum(math.log(1 - u) for u in ux) / 4
    ly = sum(math.log(1 - u) for u in uy) / 5
    assert correspondence_loss(P, om, ux, uy) == pytest.approx(base + lx + ly, abs=1e-10)
    assert correspondence_loss(P, om, ux, uy, sign="nll") == pytest.approx(base + lx - ly, abs=1e-10)
    assert correspondence_loss(np.ones(3), np.ones(3)) == 0.0


def test_matching_loss_combines(rng):
    layers = [rng.uniform(0.1, 1, 5) for _ in range(2)]
    om = rng.uniform(size=5)
    w = LossWeights(lambda_p=2.0, lambda_c=0.5)
    want = 2.0 * point_matching_loss(layers, om) + 0.5 * correspondence_loss(layers[-1], om)
    assert matching_loss(layers, om, weights=w) == pytest.approx(want, abs=1e-14)


def test_invalid_probability():
    with pytest.raises(InvalidProbability):
        point_matching_loss([np.array([1.2])], np.ones(1))
    with pytest.raises(InvalidProbability):
        confidence_loss(np.array([-0.1]), np.array([1.0]))
    with pytest.raises(ValueError):
        correspondence_loss(np.ones(1), np.ones(1), sign="other")


def test_infonce_no_negatives_is_zero(rng):
    A = rng.normal(size=(4, 6))
    assert infonce_loss(A, rng.normal(size=(4, 6)), [np.zeros((0, 6))] * 4, np.eye(6)) == 0.0


def test_infonce_oracle(rng):
    d = 5
    A, P = rng.normal(size=(3, d)), rng.normal(size=(3, d))
    negs = [rng.normal(size=(k, d)) for k in (1, 4, 2)]
    W = rng.normal(size=(d, d))
    want = 0.0
    for a, p, N in zip(A, P, negs):
        sp = float(a @ W @ p)
        sn = [float(a @ W @ n) for n in N]
        want += -math.log(math.exp(sp) / (math.exp(sp) + sum(math.exp(s) for s in sn)))
    assert infonce_loss(A, P, negs, W) == pytest.approx(want / 3, abs=1e-10)


def test_keypoint_position_loss(rng):
    T = RigidTransform(random_rotation(rng), rng.normal(size=3))
    x = rng.normal(size=(10, 3))
    assert keypoint_position_loss(x, T.apply(x), T) == pytest.approx(0.0, abs=1e-25)
    y = rng.normal(size=(10, 3))
    want = sum(float(np.sum((T.rotation @ a + T.translation - b) ** 2)) for a, b in zip(x, y)) / 10
    assert keypoint_position_loss(x, y, T) == pytest.approx(want, abs=1e-10)


def test_confidence_loss_half():
    assert confidence_loss(np.array([0.5]), np.array([1.0])) == pytest.approx(math.log(2), abs=1e-12)


def test_keypoint_losses_labels(rng):
    T = RigidTransform.identity()
    x = rng.normal(size=(4, 3))
    y = x.copy()
    y[2:] += 1.0
    conf = np.array([0.9, 0.8, 0.3, 0.1])
    A = rng.normal(size=(4, 3))
    got = keypoint_losses(A, A, [np.zeros((0, 3))] * 4, np.eye(3), x, y, conf, T, 0.5)
    want = keypoint_position_loss(x, y, T) + confidence_loss(conf, np.array([1.0, 1, 0, 0]))
    assert got == pytest.approx(want, abs=1e-12)


def test_dense_loss():
    I = RigidTransform.identity()
    assert dense_loss(I, I) == 0.0
    assert dense_loss(RigidTransform(np.eye(3), [1.0, 0, 0]), I) == pytest.approx(1.0)
    assert dense_loss(RigidTransform(axis_angle_matrix([0, 0, 1], np.pi), [0, 0, 0]), I) == pytest.approx(8.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_dense_loss_trace_identity(seed):
    r = np.random.default_rng(seed)
    A, B = random_rotation(r), random_rotation(r)
    got = dense_loss(RigidTransform(A, np.zeros(3)), RigidTransform(B, np.zeros(3)), 1.0, 1.0)
    assert got == pytest.approx(6 - 2 * np.trace(A.T @ B), abs=1e-10)


def test_total_loss():
    assert total_loss(1.0, 2.0, 3.0) == 6.0
