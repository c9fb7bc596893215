from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tcdet.scoring import (
    FusionParams,
    association_weights,
    class_distribution,
    conditioned_foreground,
    conditioned_score,
    conditioned_score_matrix,
    embedding,
    foreground_probability,
    fuse_scores,
    max_foreground,
    tracking_loss,
    tracking_loss_grad,
    uniform_distribution,
)

from oracles import conditioned_score_terms

P = FusionParams()


def _dist(rng, k):
    v = rng.random(k) + 1e-3
    return v / v.sum()


def _unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def test_defaults_are_the_reference_settings():
    assert (P.alpha, P.beta, P.gamma, P.eta, P.r_null) == (1.0, 0.99, 8.0, 0.8, 0.3)


@pytest.mark.parametrize("kw", [dict(alpha=-1), dict(beta=0), dict(beta=1.5), dict(gamma=0), dict(eta=0),
                                dict(num_classes=0), dict(nms_iou=1.0)])
def test_params_validated(kw):
    with pytest.raises(ValueError):
        FusionParams(**kw)


def test_class_distribution_validation():
    assert class_distribution([0.25, 0.75]).sum() == 1.0
    for bad in ([0.5, 0.6], [1.0], [-0.1, 1.1]):
        with pytest.raises(ValueError):
            class_distribution(bad)
    with pytest.raises(ValueError):
        class_distribution([0.5, 0.5], num_classes=2)


def test_embedding_normalizes_and_rejects_zero():
    assert np.allclose(embedding([3, 4]), [0.6, 0.8])
    with pytest.raises(ValueError):
        embedding([0, 0])


def test_weights_without_tracklets():
    assert association_weights(np.array([1.0, 0.0]), np.zeros((0, 2)), P).tolist() == [1.0]


def test_weights_single_perfect_tracklet():
    w = association_weights(np.array([1.0, 0.0]), np.array([[1.0, 0.0]]), P)
    z = math.exp(0.3) + math.exp(8.0)
    frozen = [0.000453, 0.999547]
    assert w == pytest.approx([math.exp(0.3) / z, math.exp(8.0) / z], abs=1e-12)
    assert w == pytest.approx(frozen, abs=1e-6)


def test_weights_symmetric_for_identical_tracklets():
    w = association_weights(np.array([0.6, 0.8]), np.array([[1.0, 0.0], [1.0, 0.0]]), P)
    assert w[1] == w[2]


def test_weights_dimension_mismatch():
    with pytest.raises(ValueError):
        association_weights(np.array([1.0, 0.0]), np.array([[1.0, 0.0, 0.0]]), P)


@given(st.integers(0, 2**32 - 1), st.integers(0, 8), st.integers(0, 7), st.floats(0.01, 0.5))
def test_weights_normalized_and_monotone(seed, m, j, bump):
    rng = np.random.default_rng(seed)
    d = 8
    box = _unit(rng, d)
    trk = np.array([_unit(rng, d) for _ in range(m)]).reshape(m, d)
    w = association_weights(box, trk, P)
    assert abs(w.sum() - 1.0) <= 1e-9
    assert np.all(w > 0)
    if m == 0:
        return
    j = j % m
    # raise cos(box, tracklet j) by pulling the tracklet toward the box
    cos = float(trk[j] @ box)
    if cos > 0.99:
        return
    ortho = trk[j] - cos * box
    ortho /= np.linalg.norm(ortho)
    new_cos = min(cos + bump, 1.0)
    moved = trk.copy()
    moved[j] = new_cos * box + math.sqrt(1 - new_cos**2) * ortho
    w2 = association_weights(box, moved, P)
    assert w2[j + 1] > w[j + 1]
    others = [k for k in range(m + 1) if k != j + 1]
    assert np.all(w2[others] < w[others])


def test_fuse_uniform_prior_is_identity(rng):
    for _ in range(50):
        p = _dist(rng, 31)
        assert np.max(np.abs(fuse_scores(p, uniform_distribution(30), 1.0) - p)) <= 1e-9


def test_fuse_alpha_zero_is_identity(rng):
    p, q = _dist(rng, 5), _dist(rng, 5)
    assert np.max(np.abs(fuse_scores(p, q, 0.0) - p)) <= 1e-9


def test_fuse_two_class_hand_value():
    frozen = [0.8, 0.2]
    assert fuse_scores(np.array([0.5, 0.5]), np.array([0.8, 0.2]), 1.0) == pytest.approx(frozen, abs=1e-12)


def test_fuse_floor_keeps_mass():
    out = fuse_scores(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 1.0)
    assert abs(out.sum() - 1.0) <= 1e-12 and np.all(np.isfinite(out))


def test_fuse_rejects_length_mismatch():
    with pytest.raises(ValueError):
        fuse_scores(np.array([0.5, 0.5]), np.array([0.2, 0.3, 0.5]), 1.0)


def test_conditioned_null_only_is_identity(rng):
    p = _dist(rng, 31)
    out = conditioned_score(p, [], [1.0], P)
    assert np.max(np.abs(out - p)) <= 1e-9


def test_conditioned_endpoint_equals_fusion(rng):
    p, q = _dist(rng, 31), _dist(rng, 31)
    out = conditioned_score(p, [q], [0.0, 1.0], P)
    assert np.max(np.abs(out - fuse_scores(p, q, 1.0))) <= 1e-12


def test_conditioned_matches_term_by_term_expansion():
    p_det = [0.5, 0.5]
    dists = [[0.9, 0.1], [0.2, 0.8]]
    w = [0.2, 0.5, 0.3]
    got = conditioned_score(np.array(p_det), np.array(dists), np.array(w), FusionParams(num_classes=1))
    assert got == pytest.approx(conditioned_score_terms(p_det, dists, w, 1.0), abs=1e-12)


def test_conditioned_rejects_bad_weight_length():
    with pytest.raises(ValueError):
        conditioned_score(np.array([0.5, 0.5]), [np.array([0.5, 0.5])], [1.0], P)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(0, 5), st.floats(0.0, 3.0))
def test_conditioned_matrix_is_valid_and_matches_oracle(seed, c, m, alpha):
    rng = np.random.default_rng(seed)
    k = c + 1
    n = 3
    params = FusionParams(alpha=alpha, num_classes=c)
    p_det = np.array([_dist(rng, k) for _ in range(n)])
    p_tr = np.array([_dist(rng, k) for _ in range(m)]).reshape(m, k)
    weights = np.array([_dist(rng, m + 1) for _ in range(n)])
    out = conditioned_score_matrix(p_det, p_tr, weights, params)
    assert np.all(out >= 0) and np.max(np.abs(out.sum(axis=1) - 1)) <= 1e-9
    for i in range(n):
        ref = conditioned_score_terms(p_det[i], p_tr, weights[i], alpha)
        assert np.max(np.abs(out[i] - ref)) <= 1e-9


def test_foreground_probability_values():
    assert foreground_probability(uniform_distribution(30)) == pytest.approx(30 / 31, abs=1e-12)
    assert foreground_probability(np.array([1.0, 0.0, 0.0])) == 0.0
    assert foreground_probability(np.array([0.25, 0.5, 0.25])) == 0.75


def test_max_foreground_scalar_and_batch():
    assert max_foreground(np.array([0.5, 0.2, 0.3])) == 0.3
    assert max_foreground(np.array([[0.5, 0.2, 0.3], [0.1, 0.8, 0.1]])).tolist() == [0.3, 0.8]


def test_conditioned_foreground_null_only_keeps_objectness():
    assert conditioned_foreground(0.3, [], [1.0], P) == pytest.approx(0.3, abs=1e-12)


def test_conditioned_foreground_pulls_toward_tracklet():
    out = conditioned_foreground(0.3, [0.95], [0.01, 0.99], P)
    assert out > 0.8


@pytest.mark.parametrize("cos,iou_,expected", [(1.0, 0.6, 0.0), (-0.2, 0.3, 0.0), (0.5, 0.4, 0.25),
                                               (0.5, 0.5, 0.25), (-1.0, 0.9, 4.0)])
def test_tracking_loss_values(cos, iou_, expected):
    assert tracking_loss(cos, iou_) == pytest.approx(expected, abs=1e-12)


@given(st.floats(-0.999, 0.999), st.floats(0.0, 1.0))
def test_tracking_loss_nonnegative_and_gradient(cos, iou_):
    assert tracking_loss(cos, iou_) >= 0
    if abs(cos) < 1e-3:
        return  # kink of max(0, cos) on the negative branch
    h = 1e-6
    fd = (tracking_loss(cos + h, iou_) - tracking_loss(cos - h, iou_)) / (2 * h)
    g = tracking_loss_grad(cos, iou_)
    assert abs(fd - g) <= 1e-5 * max(1.0, abs(g))
