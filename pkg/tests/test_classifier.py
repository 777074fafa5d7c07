import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dxann import numeric as nm
from dxann.classifier import (
    LatentHeads,
    dxann_loss,
    ecs_batch,
    ecs_normalize,
    ecs_raw,
    gaussian_logpdf,
    localization,
    predict,
    predict_latent,
    realnvp_loss,
)
from dxann.errors import ContractError, DimensionError
from dxann.flow import FlowModel, couple_forward, make_flow, make_mask

from test_flow import forced_block

finite = st.floats(-50, 50, allow_nan=False)


def identity_flow(dim):
    return make_flow(dim=dim, n_blocks=2, hidden=(4,))


def test_gaussian_logpdf_values():
    assert gaussian_logpdf([0.3, -2.0], [0.3, -2.0]) == pytest.approx(-1.837877, abs=1e-6)
    assert gaussian_logpdf([1.0], [0.0]) == pytest.approx(-1.418939, abs=1e-6)
    z = np.array([1.0, 2.0, 2.0, 1.0])          # squared norm 10
    assert gaussian_logpdf(z, np.zeros(4)) == pytest.approx(-8.675754, abs=1e-6)
    with pytest.raises(DimensionError):
        gaussian_logpdf(np.zeros(3), np.zeros(2))


@given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite))
def test_gaussian_logpdf_peak(z, mu):
    peak = -2.5 * math.log(2 * math.pi)
    val = gaussian_logpdf(z, mu)
    assert val <= peak
    if np.array_equal(z, mu):
        assert val == peak
    elif np.sum((z - mu) ** 2) > 1e-12:
        assert val < peak


def test_realnvp_loss():
    mu = np.array([1.0, -1.0])
    assert realnvp_loss(mu, 0.0, mu) == pytest.approx(1.837877, abs=1e-6)
    z = np.array([0.2, 0.4])
    assert realnvp_loss(z, 0.0, mu) - realnvp_loss(z, 0.75, mu) == pytest.approx(0.75, abs=1e-15)


def test_realnvp_loss_on_handcrafted_block_matches_scalar_oracle():
    block = forced_block(make_mask("alternating", 2), [0.0, 0.4], [0.0, -1.5])
    x = (0.7, 2.0)
    z, ld = couple_forward(np.array(x), block)
    # by hand: second coordinate scaled by e^0.4 and shifted by -1.5
    z2 = x[1] * math.exp(0.4) - 1.5
    mu = (0.5, 0.5)
    expected = math.log(2 * math.pi) + 0.5 * ((x[0] - mu[0]) ** 2 + (z2 - mu[1]) ** 2) - 0.4
    assert realnvp_loss(z, ld, np.array(mu)) == pytest.approx(expected, rel=1e-13)


def test_heads_construction():
    h = LatentHeads.symmetric(3, c=2.0)
    np.testing.assert_array_equal(h.mu0, [-2, -2, -2])
    np.testing.assert_array_equal(h.mu1, [2, 2, 2])
    with pytest.raises(ContractError):
        LatentHeads(np.ones(2), np.ones(2))
    with pytest.raises(ContractError):
        LatentHeads.symmetric(2, c=0.0)


def test_dxann_loss_single_sample_at_class_mean():
    h = LatentHeads.symmetric(2)
    assert dxann_loss(h.mu1[None], [1], [0.0], h) == pytest.approx(1.837877, abs=1e-6)


def test_dxann_loss_mixed_batch_matches_scalar_oracle():
    mask = make_mask("alternating", 2)
    model = FlowModel([forced_block(mask, [0.0, 0.3], [0.0, 1.0]),
                       forced_block(mask.complement(), [-0.2, 0.0], [0.5, 0.0])], 2)
    xs = np.array([[0.1, -0.4], [1.2, 0.9]])
    labels = [0, 1]
    h = LatentHeads.symmetric(2, c=1.0)
    z, ld = model.transform(xs)
    total = 0.0
    for (a, b), y in zip(xs, labels):
        b1 = b * math.exp(0.3) + 1.0
        a1 = a * math.exp(-0.2) + 0.5
        m = 1.0 if y == 1 else -1.0
        total += math.log(2 * math.pi) + 0.5 * ((a1 - m) ** 2 + (b1 - m) ** 2) - (0.3 - 0.2)
    assert dxann_loss(z, labels, ld, h) == pytest.approx(total / 2, rel=1e-13)


@pytest.mark.parametrize("label", [0, 1])
def test_dxann_loss_uniform_labels_equals_mean_realnvp_exactly(label):
    rng = np.random.default_rng(label)
    h = LatentHeads.symmetric(6, c=1.3)
    z = rng.standard_normal((9, 6))
    ld = rng.standard_normal(9)
    per = np.array([realnvp_loss(zi, li, h.mean(label)) for zi, li in zip(z, ld)])
    assert dxann_loss(z, [label] * 9, ld, h) == np.sum(per) * (1.0 / 9)


def test_dxann_loss_contract_errors():
    h = LatentHeads.symmetric(2)
    with pytest.raises(ContractError):
        dxann_loss(np.zeros((0, 2)), [], [], h)
    with pytest.raises(ContractError):
        dxann_loss(np.zeros((1, 2)), [2], [0.0], h)
    with pytest.raises(DimensionError):
        dxann_loss(np.zeros((2, 2)), [0], [0.0, 0.0], h)


def test_dxann_loss_order_invariant():
    rng = np.random.default_rng(7)
    h = LatentHeads.symmetric(4)
    z, y, ld = rng.standard_normal((12, 4)), rng.integers(0, 2, 12), rng.standard_normal(12)
    perm = rng.permutation(12)
    assert dxann_loss(z[perm], y[perm], ld[perm], h) == pytest.approx(dxann_loss(z, y, ld, h), rel=1e-14)


def test_dxann_loss_tensor_path_returns_differentiable_scalar():
    h = LatentHeads.symmetric(2)
    z = nm.Parameter(np.array([[0.5, -0.5]]), "z")
    loss = dxann_loss(z, [1], np.array([0.0]), h)
    nm.gradient(loss, [z])
    np.testing.assert_allclose(z.grad, [[-0.5, -1.5]])


def test_learnable_heads_receive_gradients():
    h = LatentHeads.symmetric(2, learnable=True)
    loss = dxann_loss(np.array([[0.0, 0.0], [2.0, 2.0]]), [0, 1], np.zeros(2), h)
    nm.gradient(loss, h.parameters())
    mu0, mu1 = h.parameters()
    np.testing.assert_allclose(mu0.grad, [-0.5, -0.5])
    np.testing.assert_allclose(mu1.grad, [-0.5, -0.5])


def test_predict_examples():
    h = LatentHeads.symmetric(3)
    model = identity_flow(3)
    p = predict(h.mu0, model, h)
    assert p.label == 0 and p.logp0 > p.logp1
    assert predict((h.mu0 + h.mu1) / 2, model, h).label == 0
    assert predict(h.mu1 + 0.1 * (h.mu1 - h.mu0), model, h).label == 1


@settings(max_examples=300)
@given(arrays(np.float64, 4, elements=finite), st.floats(0.1, 5))
def test_prediction_is_nearest_mean(z, c):
    h = LatentHeads.symmetric(4, c)
    p = predict_latent(z, h)
    d0, d1 = np.sum((z - h.mu0) ** 2), np.sum((z - h.mu1) ** 2)
    assert p.label == (1 if d1 < d0 else 0)
    if p.logp1 != p.logp0:
        assert p.label == int(p.logp1 > p.logp0)


def test_ecs_examples():
    h = LatentHeads(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    model = identity_flow(2)
    ecs = ecs_raw(h.mu1, model, h)
    assert ecs.label == 1
    np.testing.assert_array_equal(ecs.raw, 0.0)
    ecs = ecs_raw(np.array([1.0, 3.0]), model, h)
    assert ecs.label == 1
    np.testing.assert_array_equal(ecs.raw, [0.0, 2.0])
    np.testing.assert_array_equal(ecs.normalized, [0.0, 1.0])


def test_ecs_normalize():
    np.testing.assert_array_equal(ecs_normalize([0.0, 2.0, 4.0]), [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(ecs_normalize([3.0, 3.0, 3.0]), 0.0)
    u = np.array([0.0, 0.25, 1.0, 0.6])
    np.testing.assert_array_equal(ecs_normalize(u), u)
    with pytest.raises(ContractError):
        ecs_normalize([1.0, -0.1])


@given(arrays(np.float64, 6, elements=st.floats(0, 1e3)))
def test_ecs_normalize_range(raw):
    u = ecs_normalize(raw)
    assert np.all((u >= 0) & (u <= 1))
    assert u.max() == (1.0 if raw.max() > raw.min() else 0.0)


@settings(max_examples=200)
@given(arrays(np.float64, 3, elements=finite))
def test_ecs_zero_iff_at_predicted_mean(x):
    h = LatentHeads.symmetric(3)
    ecs = ecs_raw(x, identity_flow(3), h)
    at_mean = np.array_equal(x, h.mean(ecs.label))
    assert (not np.any(ecs.raw)) == at_mean


def test_ecs_monotone_in_distance():
    h = LatentHeads.symmetric(3)
    model = identity_flow(3)
    x = h.mu1 + np.array([0.2, -0.1, 0.3])
    base = ecs_raw(x, model, h)
    x2 = x.copy()
    x2[2] += 0.5
    moved = ecs_raw(x2, model, h)
    assert moved.label == base.label == 1
    assert moved.raw[2] > base.raw[2]
    assert predict(x2, model, h).logp1 < predict(x, model, h).logp1


def test_ecs_batch_matches_single():
    rng = np.random.default_rng(0)
    h = LatentHeads.symmetric(4)
    model = make_flow(dim=4, n_blocks=2, hidden=(8,))
    for p in model.parameters():
        p.data[...] = 0.3 * rng.standard_normal(p.shape)
    xs = rng.standard_normal((5, 4))
    raw, labels = ecs_batch(xs, model, h)
    for x, r, lab in zip(xs, raw, labels):
        e = ecs_raw(x, model, h)
        assert e.label == lab
        np.testing.assert_allclose(e.raw, r, rtol=1e-14)


def pairwise_auc(s, m):
    """O(n^2) oracle: fraction of (inside, outside) pairs ordered correctly."""
    pos, neg = s[m], s[~m]
    return np.mean([(p > q) + 0.5 * (p == q) for p in pos for q in neg])


@given(arrays(np.float64, 12, elements=st.sampled_from([0.0, 0.25, 0.5, 1.0])),
       arrays(np.bool_, 12))
def test_localization_auc_matches_pairwise_oracle(s, m):
    if m.all() or not m.any():
        with pytest.raises(ContractError):
            localization(s, m)
        return
    inside, outside, auc = localization(s, m)
    assert auc == pytest.approx(pairwise_auc(s, m), abs=1e-12)
    assert inside == pytest.approx(s[m].mean()) and outside == pytest.approx(s[~m].mean())


def test_localization_extremes():
    m = np.array([1, 1, 0, 0, 0])
    assert localization([0.9, 1.0, 0.0, 0.1, 0.2], m)[2] == 1.0
    assert localization([0.0, 0.1, 0.5, 0.6, 0.7], m)[2] == 0.0
    assert localization(np.zeros(5), m)[2] == 0.5
    with pytest.raises(DimensionError):
        localization(np.zeros(4), m)
