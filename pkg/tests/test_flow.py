import numpy as np
import pytest

from tryonsplat.flow import FlowBank, flow_regularizer, warp, warp_backward

from helpers import check_grad, sample_indices


def rand_image(rng, h=9, w=11):
    return rng.uniform(0.0, 1.0, size=(h, w, 3))


def test_zero_flow_is_bitwise_identity():
    rng = np.random.default_rng(0)
    img = rand_image(rng)
    out = warp(img, np.zeros((9, 11, 2)))
    assert np.array_equal(out, img)


def test_unit_shift_with_border_clamp():
    rng = np.random.default_rng(1)
    img = rand_image(rng)
    flow = np.zeros((9, 11, 2))
    flow[..., 0] = 1.0
    out = warp(img, flow)
    # integer-shift oracle with clamp on the trailing column
    expect = np.concatenate([img[:, 1:], img[:, -1:]], axis=1)
    assert np.allclose(out, expect, atol=1e-15)


def test_half_pixel_shift_interpolates_midpoint():
    img = np.zeros((3, 2, 3))
    img[:, 0] = 0.2
    img[:, 1] = 0.8
    flow = np.zeros((3, 2, 2))
    flow[..., 0] = 0.5
    out = warp(img, flow)
    assert np.allclose(out[:, 0], 0.5, atol=1e-15)  # midpoint of 0.2 and 0.8
    assert np.allclose(out[:, 1], 0.8, atol=1e-15)  # clamped


def test_warp_shape_mismatch_errors():
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError):
        warp(rand_image(rng), np.zeros((4, 4, 2)))
    with pytest.raises(ValueError):
        warp_backward(rand_image(rng), np.zeros((9, 11, 2)),
                      np.zeros((4, 4, 3)))


def test_warp_backward_requires_forward_inputs():
    with pytest.raises(ValueError):
        warp_backward(None, None, np.zeros((3, 3, 3)))


def test_zero_flow_backward_closed_form():
    rng = np.random.default_rng(3)
    img = rand_image(rng)
    H, W = img.shape[:2]
    flow = np.zeros((H, W, 2))
    d_img, d_flow = warp_backward(img, flow, np.ones_like(img))
    # L = sum(out): image gradient is all ones
    assert np.array_equal(d_img, np.ones_like(img))
    # flow gradient is the forward-difference spatial gradient (summed over
    # channels), zero on the trailing edge where both samples coincide
    gx = np.zeros((H, W))
    gx[:, :-1] = (img[:, 1:] - img[:, :-1]).sum(axis=2)
    gy = np.zeros((H, W))
    gy[:-1, :] = (img[1:, :] - img[:-1, :]).sum(axis=2)
    assert np.allclose(d_flow[..., 0], gx, atol=1e-14)
    assert np.allclose(d_flow[..., 1], gy, atol=1e-14)


def test_warp_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    img = rand_image(rng, 7, 8)
    flow = rng.uniform(0.1, 0.4, size=(7, 8, 2))  # off-grid, away from kinks
    wmat = rng.normal(size=img.shape)

    def loss():
        return float(np.sum(warp(img, flow) * wmat))

    d_img, d_flow = warp_backward(img, flow, wmat)
    check_grad(loss, flow, d_flow,
               indices=sample_indices(rng, flow.shape, 30))
    check_grad(loss, img, d_img,
               indices=sample_indices(rng, img.shape, 30))


def test_warp_linear_in_image():
    rng = np.random.default_rng(5)
    i1, i2 = rand_image(rng), rand_image(rng)
    flow = rng.uniform(-1.5, 1.5, size=(9, 11, 2))
    lhs = warp(0.3 * i1 + 0.6 * i2, flow)
    rhs = 0.3 * warp(i1, flow) + 0.6 * warp(i2, flow)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_constant_image_has_zero_flow_gradient():
    img = np.full((6, 6, 3), 0.42)
    flow = np.random.default_rng(6).uniform(-1, 1, size=(6, 6, 2))
    _, d_flow = warp_backward(img, flow, np.ones_like(img))
    assert np.array_equal(d_flow, np.zeros_like(d_flow))


def test_regularizer_zero_flow():
    value, grad = flow_regularizer(np.zeros((5, 5, 2)))
    assert value == 0.0
    assert np.array_equal(grad, np.zeros((5, 5, 2)))


def test_regularizer_constant_flow_is_pure_magnitude():
    flow = np.zeros((4, 6, 2))
    flow[..., 0] = 1.5
    flow[..., 1] = -0.5
    value, _ = flow_regularizer(flow, lam_tv=0.7, lam_mag=0.3)
    assert np.isclose(value, 0.3 * (1.5 ** 2 + 0.5 ** 2), atol=1e-14)


def test_regularizer_checkerboard_matches_direct_summation():
    H, W = 6, 5
    flow = np.zeros((H, W, 2))
    for y in range(H):
        for x in range(W):
            flow[y, x, :] = 1.0 if (x + y) % 2 == 0 else -1.0
    lam_tv, lam_mag = 0.11, 0.07
    value, _ = flow_regularizer(flow, lam_tv, lam_mag)
    # direct summation oracle over the documented formula
    tv = 0.0
    for y in range(H):
        for x in range(W):
            for c in range(2):
                if x + 1 < W:
                    tv += abs(flow[y, x + 1, c] - flow[y, x, c])
                if y + 1 < H:
                    tv += abs(flow[y + 1, x, c] - flow[y, x, c])
    tv /= H * W * 2.0
    mag = np.sum(flow ** 2) / (H * W)
    assert np.isclose(value, lam_tv * tv + lam_mag * mag, atol=1e-14)


def test_regularizer_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    flow = rng.normal(0.0, 1.0, size=(5, 6, 2))

    def loss():
        return flow_regularizer(flow, 0.3, 0.2)[0]

    _, grad = flow_regularizer(flow, 0.3, 0.2)
    check_grad(loss, flow, grad, indices=sample_indices(rng, flow.shape, 25))


def test_flow_bank_starts_at_zero():
    bank = FlowBank.zeros(["a", "b"], 8, 8)
    assert len(bank) == 2
    assert np.array_equal(bank.get("a"), np.zeros((8, 8, 2)))
    bank.validate()
    bank.fields["a"][0, 0, 0] = np.inf
    with pytest.raises(ValueError):
        bank.validate()
