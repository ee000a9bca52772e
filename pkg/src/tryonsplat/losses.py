"""Training objective: photometric L1, a multi-scale edge-map perceptual
proxy, Gaussian-map regularization, and an adversarial term driven by a
small from-scratch patch discriminator.

Every loss returns its scalar together with analytic gradients; all of them
are exercised against central finite differences in the test suite.  The
perceptual proxy and L1 are linear in (render - target), so the gradient
with respect to the target is exactly the negated render gradient (the flow
rectifier relies on this when warping supervision).
"""

from dataclasses import dataclass

import numpy as np

LOGIT_CLAMP = 20.0
LEAKY_SLOPE = 0.2


# ---------------------------------------------------------------------------
# photometric terms


def l1_loss(render, target):
    """Mean absolute difference; subgradient sign(render - target) / count."""
    render = np.asarray(render, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if render.shape != target.shape:
        raise ValueError(f"shape mismatch {render.shape} vs {target.shape}")
    diff = render - target
    value = np.mean(np.abs(diff))
    grad = np.sign(diff) / diff.size
    return value, grad


def _pool2(img):
    """2x2 average pooling; odd trailing rows/cols are cropped first."""
    H, W = img.shape[:2]
    img = img[: H - H % 2, : W - W % 2]
    return 0.25 * (img[0::2, 0::2] + img[0::2, 1::2]
                   + img[1::2, 0::2] + img[1::2, 1::2])


def _pool2_backward(d_out, shape):
    d_in = np.zeros(shape)
    H2, W2 = d_out.shape[:2]
    q = 0.25 * d_out
    d_in[0:2 * H2:2, 0:2 * W2:2] = q
    d_in[0:2 * H2:2, 1:2 * W2:2] = q
    d_in[1:2 * H2:2, 0:2 * W2:2] = q
    d_in[1:2 * H2:2, 1:2 * W2:2] = q
    return d_in


def _edge_l1(a, b):
    """Mean L1 between horizontal and vertical finite-difference maps of two
    images; returns (value, d_a) with d_b == -d_a by linearity."""
    gxa = a[:, 1:] - a[:, :-1]
    gxb = b[:, 1:] - b[:, :-1]
    gya = a[1:, :] - a[:-1, :]
    gyb = b[1:, :] - b[:-1, :]
    vx = np.mean(np.abs(gxa - gxb)) if gxa.size else 0.0
    vy = np.mean(np.abs(gya - gyb)) if gya.size else 0.0
    d_a = np.zeros_like(a)
    if gxa.size:
        sx = np.sign(gxa - gxb) / gxa.size
        d_a[:, 1:] += sx
        d_a[:, :-1] -= sx
    if gya.size:
        sy = np.sign(gya - gyb) / gya.size
        d_a[1:, :] += sy
        d_a[:-1, :] -= sy
    return 0.5 * (vx + vy), 0.5 * d_a


def perceptual_proxy(render, target, scales=3):
    """Structural proxy for a learned perceptual metric: L1 between
    finite-difference edge maps at `scales` dyadic resolutions (full, half,
    quarter via 2x2 average pooling), averaged over scales.

    Blind to global color shifts by construction (documented; the L1 term
    covers those).  Returns (value, grad wrt render).
    """
    a = np.asarray(render, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    pyramid = []
    for s in range(scales):
        pyramid.append((a, b))
        if s + 1 < scales:
            a, b = _pool2(a), _pool2(b)

    value = 0.0
    d_levels = []
    for a_s, b_s in pyramid:
        v, d = _edge_l1(a_s, b_s)
        value += v
        d_levels.append(d / scales)
    value /= scales

    grad = d_levels[-1]
    for s in range(scales - 2, -1, -1):
        grad = _pool2_backward(grad, pyramid[s][0].shape)
        grad += d_levels[s]
    return value, grad


def reg_loss(raw_map):
    """Mean squared entry of the raw composed Gaussian map (valid texels);
    keeps map values from growing without bound.  Returns (value, grad)."""
    m = np.asarray(raw_map, dtype=np.float64)
    value = np.mean(m * m) if m.size else 0.0
    grad = 2.0 * m / max(m.size, 1)
    return value, grad


def total_loss(l1, lp, lreg, ladv_gen, flow_reg, weights):
    """Weighted sum per the training objective; returns (total, breakdown)."""
    total = (l1 + weights.lam_p * lp + weights.lam_reg * lreg
             + weights.lam_adv * ladv_gen + flow_reg)
    return total, {
        "l1": l1, "lp": lp, "lreg": lreg,
        "ladv_gen": ladv_gen, "flow_reg": flow_reg, "total": total,
    }


@dataclass
class LossWeights:
    lam_p: float = 0.1
    lam_reg: float = 1e-3
    lam_adv: float = 0.05
    lam_tv: float = 1e-3
    lam_mag: float = 1e-4

    def validate(self):
        for name in ("lam_p", "lam_reg", "lam_adv", "lam_tv", "lam_mag"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        return self


# ---------------------------------------------------------------------------
# patch discriminator (3 strided 4x4 convolutions, leaky nonlinearity)


def _conv_forward(x, w, b):
    """Stride-2, pad-1, 4x4 convolution.  x: (B, H, W, Cin), w: (Cout, Cin, 4, 4)."""
    B, H, W, C = x.shape
    O = w.shape[0]
    xp = np.zeros((B, H + 2, W + 2, C))
    xp[:, 1:-1, 1:-1, :] = x
    win = np.lib.stride_tricks.sliding_window_view(xp, (4, 4), axis=(1, 2))
    win = np.ascontiguousarray(win[:, ::2, ::2])   # (B, Ho, Wo, C, 4, 4)
    Ho, Wo = win.shape[1], win.shape[2]
    cols = win.reshape(B * Ho * Wo, C * 16)
    out = (cols @ w.reshape(O, C * 16).T).reshape(B, Ho, Wo, O) + b
    return out, (x.shape, cols, (B, Ho, Wo))


def _conv_backward(ctx, w, d_out, need_input_grad):
    x_shape, cols, (B, Ho, Wo) = ctx
    O = w.shape[0]
    C = x_shape[3]
    d_flat = d_out.reshape(B * Ho * Wo, O)
    d_w = (d_flat.T @ cols).reshape(O, C, 4, 4)
    d_b = d_out.sum(axis=(0, 1, 2))
    d_x = None
    if need_input_grad:
        H, W = x_shape[1], x_shape[2]
        d_cols = (d_flat @ w.reshape(O, C * 16)).reshape(B, Ho, Wo, C, 4, 4)
        d_xp = np.zeros((B, H + 2, W + 2, C))
        for i in range(4):
            for j in range(4):
                # window (h, w) covers padded pixel (2h + i, 2w + j)
                d_xp[:, i:i + 2 * Ho:2, j:j + 2 * Wo:2, :] += d_cols[:, :, :, :, i, j]
        d_x = d_xp[:, 1:-1, 1:-1, :]
    return d_w, d_b, d_x


def _leaky(x):
    return np.where(x >= 0, x, LEAKY_SLOPE * x)


def _leaky_backward(x, d):
    return np.where(x >= 0, d, LEAKY_SLOPE * d)


class PatchDiscriminator:
    """Maps a 32x32 RGB patch to a single real-score logit.

    Three stride-2 linear convolutions (3 -> 16 -> 32 -> 1 channels) with a
    leaky nonlinearity between them; the final 4x4 score map is averaged into
    one logit per patch.
    """

    PATCH = 32

    def __init__(self, rng):
        def init(co, ci):
            std = np.sqrt(2.0 / (ci * 16))
            return rng.normal(0.0, std, size=(co, ci, 4, 4))

        self.params = {
            "w1": init(16, 3), "b1": np.zeros(16),
            "w2": init(32, 16), "b2": np.zeros(32),
            "w3": init(1, 32), "b3": np.zeros(1),
        }

    def forward(self, patches):
        """patches: (B, 32, 32, 3) -> logits (B,), plus backward context."""
        p = self.params
        z1, c1 = _conv_forward(patches, p["w1"], p["b1"])
        h1 = _leaky(z1)
        z2, c2 = _conv_forward(h1, p["w2"], p["b2"])
        h2 = _leaky(z2)
        z3, c3 = _conv_forward(h2, p["w3"], p["b3"])
        logits = z3.mean(axis=(1, 2, 3))
        return logits, (c1, z1, c2, z2, c3, z3.shape)

    def backward(self, ctx, d_logits, need_input_grad=False):
        """Returns (weight grads dict, input-pixel grads or None)."""
        p = self.params
        c1, z1, c2, z2, c3, z3_shape = ctx
        B = z3_shape[0]
        spread = np.ones(z3_shape) / (z3_shape[1] * z3_shape[2] * z3_shape[3])
        d_z3 = spread * np.asarray(d_logits).reshape(B, 1, 1, 1)
        d_w3, d_b3, d_h2 = _conv_backward(c3, p["w3"], d_z3, True)
        d_z2 = _leaky_backward(z2, d_h2)
        d_w2, d_b2, d_h1 = _conv_backward(c2, p["w2"], d_z2, True)
        d_z1 = _leaky_backward(z1, d_h1)
        d_w1, d_b1, d_x = _conv_backward(c1, p["w1"], d_z1, need_input_grad)
        grads = {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2,
                 "w3": d_w3, "b3": d_b3}
        return grads, d_x


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _softplus(x):
    return np.logaddexp(0.0, x)


@dataclass
class AdversarialResult:
    l_dis: float
    l_gen: float
    dis_grads: dict        # gradients for discriminator weights (from l_dis)
    d_fake: np.ndarray     # gradient of l_gen wrt fake patch pixels


def adversarial_losses(dis: PatchDiscriminator, real, fake) -> AdversarialResult:
    """Non-saturating adversarial pair.

    real: unrectified supervision patches (treated as real);
    fake: rendered patches (treated as synthetic).  Both (B, 32, 32, 3).

    l_dis = -mean log s(D(real)) - mean log(1 - s(D(fake)))
    l_gen = -mean log s(D(fake))

    Logits are clamped to [-20, 20] before the sigmoid (zero gradient
    outside).  Discriminator gradients come from l_dis only and touch just
    the weights; generator gradients come from l_gen only and flow into the
    fake pixels with the weights held fixed.
    """
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape[0] == 0 or fake.shape[0] == 0:
        raise ValueError("adversarial losses need non-empty patch sets")

    logit_r, ctx_r = dis.forward(real)
    logit_f, ctx_f = dis.forward(fake)
    live_r = np.abs(logit_r) < LOGIT_CLAMP
    live_f = np.abs(logit_f) < LOGIT_CLAMP
    lr = np.clip(logit_r, -LOGIT_CLAMP, LOGIT_CLAMP)
    lf = np.clip(logit_f, -LOGIT_CLAMP, LOGIT_CLAMP)

    # -log s(x) = softplus(-x);  -log(1 - s(x)) = softplus(x)
    l_dis = float(np.mean(_softplus(-lr)) + np.mean(_softplus(lf)))
    l_gen = float(np.mean(_softplus(-lf)))

    nr, nf = real.shape[0], fake.shape[0]
    d_lr = (_sigmoid(lr) - 1.0) / nr * live_r
    d_lf_dis = _sigmoid(lf) / nf * live_f
    g_real, _ = dis.backward(ctx_r, d_lr, need_input_grad=False)
    g_fake, _ = dis.backward(ctx_f, d_lf_dis, need_input_grad=False)
    dis_grads = {k: g_real[k] + g_fake[k] for k in g_real}

    d_lf_gen = (_sigmoid(lf) - 1.0) / nf * live_f
    _, d_fake = dis.backward(ctx_f, d_lf_gen, need_input_grad=True)
    return AdversarialResult(l_dis=l_dis, l_gen=l_gen,
                             dis_grads=dis_grads, d_fake=d_fake)


def sample_patch_coords(rng, height, width, count, patch=32):
    """Deterministic top-left corners for `count` patches inside the image."""
    ys = rng.integers(0, height - patch + 1, size=count)
    xs = rng.integers(0, width - patch + 1, size=count)
    return np.stack([ys, xs], axis=1)


def extract_patches(image, coords, patch=32):
    return np.stack([image[y:y + patch, x:x + patch] for y, x in coords])


def scatter_patch_grads(d_patches, coords, image_shape, patch=32):
    """Accumulate per-patch pixel gradients back into an image-sized array."""
    d_image = np.zeros(image_shape)
    for g, (y, x) in zip(d_patches, coords):
        d_image[y:y + patch, x:x + patch] += g
    return d_image
