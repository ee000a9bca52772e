"""Deformation decomposition: per-branch view-pose-invariant Gaussian maps,
a shared view-pose-specific offset network, and their activation-coupled
composition into renderable primitives.

Per valid texel, with branch raw values (p̂, q̂, ŝ, â, ĉ) and shared raw
offsets (δp, δq, δs, δa, δc):

    position = template + p̂ + r_p · tanh(δp)
    rotation = normalize(q̂ + r_q · tanh(δq))
    scale    = exp(ŝ + r_s · tanh(δs))
    opacity  = clamp(sigmoid(â) + tanh(δa), 0, 1)
    color    = clamp(sigmoid(ĉ) + r_c · tanh(δc), 0, 1)

The branch activations keep geometry positive and photometry bounded; the
shared tanh is symmetric and zero-centered so it can push in both directions.
Texels whose pre-clamp opacity falls to <= 0 are suppressed from rendering
entirely (the learnable soft filter).  A freshly initialized network has a
zero final layer, so its offsets vanish and composition degenerates to the
branch-only avatar bitwise.

Offset slot layout (14 per texel): δp[0:3], δq[3:7], δs[7:10], δa[10],
δc[11:14].
"""

from dataclasses import dataclass

import numpy as np

from .core import (GaussianCloud, quat_multiply, quat_multiply_left_matrix,
                   quat_normalize, quat_normalize_backward)
from .skeleton import LbsResult, PositionMap, position_map

OFFSET_DIM = 14
NET_INPUT_DIM = 12   # posed position (3) + view (3) + uv (2) + embedding (4)
EMBED_DIM = 4
HIDDEN = 64


@dataclass(frozen=True)
class OffsetRanges:
    """Bounds of the tanh-modulated offsets (position in template units)."""

    pos: float = 0.05
    rot: float = 0.2
    scale: float = 0.5
    color: float = 0.25


DEFAULT_RANGES = OffsetRanges()


@dataclass
class BranchField:
    """Raw (pre-activation) per-texel Gaussian parameters for one branch.

    Grids match the template UV layout; only texels valid in the template
    participate in composition.  `logscale_init` is remembered so the
    retained raw map can be expressed as deviation from the initial state.
    """

    branch: str
    pos: np.ndarray       # (H, W, 3) position residual
    rot: np.ndarray       # (H, W, 4) raw rotation, init (1, 0, 0, 0)
    logscale: np.ndarray  # (H, W, 3)
    opacity: np.ndarray   # (H, W) raw logit
    color: np.ndarray     # (H, W, 3) raw color logits
    logscale_init: float = 0.0

    @classmethod
    def init(cls, branch, grid_shape, init_scale):
        H, W = grid_shape
        rot = np.zeros((H, W, 4))
        rot[..., 0] = 1.0
        return cls(
            branch=branch,
            pos=np.zeros((H, W, 3)),
            rot=rot,
            logscale=np.full((H, W, 3), np.log(init_scale)),
            opacity=np.zeros((H, W)),
            color=np.zeros((H, W, 3)),
            logscale_init=float(np.log(init_scale)),
        )

    def params(self):
        return {"pos": self.pos, "rot": self.rot, "logscale": self.logscale,
                "opacity": self.opacity, "color": self.color}


class OffsetNetwork:
    """Shared compact network producing raw view-pose-specific offsets.

    Input per texel: posed position from the driving pose, the unit view
    axis, the texel's UV coordinates, and a learned per-texel embedding.
    Two tanh hidden layers of 64 units; the final layer starts at exactly
    zero so all offsets vanish at initialization.
    """

    def __init__(self, rng, grid_shape, hidden=HIDDEN):
        H, W = grid_shape
        self.hidden = hidden
        self.params = {
            "w1": rng.normal(0.0, np.sqrt(1.0 / NET_INPUT_DIM),
                             size=(NET_INPUT_DIM, hidden)),
            "b1": np.zeros(hidden),
            "w2": rng.normal(0.0, np.sqrt(1.0 / hidden), size=(hidden, hidden)),
            "b2": np.zeros(hidden),
            "w3": np.zeros((hidden, OFFSET_DIM)),
            "b3": np.zeros(OFFSET_DIM),
            "embed": rng.normal(0.0, 0.1, size=(H, W, EMBED_DIM)),
        }

    def forward(self, x):
        """x: (T, 12) -> raw offsets (T, 14) plus backward context."""
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite offset-network input")
        p = self.params
        h1 = np.tanh(x @ p["w1"] + p["b1"])
        h2 = np.tanh(h1 @ p["w2"] + p["b2"])
        out = h2 @ p["w3"] + p["b3"]
        return out, (x, h1, h2)

    def backward(self, ctx, d_out):
        """Returns (weight grads, input grads (T, 12))."""
        x, h1, h2 = ctx
        p = self.params
        d_h2 = d_out @ p["w3"].T
        d_z2 = d_h2 * (1.0 - h2 * h2)
        d_h1 = d_z2 @ p["w2"].T
        d_z1 = d_h1 * (1.0 - h1 * h1)
        grads = {
            "w3": h2.T @ d_out, "b3": d_out.sum(axis=0),
            "w2": h1.T @ d_z2, "b2": d_z2.sum(axis=0),
            "w1": x.T @ d_z1, "b1": d_z1.sum(axis=0),
        }
        return grads, d_z1 @ p["w1"].T


def texel_uv(valid):
    """(T, 2) UV coordinates of the valid texels, row-major order."""
    H, W = valid.shape
    rows, cols = np.nonzero(valid)
    return np.stack([(cols + 0.5) / W, (rows + 0.5) / H], axis=1)


def offsets(net: OffsetNetwork, posed_map: PositionMap, view):
    """Evaluate shared offsets for every valid texel of the posed map.

    view must be a unit 3-vector.  Returns (raw offsets (T, 14), net context);
    invalid texels emit nothing.
    """
    view = np.asarray(view, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(view) - 1.0) > 1e-6:
        raise ValueError("view direction must be a unit vector")
    valid = posed_map.valid
    T = int(valid.sum())
    x = np.empty((T, NET_INPUT_DIM))
    x[:, 0:3] = posed_map.positions[valid]
    x[:, 3:6] = view
    x[:, 6:8] = texel_uv(valid)
    x[:, 8:12] = net.params["embed"][valid]
    return net.forward(x)


@dataclass
class ComposedAvatar:
    """Canonical-space primitives for every valid texel plus the raw composed
    map (deviation from the initial state) retained for regularization.
    `keep` marks texels that survive the soft opacity filter and participate
    in rendering."""

    positions: np.ndarray  # (T, 3)
    rotations: np.ndarray  # (T, 4) unit
    scales: np.ndarray     # (T, 3) > 0
    opacities: np.ndarray  # (T,) in [0, 1]
    colors: np.ndarray     # (T, 3) in [0, 1]
    raw_map: np.ndarray    # (T, 14) composed raw values
    keep: np.ndarray       # (T,) bool
    ctx: object = None

    def cloud(self) -> GaussianCloud:
        k = self.keep
        return GaussianCloud(
            positions=self.positions[k], rotations=self.rotations[k],
            scales=self.scales[k], opacities=self.opacities[k],
            colors=self.colors[k])


def _branch_raw(branch: BranchField, valid):
    return (branch.pos[valid], branch.rot[valid], branch.logscale[valid],
            branch.opacity[valid], branch.color[valid])


def compose(branch: BranchField, offset_raw, template: PositionMap,
            ranges: OffsetRanges = DEFAULT_RANGES) -> ComposedAvatar:
    """Fuse the branch map with shared offsets (see module docstring)."""
    valid = template.valid
    T = int(valid.sum())
    offset_raw = np.asarray(offset_raw, dtype=np.float64)
    if offset_raw.shape != (T, OFFSET_DIM):
        raise ValueError(
            f"offset grid shape {offset_raw.shape} != ({T}, {OFFSET_DIM})")
    if branch.pos.shape[:2] != valid.shape:
        raise ValueError("branch grid does not match the template UV grid")

    p_hat, q_hat, s_hat, a_hat, c_hat = _branch_raw(branch, valid)
    t_p = np.tanh(offset_raw[:, 0:3])
    t_q = np.tanh(offset_raw[:, 3:7])
    t_s = np.tanh(offset_raw[:, 7:10])
    t_a = np.tanh(offset_raw[:, 10])
    t_c = np.tanh(offset_raw[:, 11:14])

    p_res = p_hat + ranges.pos * t_p
    q_raw = q_hat + ranges.rot * t_q
    s_raw = s_hat + ranges.scale * t_s
    sig_a = 1.0 / (1.0 + np.exp(-a_hat))
    a_raw = sig_a + t_a
    sig_c = 1.0 / (1.0 + np.exp(-c_hat))
    c_raw = sig_c + ranges.color * t_c

    positions = template.positions[valid] + p_res
    rotations = quat_normalize(q_raw)
    scales = np.exp(s_raw)
    opacities = np.clip(a_raw, 0.0, 1.0)
    colors = np.clip(c_raw, 0.0, 1.0)
    keep = a_raw > 0.0

    # raw composed map, expressed as deviation from the initial state so the
    # regularizer measures growth (exactly zero for a fresh branch)
    q_dev = q_raw.copy()
    q_dev[:, 0] -= 1.0
    raw_map = np.concatenate(
        [p_res, q_dev, s_raw - branch.logscale_init,
         a_raw[:, None] - 0.5, c_raw - 0.5], axis=1)
    ctx = (q_raw, t_p, t_q, t_s, t_a, t_c, sig_a, sig_c, a_raw, c_raw,
           scales, valid, ranges)
    return ComposedAvatar(positions=positions, rotations=rotations,
                          scales=scales, opacities=opacities, colors=colors,
                          raw_map=raw_map, keep=keep, ctx=ctx)


def compose_backward(avatar: ComposedAvatar, d_positions, d_rotations,
                     d_scales, d_opacities, d_colors, d_raw_map):
    """Chain gradients on composed primitives (T-aligned) and on the raw map
    back to the branch grids and the raw offsets.

    Returns (branch grads dict of (H, W, ...) grids, d_offsets (T, 14)).
    Clamped opacity/color entries pass zero gradient outside (0, 1).
    """
    (q_raw, t_p, t_q, t_s, t_a, t_c, sig_a, sig_c, a_raw, c_raw,
     scales, valid, ranges) = avatar.ctx
    T = avatar.positions.shape[0]
    H, W = valid.shape

    d_p_res = d_positions + d_raw_map[:, 0:3]
    d_q_raw = quat_normalize_backward(q_raw, d_rotations) + d_raw_map[:, 3:7]
    d_s_raw = d_scales * scales + d_raw_map[:, 7:10]
    live_a = (a_raw > 0.0) & (a_raw < 1.0)
    d_a_raw = d_opacities * live_a + d_raw_map[:, 10]
    live_c = (c_raw > 0.0) & (c_raw < 1.0)
    d_c_raw = d_colors * live_c + d_raw_map[:, 11:14]

    d_offsets = np.empty((T, OFFSET_DIM))
    d_offsets[:, 0:3] = d_p_res * ranges.pos * (1.0 - t_p * t_p)
    d_offsets[:, 3:7] = d_q_raw * ranges.rot * (1.0 - t_q * t_q)
    d_offsets[:, 7:10] = d_s_raw * ranges.scale * (1.0 - t_s * t_s)
    d_offsets[:, 10] = d_a_raw * (1.0 - t_a * t_a)
    d_offsets[:, 11:14] = d_c_raw * ranges.color * (1.0 - t_c * t_c)

    def grid(shape_tail, values):
        g = np.zeros((H, W) + shape_tail)
        g[valid] = values
        return g

    branch_grads = {
        "pos": grid((3,), d_p_res),
        "rot": grid((4,), d_q_raw),
        "logscale": grid((3,), d_s_raw),
        "opacity": grid((), d_a_raw * sig_a * (1.0 - sig_a)),
        "color": grid((3,), d_c_raw * sig_c * (1.0 - sig_c)),
    }
    return branch_grads, d_offsets


def branch_only_avatar(branch: BranchField, template: PositionMap) -> ComposedAvatar:
    """Activation of the branch map alone (the degenerate zero-offset case);
    must agree bitwise with compose() under a freshly initialized network."""
    valid = template.valid
    T = int(valid.sum())
    return compose(branch, np.zeros((T, OFFSET_DIM)), template)


@dataclass
class AvatarContext:
    lbs: LbsResult
    net_ctx: object
    avatar: ComposedAvatar
    valid_linear: np.ndarray   # (T, 3, 3)
    blend_quat: np.ndarray     # (T, 4)


def build_avatar(branch, net, skel, weights, template, pose, camera,
                 lbs: LbsResult = None, ranges: OffsetRanges = DEFAULT_RANGES):
    """Compose in canonical space with offsets from the driving pose and the
    camera's view axis, then skin positions and orientations into world
    space.  Returns (posed GaussianCloud over kept texels, AvatarContext).

    Pass a precomputed `lbs` result to reuse skinning across calls with the
    same pose.
    """
    if lbs is None:
        lbs = position_map(template, skel, weights, pose)
    view = camera.view_axis()
    off, net_ctx = offsets(net, lbs.posed, view)
    avatar = compose(branch, off, template, ranges=ranges)

    valid = template.valid
    M = lbs.linear[valid]
    off_t = lbs.offset[valid]
    bq = lbs.blend_quat[valid]

    posed_pos = np.einsum("tab,tb->ta", M, avatar.positions) + off_t
    posed_rot = quat_multiply(bq, avatar.rotations)

    k = avatar.keep
    cloud = GaussianCloud(
        positions=posed_pos[k], rotations=posed_rot[k],
        scales=avatar.scales[k], opacities=avatar.opacities[k],
        colors=avatar.colors[k])
    ctx = AvatarContext(lbs=lbs, net_ctx=net_ctx, avatar=avatar,
                        valid_linear=M, blend_quat=bq)
    return cloud, ctx


def build_avatar_backward(ctx: AvatarContext, net: OffsetNetwork, cloud_grads,
                          d_raw_map=None):
    """Route renderer gradients (aligned with the kept cloud) plus optional
    raw-map gradients back to the branch grids, network weights and texel
    embeddings.

    Returns (branch grads, net weight grads incl. 'embed').
    """
    avatar = ctx.avatar
    T = avatar.positions.shape[0]
    k = avatar.keep

    d_posed_pos = np.zeros((T, 3))
    d_posed_rot = np.zeros((T, 4))
    d_scales = np.zeros((T, 3))
    d_opac = np.zeros(T)
    d_colors = np.zeros((T, 3))
    d_posed_pos[k] = cloud_grads["positions"]
    d_posed_rot[k] = cloud_grads["rotations"]
    d_scales[k] = cloud_grads["scales"]
    d_opac[k] = cloud_grads["opacities"]
    d_colors[k] = cloud_grads["colors"]
    if d_raw_map is None:
        d_raw_map = np.zeros((T, OFFSET_DIM))

    # posed = M p + b: canonical position gradient through the blended map
    d_pos = np.einsum("tab,ta->tb", ctx.valid_linear, d_posed_pos)
    # posed_rot = L(blend_quat) @ rotation
    L = quat_multiply_left_matrix(ctx.blend_quat)
    d_rot = np.einsum("tab,ta->tb", L, d_posed_rot)

    branch_grads, d_off = compose_backward(
        avatar, d_pos, d_rot, d_scales, d_opac, d_colors, d_raw_map)
    net_grads, d_x = net.backward(ctx.net_ctx, d_off)

    valid = avatar.ctx[-2]
    d_embed = np.zeros(net.params["embed"].shape)
    d_embed[valid] = d_x[:, 8:12]
    net_grads["embed"] = d_embed
    return branch_grads, net_grads
