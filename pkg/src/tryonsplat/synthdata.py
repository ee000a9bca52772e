"""Procedural experimental world: a ground-truth articulated Gaussian subject,
multi-view multi-pose source renders, and degraded try-on supervision with
known injected inconsistency (the stand-in for an external 2D try-on prior).

The subject is a capsule-limb humanoid with 6 joints (root, spine, one joint
per arm, one merged joint per leg) surfaced by an analytic 64x64 UV layout:
row bands map to torso / left arm / right arm / left leg / right leg
cylinders, columns wrap the circumference.  Ground-truth renders apply a
view-and-pose-dependent shading term, which zero-order (view-independent)
Gaussian colors cannot represent on their own; the shared offset network is
the only component that can absorb it.

Degradation of a try-on frame: (1) garment texels recolored to the target
texture, (2) a smooth random warp (3 low-frequency sinusoids per axis,
feathered to the garment region, max endpoint norm exactly m pixels),
(3) a mild whole-frame color gain/offset.  The injected warp, its fixed-point
inverse, the garment pixel mask and the color perturbation are all recorded,
so flow recovery is checkable against an exact oracle.
"""

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .core import Camera, GaussianCloud, quat_multiply, rotmat_to_quat
from .flow import warp
from .renderer import render
from .skeleton import (PositionMap, Pose, Skeleton, position_map)
from .tensorio import load_png, load_tensor, save_png, save_tensor

UV_GRID = 64
JOINTS = 6
ARM_SWING = 0.87    # rad, peak arm rotation about z
TWIST = 0.44        # rad, peak spine twist about y
SHADE_AMBIENT = 0.75
SHADE_DIFFUSE = 0.25

TORSO_RADIUS = 0.16
ARM_RADIUS = 0.055
LEG_RADIUS = 0.07

# UV row-band fractions (torso, arm_l, arm_r, leg_l, leg_r); at the default
# 64-texel grid these give 28 / 8 / 8 / 10 / 10 rows
_BAND_FRACTIONS = np.array([28, 8, 8, 10, 10]) / 64.0
_GARMENT_FRACTIONS = (3 / 64.0, 25 / 64.0)


def band_layout(grid=UV_GRID):
    """Row bands (first, last inclusive) of the UV layout at a given grid
    size, plus the garment sub-band of the torso."""
    bounds = np.rint(np.cumsum(np.concatenate([[0.0], _BAND_FRACTIONS]))
                     * grid).astype(int)
    bands = {name: (bounds[i], bounds[i + 1] - 1)
             for i, name in enumerate(("torso", "arm_l", "arm_r",
                                       "leg_l", "leg_r"))}
    g0 = int(round(_GARMENT_FRACTIONS[0] * grid))
    g1 = int(round(_GARMENT_FRACTIONS[1] * grid)) - 1
    return bands, (g0, g1)


@dataclass
class GarmentSpec:
    """Texture specification standing in for an in-shop garment photo."""

    pattern: str           # 'solid' | 'stripes' | 'checker'
    color_a: np.ndarray
    color_b: np.ndarray
    period: int            # texels

    def validate(self):
        if self.pattern not in ("solid", "stripes", "checker"):
            raise ValueError(f"unknown pattern '{self.pattern}'")
        for c in (self.color_a, self.color_b):
            if np.any(np.asarray(c) < 0) or np.any(np.asarray(c) > 1):
                raise ValueError("garment colors must lie in [0, 1]")
        if self.period < 1:
            raise ValueError("pattern period must be >= 1 texel")
        return self

    def paint(self, rows, cols):
        """Color for garment texels at UV (rows, cols) arrays."""
        if self.pattern == "solid":
            pick = np.zeros(rows.shape, dtype=bool)
        elif self.pattern == "stripes":
            pick = (rows // self.period) % 2 == 1
        else:
            pick = ((rows // self.period) + (cols // self.period)) % 2 == 1
        out = np.where(pick[..., None],
                       np.asarray(self.color_b, dtype=np.float64),
                       np.asarray(self.color_a, dtype=np.float64))
        return out


def source_garment_spec():
    return GarmentSpec(pattern="stripes",
                       color_a=np.array([0.75, 0.15, 0.15]),
                       color_b=np.array([0.92, 0.88, 0.80]), period=3)


def target_garment_spec():
    return GarmentSpec(pattern="checker",
                       color_a=np.array([0.10, 0.35, 0.75]),
                       color_b=np.array([0.95, 0.95, 0.92]), period=4)


@dataclass
class Subject:
    skeleton: Skeleton
    weights: np.ndarray       # (H, W, J)
    template: PositionMap
    normals: np.ndarray       # (H, W, 3) canonical surface normals
    gt_rotations: np.ndarray  # (H, W, 4)
    gt_scales: np.ndarray     # (H, W, 3)
    gt_opacity: np.ndarray    # (H, W)
    gt_colors: np.ndarray     # (H, W, 3) base colors incl. source garment
    garment_mask: np.ndarray  # (H, W) bool, garment region in UV
    seed: int

    @property
    def texel_count(self):
        return int(self.template.valid.sum())

    def mean_spacing(self):
        s = self.gt_scales[self.template.valid]
        return float(np.mean(s[:, :2]))


def build_skeleton() -> Skeleton:
    parents = np.array([-1, 0, 1, 1, 0, 0], dtype=np.int64)
    offsets = np.array([
        [0.0, 0.0, 0.0],      # root (pelvis)
        [0.0, 0.25, 0.0],     # spine
        [-0.22, 0.45, 0.0],   # left arm (shoulder), child of spine
        [0.22, 0.45, 0.0],    # right arm
        [-0.10, -0.05, 0.0],  # left leg (merged hip/knee)
        [0.10, -0.05, 0.0],   # right leg
    ])
    return Skeleton(parents=parents, rest_offsets=offsets).validate()


def _bone_segments():
    """(start, end) of each joint's bone in the rest pose, for weights and
    for hanging the capsule surfaces."""
    return np.array([
        [[0.0, -0.05, 0.0], [0.0, 0.25, 0.0]],      # root: pelvis stub
        [[0.0, 0.25, 0.0], [0.0, 0.75, 0.0]],       # spine: chest column
        [[-0.22, 0.70, 0.0], [-0.62, 0.70, 0.0]],   # left arm
        [[0.22, 0.70, 0.0], [0.62, 0.70, 0.0]],     # right arm
        [[-0.10, -0.05, 0.0], [-0.10, -0.85, 0.0]],  # left leg
        [[0.10, -0.05, 0.0], [0.10, -0.85, 0.0]],   # right leg
    ])


def _point_segment_distance(p, a, b):
    ab = b - a
    tt = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    closest = a + tt[:, None] * ab
    return np.linalg.norm(p - closest, axis=1)


def _band_surface(band, axis_a, axis_b, radius, grid):
    """Cylinder surface positions/normals/frames for one UV row band.

    Columns wrap the circumference; rows run along the bone from axis_a to
    axis_b.  Returns (positions, normals, tangents_u, tangents_v) each
    (n_rows, grid, 3).
    """
    r0, r1 = band
    n_rows = r1 - r0 + 1
    vfrac = (np.arange(n_rows) + 0.5) / n_rows
    phi = 2.0 * np.pi * (np.arange(grid) + 0.5) / grid
    axis = axis_b - axis_a
    length = np.linalg.norm(axis)
    a_unit = axis / length
    # orthonormal frame (e1, e2) perpendicular to the bone axis
    helper = np.array([0.0, 0.0, 1.0])
    if abs(a_unit @ helper) > 0.9:
        helper = np.array([1.0, 0.0, 0.0])
    e1 = np.cross(a_unit, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a_unit, e1)

    normal = (np.cos(phi)[:, None] * e1[None, :]
              + np.sin(phi)[:, None] * e2[None, :])          # (W, 3)
    centers = axis_a[None, :] + vfrac[:, None] * axis[None, :]  # (n_rows, 3)
    pos = centers[:, None, :] + radius * normal[None, :, :]
    nrm = np.broadcast_to(normal[None], pos.shape).copy()
    t_v = np.broadcast_to(a_unit[None, None], pos.shape).copy()
    t_u = np.cross(t_v, nrm)
    return pos, nrm, t_u, t_v, length, 2.0 * np.pi * radius


def generate_subject(seed, grid=UV_GRID) -> Subject:
    """Deterministic capsule-limb humanoid with the source garment painted on
    the torso band."""
    rng = np.random.default_rng(seed)
    skel = build_skeleton()
    segs = _bone_segments()
    layout, garment_rows = band_layout(grid)

    H = W = grid
    positions = np.zeros((H, W, 3))
    normals = np.zeros((H, W, 3))
    rotations = np.zeros((H, W, 4))
    rotations[..., 0] = 1.0
    scales = np.full((H, W, 3), 0.01)
    valid = np.zeros((H, W), dtype=bool)

    bands = [
        (layout["torso"], segs[0][0], segs[1][1], TORSO_RADIUS),
        (layout["arm_l"], segs[2][0], segs[2][1], ARM_RADIUS),
        (layout["arm_r"], segs[3][0], segs[3][1], ARM_RADIUS),
        (layout["leg_l"], segs[4][0], segs[4][1], LEG_RADIUS),
        (layout["leg_r"], segs[5][0], segs[5][1], LEG_RADIUS),
    ]
    for band, a, b, radius in bands:
        r0, r1 = band
        pos, nrm, t_u, t_v, length, circum = _band_surface(
            band, np.asarray(a, dtype=np.float64),
            np.asarray(b, dtype=np.float64), radius, grid)
        positions[r0:r1 + 1] = pos
        normals[r0:r1 + 1] = nrm
        frames = np.stack([t_u, t_v, nrm], axis=-1)   # columns (tu, tv, n)
        rotations[r0:r1 + 1] = rotmat_to_quat(
            frames.reshape(-1, 3, 3)).reshape(pos.shape[:2] + (4,))
        du = circum / grid
        dv = length / (r1 - r0 + 1)
        scales[r0:r1 + 1] = np.array([0.75 * du, 0.75 * dv,
                                      0.35 * min(du, dv)])
        valid[r0:r1 + 1] = True

    template = PositionMap(positions=positions, valid=valid)

    # skin weights: inverse 4th-power distance to the bone segments,
    # sparsified to the closest two bones so distal body parts stay exactly
    # rigid under unrelated joints, then renormalized
    pts = positions.reshape(-1, 3)
    dists = np.stack([_point_segment_distance(pts, segs[j, 0], segs[j, 1])
                      for j in range(JOINTS)], axis=1)
    raw = 1.0 / (dists + 0.03) ** 4
    order = np.argsort(-raw, axis=1)
    w = np.zeros_like(raw)
    rows = np.arange(raw.shape[0])
    for rank in range(2):
        j = order[:, rank]
        w[rows, j] = raw[rows, j]
    w /= w.sum(axis=1, keepdims=True)
    weights = w.reshape(H, W, JOINTS)

    # appearance: skin-toned limbs, trouser legs, striped source garment
    colors = np.zeros((H, W, 3))
    colors[layout["torso"][0]:layout["arm_r"][1] + 1] = [0.80, 0.62, 0.50]
    colors[layout["leg_l"][0]:layout["leg_r"][1] + 1] = [0.25, 0.28, 0.55]
    garment_mask = np.zeros((H, W), dtype=bool)
    garment_mask[garment_rows[0]:garment_rows[1] + 1] = True
    g_rows, g_cols = np.nonzero(garment_mask)
    colors[g_rows, g_cols] = source_garment_spec().validate().paint(g_rows, g_cols)
    # subtle deterministic mottling so flat regions still carry texture
    colors += rng.normal(0.0, 0.015, size=colors.shape)
    colors = np.clip(colors, 0.0, 1.0)

    opacity = np.full((H, W), 0.95)
    return Subject(skeleton=skel, weights=weights, template=template,
                   normals=normals, gt_rotations=rotations, gt_scales=scales,
                   gt_opacity=opacity, gt_colors=colors,
                   garment_mask=garment_mask, seed=seed)


# ---------------------------------------------------------------------------
# cameras, poses, ground-truth rendering


def ring_cameras(count, resolution, radius=3.0, height=-0.05):
    """Cameras on a horizontal ring looking at the subject center."""
    cams = []
    for v in range(count):
        psi = 2.0 * np.pi * v / count
        eye = np.array([radius * np.sin(psi), height, radius * np.cos(psi)])
        cams.append(Camera.look_at(eye, np.array([0.0, height, 0.0]),
                                   np.array([0.0, 1.0, 0.0]),
                                   fx=1.3 * resolution, fy=1.3 * resolution,
                                   width=resolution, height=resolution))
    return cams


def _axis_quat(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def swing_twist_pose(phase) -> Pose:
    """Arm swing (antisymmetric, about z) plus torso twist (about y);
    phase 0 is exactly the canonical pose."""
    q = np.zeros((JOINTS, 4))
    q[:, 0] = 1.0
    alpha = ARM_SWING * np.sin(phase)
    beta = TWIST * np.sin(2.0 * phase)
    q[1] = _axis_quat([0.0, 1.0, 0.0], beta)
    q[2] = _axis_quat([0.0, 0.0, 1.0], alpha)
    q[3] = _axis_quat([0.0, 0.0, 1.0], -alpha)
    return Pose(rotations=q, root_translation=np.zeros(3))


def pose_cycle(count) -> list:
    return [swing_twist_pose(2.0 * np.pi * p / count) for p in range(count)]


def shade_colors(base_colors, normals, lbs, view_axis):
    """View-conditioned appearance factor on per-texel base colors.

    brightness = ambient + diffuse * max(0, -n . view_axis) with n the
    *canonical* texel normal: each camera sees a different brightness per
    texel (so a single view-independent color map cannot fit all views), but
    the factor is constant across poses, keeping the ground-truth subject
    exactly pose-consistent for the consistency oracle.
    """
    valid = lbs.posed.valid
    lam = SHADE_AMBIENT + SHADE_DIFFUSE * np.maximum(
        0.0, -normals[valid] @ np.asarray(view_axis))
    return base_colors[valid] * lam[:, None]


def subject_cloud(subject: Subject, lbs, camera, shading=True,
                  colors=None, texel_mask=None) -> GaussianCloud:
    """Posed ground-truth cloud, optionally restricted to a UV texel mask."""
    tpl = subject.template
    valid = tpl.valid
    base = subject.gt_colors if colors is None else colors
    shaded = shade_colors(base, subject.normals, lbs, camera.view_axis()) \
        if shading else base[valid]
    shaded = np.clip(shaded, 0.0, 1.0)

    posed_pos = (np.einsum("tab,tb->ta", lbs.linear[valid],
                           tpl.positions[valid]) + lbs.offset[valid])
    posed_rot = quat_multiply(lbs.blend_quat[valid], subject.gt_rotations[valid])
    pick = np.ones(int(valid.sum()), dtype=bool) if texel_mask is None \
        else texel_mask[valid]
    return GaussianCloud(positions=posed_pos[pick], rotations=posed_rot[pick],
                         scales=subject.gt_scales[valid][pick],
                         opacities=subject.gt_opacity[valid][pick],
                         colors=shaded[pick])


def render_subject(subject, pose, camera, background, shading=True,
                   colors=None, texel_mask=None, lbs=None):
    if lbs is None:
        lbs = position_map(subject.template, subject.skeleton,
                           subject.weights, pose)
    cloud = subject_cloud(subject, lbs, camera, shading=shading,
                          colors=colors, texel_mask=texel_mask)
    out, _ = render(cloud, camera, background)
    return out


def tryon_colors(subject: Subject, spec: GarmentSpec):
    """Ground-truth base colors with the garment region repainted."""
    colors = subject.gt_colors.copy()
    rows, cols = np.nonzero(subject.garment_mask)
    colors[rows, cols] = spec.validate().paint(rows, cols)
    return colors


def render_dataset(subject, cameras, poses, background, colors=None,
                   shading=True):
    """All (view, pose) ground-truth frames; returns (V, P, H, W, 3)."""
    frames = []
    for pose in poses:
        lbs = position_map(subject.template, subject.skeleton,
                           subject.weights, pose)
        row = [render_subject(subject, pose, cam, background, shading=shading,
                              colors=colors, lbs=lbs).image for cam in cameras]
        frames.append(row)
    stacked = np.array(frames)           # (P, V, H, W, 3)
    return np.swapaxes(stacked, 0, 1)    # (V, P, ...)


def subsample_poses(total, k):
    """Evenly strided pose indices including the first; floor(i * total / k)."""
    if not 1 <= k <= total:
        raise ValueError(f"subsample size {k} out of range [1, {total}]")
    return (np.arange(k, dtype=np.int64) * total) // k


# ---------------------------------------------------------------------------
# degradation with recorded ground truth


@dataclass
class JitterRecord:
    injected: np.ndarray   # (H, W, 2) warp applied to the ideal frame
    inverse: np.ndarray    # (H, W, 2) flow that undoes it (fixed point)
    mask: np.ndarray       # (H, W) bool garment pixel mask
    gain: np.ndarray       # (3,)
    offset: np.ndarray     # (3,)


def _bilinear_field(field, sx, sy):
    """Sample an (H, W, C) field at float coords with border clamp."""
    H, W = field.shape[:2]
    sxc = np.clip(sx, 0.0, W - 1.0)
    syc = np.clip(sy, 0.0, H - 1.0)
    x0 = np.floor(sxc).astype(np.int64)
    y0 = np.floor(syc).astype(np.int64)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = (sxc - x0)[..., None]
    fy = (syc - y0)[..., None]
    return ((1 - fx) * (1 - fy) * field[y0, x0] + fx * (1 - fy) * field[y0, x1]
            + (1 - fx) * fy * field[y1, x0] + fx * fy * field[y1, x1])


def invert_flow(injected, iterations=6):
    """Fixed-point inverse of a backward warp: F(x) = -J(x + F(x))."""
    H, W = injected.shape[:2]
    xg = np.arange(W, dtype=np.float64)[None, :]
    yg = np.arange(H, dtype=np.float64)[:, None]
    F = -injected.copy()
    for _ in range(iterations):
        F = -_bilinear_field(injected, xg + F[..., 0], yg + F[..., 1])
    return F


def _feather(mask, radius=3):
    """Box-feather a binary mask over `radius` pixels."""
    soft = mask.astype(np.float64)
    k = 2 * radius + 1
    kern = np.ones(k) / k
    for axis in (0, 1):
        soft = np.apply_along_axis(
            lambda m: np.convolve(m, kern, mode="same"), axis, soft)
    return np.clip(soft, 0.0, 1.0)


def smooth_jitter_field(rng, height, width, mask, magnitude):
    """Sum of 3 random low-frequency sinusoids per axis, feathered to the
    garment region, rescaled so the max endpoint norm equals `magnitude`."""
    field = np.zeros((height, width, 2))
    if magnitude <= 0:
        return field
    xg = (np.arange(width) + 0.5) / width
    yg = (np.arange(height) + 0.5) / height
    X, Y = np.meshgrid(xg, yg)
    for c in range(2):
        comp = np.zeros((height, width))
        for _ in range(3):
            famp = rng.uniform(0.5, 1.0)
            f1 = rng.uniform(0.3, 1.5)
            f2 = rng.uniform(0.3, 1.5)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            comp += famp * np.sin(2.0 * np.pi * (f1 * X + f2 * Y) + phase)
        field[..., c] = comp
    field *= _feather(mask)[..., None]
    norms = np.linalg.norm(field, axis=2)
    peak = norms.max()
    if peak > 0:
        field *= magnitude / peak
    return field


def degrade(ideal_frames, garment_masks, magnitude, rng, color_jitter=True):
    """Inject per-frame inconsistency into ideal try-on frames.

    ideal_frames: (N, H, W, 3); garment_masks: (N, H, W) bool.
    Returns (degraded (N, H, W, 3), list[JitterRecord]).
    """
    degraded = []
    records = []
    for frame, mask in zip(ideal_frames, garment_masks):
        H, W = frame.shape[:2]
        J = smooth_jitter_field(rng, H, W, mask, magnitude)
        out = warp(frame, J)
        if color_jitter:
            gain = rng.uniform(0.9, 1.1, size=3)
            offset = rng.uniform(-0.03, 0.03, size=3)
        else:
            gain = np.ones(3)
            offset = np.zeros(3)
        out = np.clip(out * gain + offset, 0.0, 1.0)
        degraded.append(out)
        records.append(JitterRecord(injected=J, inverse=invert_flow(J),
                                    mask=mask.copy(), gain=gain, offset=offset))
    return np.array(degraded), records


def garment_pixel_mask(subject, pose, camera, background, lbs=None):
    """Pixels the garment texels cover (alpha > 0.5 of a garment-only render)."""
    out = render_subject(subject, pose, camera, background, shading=False,
                         texel_mask=subject.garment_mask, lbs=lbs)
    return out.alpha > 0.5


def texel_tracks(subject, pose, camera, lbs=None, depth_tol=0.08):
    """Ground-truth texel reprojection for motion compensation.

    Returns (xy (T, 2) projected pixel coords, visible (T,) bool) over the
    valid texels.  Visibility uses a per-pixel-cell depth buffer with a
    tolerance of `depth_tol` camera units (front surface only).
    """
    if lbs is None:
        lbs = position_map(subject.template, subject.skeleton,
                           subject.weights, pose)
    valid = subject.template.valid
    posed = (np.einsum("tab,tb->ta", lbs.linear[valid],
                       subject.template.positions[valid]) + lbs.offset[valid])
    p_cam = posed @ np.asarray(camera.R).T + np.asarray(camera.t)
    z = p_cam[:, 2]
    u = camera.fx * p_cam[:, 0] / z + camera.cx
    v = camera.fy * p_cam[:, 1] / z + camera.cy
    xy = np.stack([u, v], axis=1)

    inside = (u >= 0) & (u <= camera.width - 1) & \
             (v >= 0) & (v <= camera.height - 1) & (z > 0)
    cell = np.full(u.shape, -1, dtype=np.int64)
    cell[inside] = (np.floor(v[inside]).astype(np.int64) * camera.width
                    + np.floor(u[inside]).astype(np.int64))
    zbuf = np.full(camera.width * camera.height, np.inf)
    np.minimum.at(zbuf, cell[inside], z[inside])
    visible = inside & (z <= zbuf[np.clip(cell, 0, None)] + depth_tol)
    return xy, visible


# ---------------------------------------------------------------------------
# on-disk dataset


def write_dataset(path, seed, views, poses, resolution, subsample, jitter_px,
                  background, color_jitter=True, uv_grid=UV_GRID):
    """Generate and persist the full supervision set; returns the manifest."""
    os.makedirs(path, exist_ok=True)
    rng = np.random.default_rng(seed + 1000003)
    subject = generate_subject(seed, grid=uv_grid)
    cams = ring_cameras(views, resolution)
    pose_list = pose_cycle(poses)
    sub_idx = subsample_poses(poses, subsample)
    bg = np.asarray(background, dtype=np.float64)

    lbs_cache = [position_map(subject.template, subject.skeleton,
                              subject.weights, p) for p in pose_list]
    ideal_colors = tryon_colors(subject, target_garment_spec())

    files = {}

    def put_png(rel, img):
        save_png(os.path.join(path, rel), img)
        files[rel] = True

    def put_tensor(rel, arr):
        save_tensor(os.path.join(path, rel), arr)
        files[rel] = True

    for sub in ("src", "tryon_ideal", "degraded", "jitter", "subject",
                "cameras", "poses"):
        os.makedirs(os.path.join(path, sub), exist_ok=True)

    for p, (pose, lbs) in enumerate(zip(pose_list, lbs_cache)):
        for v, cam in enumerate(cams):
            src = render_subject(subject, pose, cam, bg, lbs=lbs).image
            put_png(f"src/v{v:02d}_p{p:03d}.png", src)
            ideal = render_subject(subject, pose, cam, bg,
                                   colors=ideal_colors, lbs=lbs).image
            put_png(f"tryon_ideal/v{v:02d}_p{p:03d}.png", ideal)

    frame_ids = []
    for p in sub_idx:
        for v, cam in enumerate(cams):
            ideal = load_png(os.path.join(path, f"tryon_ideal/v{v:02d}_p{p:03d}.png"))
            mask = garment_pixel_mask(subject, pose_list[p], cam, bg,
                                      lbs=lbs_cache[p])
            deg, (rec,) = degrade(ideal[None], mask[None], jitter_px, rng,
                                  color_jitter=color_jitter)
            fid = f"v{v:02d}_p{p:03d}"
            frame_ids.append(fid)
            put_png(f"degraded/{fid}.png", deg[0])
            put_tensor(f"jitter/{fid}_injected.tns", rec.injected)
            put_tensor(f"jitter/{fid}_inverse.tns", rec.inverse)
            put_tensor(f"jitter/{fid}_mask.tns", rec.mask)
            put_tensor(f"jitter/{fid}_color.tns",
                       np.concatenate([rec.gain, rec.offset]))

    put_tensor("subject/template_positions.tns", subject.template.positions)
    put_tensor("subject/template_valid.tns", subject.template.valid)
    put_tensor("subject/normals.tns", subject.normals)
    put_tensor("subject/weights.tns", subject.weights)
    put_tensor("subject/gt_rotations.tns", subject.gt_rotations)
    put_tensor("subject/gt_scales.tns", subject.gt_scales)
    put_tensor("subject/gt_opacity.tns", subject.gt_opacity)
    put_tensor("subject/gt_colors.tns", subject.gt_colors)
    put_tensor("subject/garment_mask.tns", subject.garment_mask)
    put_tensor("subject/skeleton_parents.tns", subject.skeleton.parents)
    put_tensor("subject/skeleton_offsets.tns", subject.skeleton.rest_offsets)
    put_tensor("cameras/rotations.tns", np.array([c.R for c in cams]))
    put_tensor("cameras/translations.tns", np.array([c.t for c in cams]))
    put_tensor("poses/rotations.tns",
               np.array([p.rotations for p in pose_list]))
    put_tensor("poses/root_translations.tns",
               np.array([p.root_translation for p in pose_list]))

    hashes = {}
    for rel in sorted(files):
        with open(os.path.join(path, rel), "rb") as fh:
            hashes[rel] = hashlib.sha256(fh.read()).hexdigest()

    manifest = {
        "format": 1,
        "seed": seed,
        "views": views,
        "poses": poses,
        "resolution": resolution,
        "uv_grid": uv_grid,
        "subsample": subsample,
        "subsampled_pose_indices": [int(i) for i in sub_idx],
        "jitter_px": jitter_px,
        "color_jitter": bool(color_jitter),
        "background": [float(b) for b in bg],
        "camera": {"fx": 1.3 * resolution, "fy": 1.3 * resolution,
                   "cx": resolution / 2.0, "cy": resolution / 2.0,
                   "width": resolution, "height": resolution},
        "frames": frame_ids,
        "hashes": hashes,
    }
    with open(os.path.join(path, "meta.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
    return manifest


@dataclass
class Dataset:
    """In-memory view of a dataset directory."""

    path: str
    meta: dict
    subject: Subject
    cameras: list
    poses: list
    sub_idx: np.ndarray
    background: np.ndarray

    def frame_id(self, view, pose_index):
        return f"v{view:02d}_p{pose_index:03d}"

    def source_image(self, view, pose_index):
        return load_png(os.path.join(self.path, "src",
                                     self.frame_id(view, pose_index) + ".png"))

    def ideal_image(self, view, pose_index):
        return load_png(os.path.join(self.path, "tryon_ideal",
                                     self.frame_id(view, pose_index) + ".png"))

    def degraded_image(self, view, pose_index):
        return load_png(os.path.join(self.path, "degraded",
                                     self.frame_id(view, pose_index) + ".png"))

    def jitter_record(self, view, pose_index) -> JitterRecord:
        fid = self.frame_id(view, pose_index)
        base = os.path.join(self.path, "jitter", fid)
        color = load_tensor(base + "_color.tns")
        return JitterRecord(
            injected=load_tensor(base + "_injected.tns"),
            inverse=load_tensor(base + "_inverse.tns"),
            mask=load_tensor(base + "_mask.tns"),
            gain=color[:3], offset=color[3:])


def load_dataset(path) -> Dataset:
    with open(os.path.join(path, "meta.json")) as fh:
        meta = json.load(fh)
    if meta.get("format") != 1:
        raise ValueError("unsupported dataset format")

    def tns(rel):
        return load_tensor(os.path.join(path, rel))

    skel = Skeleton(parents=tns("subject/skeleton_parents.tns"),
                    rest_offsets=tns("subject/skeleton_offsets.tns")).validate()
    template = PositionMap(positions=tns("subject/template_positions.tns"),
                           valid=tns("subject/template_valid.tns"))
    subject = Subject(
        skeleton=skel, weights=tns("subject/weights.tns"), template=template,
        normals=tns("subject/normals.tns"),
        gt_rotations=tns("subject/gt_rotations.tns"),
        gt_scales=tns("subject/gt_scales.tns"),
        gt_opacity=tns("subject/gt_opacity.tns"),
        gt_colors=tns("subject/gt_colors.tns"),
        garment_mask=tns("subject/garment_mask.tns"),
        seed=meta["seed"])

    cam_meta = meta["camera"]
    Rs = tns("cameras/rotations.tns")
    ts = tns("cameras/translations.tns")
    cameras = [Camera(fx=cam_meta["fx"], fy=cam_meta["fy"], cx=cam_meta["cx"],
                      cy=cam_meta["cy"], R=Rs[i], t=ts[i],
                      width=cam_meta["width"], height=cam_meta["height"])
               for i in range(meta["views"])]
    pose_rot = tns("poses/rotations.tns")
    pose_trans = tns("poses/root_translations.tns")
    poses = [Pose(rotations=pose_rot[i], root_translation=pose_trans[i])
             for i in range(meta["poses"])]
    return Dataset(path=path, meta=meta, subject=subject, cameras=cameras,
                   poses=poses,
                   sub_idx=np.array(meta["subsampled_pose_indices"],
                                    dtype=np.int64),
                   background=np.array(meta["background"]))
