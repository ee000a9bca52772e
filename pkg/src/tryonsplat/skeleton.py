"""Minimal kinematic chain: forward kinematics, Linear Blend Skinning, and
pose-driven position maps over the template UV grid.

The rest pose is the canonical pose (all joint rotations identity, zero root
translation); skinning transforms are expressed relative to the rest-pose
joint frames, so the canonical pose maps every texel to itself exactly.
"""

from dataclasses import dataclass

import numpy as np

from .core import polar_rotation, quat_normalize, quat_to_rotmat, rotmat_to_quat


@dataclass
class Skeleton:
    """parents[j] is the parent joint index (-1 for the root, joint 0);
    rest_offsets[j] is the offset from the parent in the rest pose (the root
    offset is its absolute rest position)."""

    parents: np.ndarray      # (J,) int
    rest_offsets: np.ndarray  # (J, 3)

    @property
    def joint_count(self):
        return len(self.parents)

    def validate(self):
        parents = np.asarray(self.parents)
        if parents[0] != -1:
            raise ValueError("joint 0 must be the root (parent -1)")
        for j in range(1, len(parents)):
            if not 0 <= parents[j] < j:
                raise ValueError(
                    "parents must reference earlier joints (forest rooted at 0)")
        return self


@dataclass
class Pose:
    """Per-joint local rotations (unit quaternions) plus a root translation."""

    rotations: np.ndarray        # (J, 4)
    root_translation: np.ndarray  # (3,)

    @classmethod
    def identity(cls, joint_count):
        q = np.zeros((joint_count, 4))
        q[:, 0] = 1.0
        return cls(rotations=q, root_translation=np.zeros(3))

    def validate(self):
        norms = np.linalg.norm(self.rotations, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("pose quaternions must have unit norm")
        return self


@dataclass
class PositionMap:
    """UV grid of 3D positions with a validity mask; invalid texels are
    excluded from every downstream computation."""

    positions: np.ndarray  # (H, W, 3)
    valid: np.ndarray      # (H, W) bool

    @property
    def shape(self):
        return self.valid.shape

    def valid_positions(self):
        return self.positions[self.valid]


def check_skin_weights(weights, valid):
    """Weights are (H, W, J); each valid texel's row must be a convex
    combination (non-negative, summing to 1 within 1e-6)."""
    w = np.asarray(weights)
    if np.any(w < 0):
        raise ValueError("skin weights must be non-negative")
    sums = w[valid].sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValueError("skin weights of valid texels must sum to 1")
    return w


def forward_kinematics(skel: Skeleton, pose: Pose):
    """World transform of every joint under the pose.

    Returns (R, t) with R (J, 3, 3) and t (J, 3); joint j maps local points p
    to R[j] @ p + t[j].  The root composes its rest offset, the pose's root
    translation and its local rotation; children chain parent ∘ local.
    """
    J = skel.joint_count
    R_local = quat_to_rotmat(pose.rotations)
    R = np.empty((J, 3, 3))
    t = np.empty((J, 3))
    R[0] = R_local[0]
    t[0] = skel.rest_offsets[0] + pose.root_translation
    for j in range(1, J):
        p = skel.parents[j]
        R[j] = R[p] @ R_local[j]
        t[j] = R[p] @ skel.rest_offsets[j] + t[p]
    return R, t


def rest_joint_positions(skel: Skeleton):
    """Joint positions in the rest pose (cumulative rest offsets)."""
    J = skel.joint_count
    pos = np.empty((J, 3))
    pos[0] = skel.rest_offsets[0]
    for j in range(1, J):
        pos[j] = pos[skel.parents[j]] + skel.rest_offsets[j]
    return pos


def deform_transforms(skel: Skeleton, pose: Pose):
    """Per-joint rigid transforms relative to the rest pose.

    A_j maps rest-pose world points to posed world points:
    A_j(p) = R_j @ (p - rest_j) + t_j, returned as (R (J,3,3), b (J,3)) with
    b = t_j - R_j @ rest_j.  Identity pose gives R = I, b = 0 exactly.
    """
    R, t = forward_kinematics(skel, pose)
    rest = rest_joint_positions(skel)
    b = t - np.einsum("jab,jb->ja", R, rest)
    return R, b


@dataclass
class LbsResult:
    posed: PositionMap
    linear: np.ndarray      # (H, W, 3, 3) blended linear map acting on points
    offset: np.ndarray      # (H, W, 3)
    blend_rot: np.ndarray   # (H, W, 3, 3) polar-orthonormalized rotation
    blend_quat: np.ndarray  # (H, W, 4)


def lbs_transform(points: PositionMap, weights, joint_R, joint_b) -> LbsResult:
    """Skin a position map: posed = Σ_j w_j (R_j p + b_j) per valid texel.

    Evaluated in delta form, posed = p + Σ_j w_j ((R_j - I) p + b_j), which
    is the same map for unit-sum weights but stays bitwise-exact at the
    identity pose regardless of weight-normalization rounding.

    Also returns the per-texel blended rotation used to carry Gaussian
    orientations through the pose: the weight-blended rotation matrix
    re-orthonormalized by polar decomposition (exactly the single joint
    rotation wherever one weight is 1).
    """
    H, W = points.shape
    w = np.asarray(weights)
    if w.shape[:2] != (H, W):
        raise ValueError(
            f"weight grid {w.shape[:2]} does not match position grid {(H, W)}")
    check_skin_weights(w, points.valid)

    valid = points.valid
    wv = w[valid]                                   # (T, J)
    M_delta = np.einsum("tj,jab->tab", wv, joint_R - np.eye(3))
    M = M_delta + np.eye(3)                         # (T, 3, 3)
    off = wv @ joint_b                              # (T, 3)
    delta = np.einsum("tab,tb->ta", M_delta, points.positions[valid])
    posed_v = points.positions[valid] + delta + off

    Rb = polar_rotation(M)

    posed = np.zeros_like(points.positions)
    posed[valid] = posed_v
    linear = np.zeros((H, W, 3, 3))
    linear[valid] = M
    offset = np.zeros((H, W, 3))
    offset[valid] = off
    blend_rot = np.broadcast_to(np.eye(3), (H, W, 3, 3)).copy()
    blend_rot[valid] = Rb
    blend_quat = np.zeros((H, W, 4))
    blend_quat[..., 0] = 1.0
    blend_quat[valid] = rotmat_to_quat(Rb)
    return LbsResult(
        posed=PositionMap(positions=posed, valid=valid.copy()),
        linear=linear, offset=offset, blend_rot=blend_rot, blend_quat=blend_quat)


def position_map(template: PositionMap, skel: Skeleton, weights, pose: Pose) -> LbsResult:
    """Pose-driven position map: LBS applied to the canonical template."""
    R, b = deform_transforms(skel, pose.validate())
    return lbs_transform(template, weights, R, b)


def slerp_pose(a: Pose, b: Pose, t):
    """Spherical interpolation between poses (for novel in-between poses)."""
    qa, qb = a.rotations, b.rotations.copy()
    dot = np.sum(qa * qb, axis=1)
    qb[dot < 0] *= -1.0
    dot = np.abs(dot)
    out = np.empty_like(qa)
    for j in range(qa.shape[0]):
        d = min(dot[j], 1.0)
        theta = np.arccos(d)
        if theta < 1e-8:
            out[j] = qa[j] + t * (qb[j] - qa[j])
        else:
            out[j] = (np.sin((1 - t) * theta) * qa[j]
                      + np.sin(t * theta) * qb[j]) / np.sin(theta)
    return Pose(rotations=quat_normalize(out),
                root_translation=(1 - t) * a.root_translation + t * b.root_translation)
