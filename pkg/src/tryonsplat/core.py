"""Core math types shared by every stage: Gaussian primitives, cameras,
images, and the quaternion / covariance algebra they require.

Conventions (asserted in the test suite):
  * quaternions are (w, x, y, z), unit norm for valid primitives
  * all arithmetic is float64; 8-bit quantization happens only at PNG export
  * images are (H, W, 3) arrays with values in [0, 1]
  * flow fields are (H, W, 2) arrays of per-pixel (dx, dy) in pixels
"""

from dataclasses import dataclass

import numpy as np

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def _require_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


def quat_to_rotmat(q):
    """Rotation matrix from a (w, x, y, z) quaternion.

    Accepts a single quaternion (4,) or a batch (..., 4).  Uses the unit
    polynomial form, so R(q) == R(-q) exactly (double cover).
    """
    q = np.asarray(q, dtype=np.float64)
    _require_finite("quaternion", q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    R = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    R[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    R[..., 0, 1] = 2.0 * (xy - wz)
    R[..., 0, 2] = 2.0 * (xz + wy)
    R[..., 1, 0] = 2.0 * (xy + wz)
    R[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    R[..., 1, 2] = 2.0 * (yz - wx)
    R[..., 2, 0] = 2.0 * (xz - wy)
    R[..., 2, 1] = 2.0 * (yz + wx)
    R[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return R


def quat_to_rotmat_jacobian(q):
    """Derivative of the rotation-matrix formula wrt the raw quaternion.

    Returns shape (..., 3, 3, 4): J[..., i, j, k] = dR[i, j] / dq[k].
    This differentiates the polynomial form literally (no renormalization),
    matching finite differences of :func:`quat_to_rotmat`.
    """
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    zero = np.zeros_like(w)
    J = np.empty(q.shape[:-1] + (3, 3, 4), dtype=np.float64)
    # row 0
    J[..., 0, 0, :] = np.stack([zero, zero, -4 * y, -4 * z], axis=-1)
    J[..., 0, 1, :] = np.stack([-2 * z, 2 * y, 2 * x, -2 * w], axis=-1)
    J[..., 0, 2, :] = np.stack([2 * y, 2 * z, 2 * w, 2 * x], axis=-1)
    # row 1
    J[..., 1, 0, :] = np.stack([2 * z, 2 * y, 2 * x, 2 * w], axis=-1)
    J[..., 1, 1, :] = np.stack([zero, -4 * x, zero, -4 * z], axis=-1)
    J[..., 1, 2, :] = np.stack([-2 * x, -2 * w, 2 * z, 2 * y], axis=-1)
    # row 2
    J[..., 2, 0, :] = np.stack([-2 * y, 2 * z, -2 * w, 2 * x], axis=-1)
    J[..., 2, 1, :] = np.stack([2 * x, 2 * w, 2 * z, 2 * y], axis=-1)
    J[..., 2, 2, :] = np.stack([zero, -4 * x, -4 * y, zero], axis=-1)
    return J


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_normalize_backward(q_raw, grad_unit):
    """Backward of q -> q/|q|: projects the gradient onto the tangent space."""
    q_raw = np.asarray(q_raw, dtype=np.float64)
    n = np.linalg.norm(q_raw, axis=-1, keepdims=True)
    u = q_raw / n
    dot = np.sum(grad_unit * u, axis=-1, keepdims=True)
    return (grad_unit - dot * u) / n


def quat_multiply(a, b):
    """Hamilton product a ⊗ b, both (..., 4) in (w, x, y, z) order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_multiply_left_matrix(a):
    """Matrix L(a) with L(a) @ b == quat_multiply(a, b); used to route
    gradients through a product with a fixed left factor."""
    a = np.asarray(a, dtype=np.float64)
    w, x, y, z = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    L = np.empty(a.shape[:-1] + (4, 4), dtype=np.float64)
    L[..., 0, :] = np.stack([w, -x, -y, -z], axis=-1)
    L[..., 1, :] = np.stack([x, w, -z, y], axis=-1)
    L[..., 2, :] = np.stack([y, z, w, -x], axis=-1)
    L[..., 3, :] = np.stack([z, -y, x, w], axis=-1)
    return L


def rotmat_to_quat(R):
    """Unit quaternion (w, x, y, z) from a rotation matrix, w >= 0 branch."""
    R = np.asarray(R, dtype=np.float64)
    single = R.ndim == 2
    if single:
        R = R[None]
    m00, m11, m22 = R[:, 0, 0], R[:, 1, 1], R[:, 2, 2]
    q = np.empty((R.shape[0], 4), dtype=np.float64)
    # Shepperd's method: pick the largest diagonal combination per matrix.
    t0 = 1.0 + m00 + m11 + m22
    t1 = 1.0 + m00 - m11 - m22
    t2 = 1.0 - m00 + m11 - m22
    t3 = 1.0 - m00 - m11 + m22
    choice = np.argmax(np.stack([t0, t1, t2, t3], axis=1), axis=1)
    for i in range(R.shape[0]):
        c = choice[i]
        r = R[i]
        if c == 0:
            s = np.sqrt(t0[i]) * 2.0
            q[i] = [0.25 * s, (r[2, 1] - r[1, 2]) / s,
                    (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        elif c == 1:
            s = np.sqrt(t1[i]) * 2.0
            q[i] = [(r[2, 1] - r[1, 2]) / s, 0.25 * s,
                    (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        elif c == 2:
            s = np.sqrt(t2[i]) * 2.0
            q[i] = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s,
                    0.25 * s, (r[1, 2] + r[2, 1]) / s]
        else:
            s = np.sqrt(t3[i]) * 2.0
            q[i] = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s,
                    (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    q[q[:, 0] < 0] *= -1.0
    q = quat_normalize(q)
    return q[0] if single else q


def covariance3d(scale, q):
    """Σ = R · diag(s)² · Rᵀ for per-axis extents s and orientation q.

    Accepts single (3,), (4,) inputs or batches (..., 3), (..., 4).
    Raises on non-positive scales.
    """
    scale = np.asarray(scale, dtype=np.float64)
    if np.any(scale <= 0):
        raise ValueError("scale components must be strictly positive")
    R = quat_to_rotmat(q)
    A = R * scale[..., None, :]
    return A @ np.swapaxes(A, -1, -2)


def polar_rotation(M):
    """Nearest rotation matrix to M (batched), via SVD with det correction."""
    M = np.asarray(M, dtype=np.float64)
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    det = np.linalg.det(R)
    neg = det < 0
    if np.any(neg):
        U = U.copy()
        U[neg, :, -1] *= -1.0
        R = U @ Vt
    return R


@dataclass
class GaussianPrimitive:
    """One anisotropic Gaussian: the unit every renderer stage consumes.

    position: (3,) world/canonical units
    rotation: (4,) unit quaternion (w, x, y, z)
    scale:    (3,) strictly positive per-axis extents
    opacity:  scalar in [0, 1]
    color:    (3,) RGB in [0, 1]; a single view-independent value per
              primitive (zero-order harmonics only)
    """

    position: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    opacity: float
    color: np.ndarray

    def validate(self):
        _require_finite("position", self.position)
        _require_finite("rotation", self.rotation)
        if abs(np.linalg.norm(self.rotation) - 1.0) > 1e-6:
            raise ValueError("rotation quaternion must have unit norm")
        if np.any(np.asarray(self.scale) <= 0):
            raise ValueError("scale components must be > 0")
        if not (0.0 <= self.opacity <= 1.0):
            raise ValueError("opacity must lie in [0, 1]")
        c = np.asarray(self.color)
        if np.any(c < 0) or np.any(c > 1):
            raise ValueError("color channels must lie in [0, 1]")
        return self


@dataclass
class GaussianCloud:
    """Struct-of-arrays batch of Gaussian primitives.

    positions (N, 3), rotations (N, 4), scales (N, 3), opacities (N,),
    colors (N, 3).  Same invariants as GaussianPrimitive, per row.
    """

    positions: np.ndarray
    rotations: np.ndarray
    scales: np.ndarray
    opacities: np.ndarray
    colors: np.ndarray

    def __len__(self):
        return self.positions.shape[0]

    def primitive(self, i) -> GaussianPrimitive:
        return GaussianPrimitive(
            position=self.positions[i].copy(),
            rotation=self.rotations[i].copy(),
            scale=self.scales[i].copy(),
            opacity=float(self.opacities[i]),
            color=self.colors[i].copy(),
        )

    @classmethod
    def from_primitives(cls, prims):
        return cls(
            positions=np.array([p.position for p in prims], dtype=np.float64).reshape(-1, 3),
            rotations=np.array([p.rotation for p in prims], dtype=np.float64).reshape(-1, 4),
            scales=np.array([p.scale for p in prims], dtype=np.float64).reshape(-1, 3),
            opacities=np.array([p.opacity for p in prims], dtype=np.float64).reshape(-1),
            colors=np.array([p.color for p in prims], dtype=np.float64).reshape(-1, 3),
        )

    def validate(self):
        for name in ("positions", "rotations", "scales", "opacities", "colors"):
            _require_finite(name, getattr(self, name))
        norms = np.linalg.norm(self.rotations, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("all rotation quaternions must have unit norm")
        if np.any(self.scales <= 0):
            raise ValueError("all scales must be > 0")
        if np.any(self.opacities < 0) or np.any(self.opacities > 1):
            raise ValueError("opacities must lie in [0, 1]")
        if np.any(self.colors < 0) or np.any(self.colors > 1):
            raise ValueError("colors must lie in [0, 1]")
        return self


@dataclass
class Camera:
    """Pinhole camera: x_cam = R @ x_world + t, pixel = (fx·x/z + cx, fy·y/z + cy).

    Pixel (row i, col j) samples the image plane at (j + 0.5, i + 0.5).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray  # (3, 3) world-to-camera rotation
    t: np.ndarray  # (3,) world-to-camera translation
    width: int
    height: int

    def validate(self):
        R = np.asarray(self.R)
        if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-6:
            raise ValueError("camera rotation must be orthonormal")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1 pixel")
        _require_finite("camera extrinsics", self.t)
        return self

    def position(self):
        """Camera center in world coordinates: -Rᵀ t."""
        return -np.asarray(self.R).T @ np.asarray(self.t)

    def view_axis(self):
        """Unit optical axis in world coordinates (the direction the camera
        looks along); this is the viewpoint vector fed to the offset network."""
        return np.asarray(self.R, dtype=np.float64)[2, :].copy()

    @classmethod
    def look_at(cls, eye, target, up, fx, fy, width, height):
        """Camera at `eye` looking toward `target` (right-handed, z forward)."""
        eye = np.asarray(eye, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        up = np.asarray(up, dtype=np.float64)
        fwd = target - eye
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, up)
        right = right / np.linalg.norm(right)
        down = np.cross(fwd, right)
        R = np.stack([right, down, fwd], axis=0)
        t = -R @ eye
        return cls(fx=float(fx), fy=float(fy), cx=width / 2.0, cy=height / 2.0,
                   R=R, t=t, width=int(width), height=int(height)).validate()


def check_image(img, name="image"):
    """Validate an (H, W, 3) float image; returns the array unchanged."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {img.shape}")
    _require_finite(name, img)
    return img


def check_flow(flow, height, width, name="flow"):
    flow = np.asarray(flow)
    if flow.shape != (height, width, 2):
        raise ValueError(
            f"{name} must have shape ({height}, {width}, 2), got {flow.shape}")
    _require_finite(name, flow)
    return flow
