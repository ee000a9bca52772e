"""Differentiable point-splat renderer.

Forward: perspective projection of 3D Gaussians to screen-space splats
(first-order covariance transfer), then tile-based front-to-back alpha
compositing.  Backward: exact analytic gradients of the compositing equation
for every splat field, chained through the projection to every primitive
field.  A naive full-sort compositing oracle lives in the test suite and the
tiled path must agree with it to 1e-5 per channel.

Fixed constants (the compositing contract):
  * 2D covariance gets +0.3 px^2 added to its diagonal (anti-alias floor)
  * per-pixel splat weight alpha = opacity * exp(-0.5 * mahalanobis);
    weights below 1/255 are truncated to zero
  * splats are sorted front-to-back by camera depth, ties broken by input
    index (stable), so rendering is invariant to input ordering
  * tiles are 16x16 px; a splat is binned to every tile its support box
    touches, where the support radius is chosen so that any pixel outside
    the box satisfies alpha < 1/255 (hence binning never changes the image)

The per-tile compositing loops are compiled with numba; they iterate each
splat's support box inside the tile in front-to-back order, so work scales
with actual splat coverage rather than tile area.  Everything is
single-threaded and runs in a fixed order, making renders and gradients
bit-reproducible; tiles are independent, so the loops could be farmed out
per tile with per-splat gradient reduction in tile order.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import Camera, GaussianCloud, quat_to_rotmat, quat_to_rotmat_jacobian

TILE_SIZE = 16
COV_DIAG_FLOOR = 0.3
ALPHA_CUTOFF = 1.0 / 255.0
# exp(-0.5 r^2) == ALPHA_CUTOFF at r = sqrt(2 ln 255); outside this radius
# even an opacity-1 splat falls below the cutoff.
SUPPORT_RADIUS = float(np.sqrt(2.0 * np.log(255.0)))
DEFAULT_NEAR = 0.1


@dataclass
class Splat2D:
    """Screen-space footprint of one projected Gaussian."""

    mean: np.ndarray          # (2,) pixels
    covariance2d: np.ndarray  # (2, 2) symmetric PSD, pixels^2
    depth: float              # camera-space z
    opacity: float
    color: np.ndarray         # (3,)


@dataclass
class ProjectedSplats:
    """Struct-of-arrays batch of screen splats (culled primitives removed).

    `source_index[i]` is the row of the input cloud splat i came from.
    """

    means: np.ndarray         # (M, 2)
    covs: np.ndarray          # (M, 2, 2)
    depths: np.ndarray        # (M,)
    opacities: np.ndarray     # (M,)
    colors: np.ndarray        # (M, 3)
    source_index: np.ndarray  # (M,) int

    def __len__(self):
        return self.means.shape[0]

    @classmethod
    def from_list(cls, splats):
        if len(splats) == 0:
            return cls(np.zeros((0, 2)), np.zeros((0, 2, 2)), np.zeros(0),
                       np.zeros(0), np.zeros((0, 3)), np.zeros(0, dtype=np.int64))
        return cls(
            means=np.array([s.mean for s in splats], dtype=np.float64),
            covs=np.array([s.covariance2d for s in splats], dtype=np.float64),
            depths=np.array([s.depth for s in splats], dtype=np.float64),
            opacities=np.array([s.opacity for s in splats], dtype=np.float64),
            colors=np.array([s.color for s in splats], dtype=np.float64),
            source_index=np.arange(len(splats), dtype=np.int64),
        )


@dataclass
class ProjectionContext:
    """Everything the projection backward pass needs."""

    n_input: int
    keep: np.ndarray      # (N,) bool
    cam_R: np.ndarray
    fx: float
    fy: float
    p_cam: np.ndarray     # (M, 3)
    T: np.ndarray         # (M, 2, 3)  J @ R
    J: np.ndarray         # (M, 2, 3)
    Sigma: np.ndarray     # (M, 3, 3)
    A: np.ndarray         # (M, 3, 3)  Rq * diag(scale)
    Rq: np.ndarray        # (M, 3, 3)
    quats: np.ndarray     # (M, 4)
    scales: np.ndarray    # (M, 3)


def project_cloud(cloud: GaussianCloud, cam: Camera, near=DEFAULT_NEAR):
    """Project a cloud to screen splats; primitives behind the near plane are
    culled (a normal outcome, not an error).

    Returns (ProjectedSplats, ProjectionContext).
    """
    R = np.asarray(cam.R, dtype=np.float64)
    t = np.asarray(cam.t, dtype=np.float64)
    if not (np.all(np.isfinite(cloud.positions)) and np.all(np.isfinite(cloud.scales))):
        raise ValueError("non-finite primitive input to project")

    p_cam = cloud.positions @ R.T + t
    keep = p_cam[:, 2] > near
    p_cam = p_cam[keep]
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]

    u = cam.fx * x / z + cam.cx
    v = cam.fy * y / z + cam.cy
    means = np.stack([u, v], axis=1)

    M = p_cam.shape[0]
    J = np.zeros((M, 2, 3))
    J[:, 0, 0] = cam.fx / z
    J[:, 0, 2] = -cam.fx * x / (z * z)
    J[:, 1, 1] = cam.fy / z
    J[:, 1, 2] = -cam.fy * y / (z * z)
    T = J @ R

    quats = cloud.rotations[keep]
    scales = cloud.scales[keep]
    Rq = quat_to_rotmat(quats)
    A = Rq * scales[:, None, :]
    Sigma = A @ np.swapaxes(A, 1, 2)

    covs = T @ Sigma @ np.swapaxes(T, 1, 2)
    covs[:, 0, 0] += COV_DIAG_FLOOR
    covs[:, 1, 1] += COV_DIAG_FLOOR

    splats = ProjectedSplats(
        means=means, covs=covs, depths=z.copy(),
        opacities=cloud.opacities[keep].copy(),
        colors=cloud.colors[keep].copy(),
        source_index=np.nonzero(keep)[0].astype(np.int64),
    )
    ctx = ProjectionContext(
        n_input=len(cloud), keep=keep, cam_R=R, fx=cam.fx, fy=cam.fy,
        p_cam=p_cam, T=T, J=J, Sigma=Sigma, A=A, Rq=Rq,
        quats=quats, scales=scales,
    )
    return splats, ctx


def project_primitive(prim, cam: Camera, near=DEFAULT_NEAR):
    """Project a single primitive; returns a Splat2D, or None when culled."""
    cloud = GaussianCloud.from_primitives([prim])
    splats, _ = project_cloud(cloud, cam, near=near)
    if len(splats) == 0:
        return None
    return Splat2D(mean=splats.means[0], covariance2d=splats.covs[0],
                   depth=float(splats.depths[0]),
                   opacity=float(splats.opacities[0]), color=splats.colors[0])


def project_backward(ctx: ProjectionContext, d_mean, d_cov, d_opacity, d_color):
    """Chain splat-space gradients back to primitive fields.

    Inputs are aligned with the projected (kept) splats; the returned dict is
    aligned with the input cloud, zeros at culled rows.
    """
    keep = ctx.keep
    M = ctx.p_cam.shape[0]
    d_mean = np.asarray(d_mean, dtype=np.float64).reshape(M, 2)
    d_cov = np.asarray(d_cov, dtype=np.float64).reshape(M, 2, 2)

    # mean: du/dp_cam and dv/dp_cam are exactly the rows of J.
    d_p_cam = np.einsum("mij,mi->mj", ctx.J, d_mean)

    # cov = T Σ Tᵀ  (the +0.3 floor is additive, gradient unchanged)
    dC_sym = d_cov + np.swapaxes(d_cov, 1, 2)
    Tt = np.swapaxes(ctx.T, 1, 2)
    d_Sigma = Tt @ d_cov @ ctx.T
    d_T = dC_sym @ ctx.T @ ctx.Sigma
    d_J = d_T @ ctx.cam_R.T

    x, y, z = ctx.p_cam[:, 0], ctx.p_cam[:, 1], ctx.p_cam[:, 2]
    z2 = z * z
    z3 = z2 * z
    d_p_cam[:, 0] += d_J[:, 0, 2] * (-ctx.fx / z2)
    d_p_cam[:, 1] += d_J[:, 1, 2] * (-ctx.fy / z2)
    d_p_cam[:, 2] += (d_J[:, 0, 0] * (-ctx.fx / z2)
                      + d_J[:, 0, 2] * (2.0 * ctx.fx * x / z3)
                      + d_J[:, 1, 1] * (-ctx.fy / z2)
                      + d_J[:, 1, 2] * (2.0 * ctx.fy * y / z3))

    d_pos = d_p_cam @ ctx.cam_R

    # Σ = A Aᵀ with A = Rq diag(s)
    d_A = (d_Sigma + np.swapaxes(d_Sigma, 1, 2)) @ ctx.A
    d_Rq = d_A * ctx.scales[:, None, :]
    d_scale = (d_A * ctx.Rq).sum(axis=1)
    dR_dq = quat_to_rotmat_jacobian(ctx.quats)
    d_quat = (d_Rq.reshape(M, 1, 9) @ dR_dq.reshape(M, 9, 4)).reshape(M, 4)

    grads = {
        "positions": np.zeros((ctx.n_input, 3)),
        "rotations": np.zeros((ctx.n_input, 4)),
        "scales": np.zeros((ctx.n_input, 3)),
        "opacities": np.zeros(ctx.n_input),
        "colors": np.zeros((ctx.n_input, 3)),
    }
    grads["positions"][keep] = d_pos
    grads["rotations"][keep] = d_quat
    grads["scales"][keep] = d_scale
    grads["opacities"][keep] = np.asarray(d_opacity, dtype=np.float64).reshape(M)
    grads["colors"][keep] = np.asarray(d_color, dtype=np.float64).reshape(M, 3)
    return grads


# ---------------------------------------------------------------------------
# tile-based compositing kernels


@njit(cache=True)
def _forward_kernel(tile_starts, pair_owner, ntx, H, W,
                    means, conics, opacities, colors, maha_cut,
                    bx0, bx1, by0, by1, background, image, alpha_map):
    for tid in range(tile_starts.shape[0] - 1):
        lo, hi = tile_starts[tid], tile_starts[tid + 1]
        ty = tid // ntx
        tx = tid - ty * ntx
        y0t = ty * TILE_SIZE
        x0t = tx * TILE_SIZE
        h = min(TILE_SIZE, H - y0t)
        w = min(TILE_SIZE, W - x0t)
        T_loc = np.ones((h, w))
        for k in range(lo, hi):
            s = pair_owner[k]
            ox, cy0 = means[s, 0], means[s, 1]
            ca, cb, cc = conics[s, 0], conics[s, 1], conics[s, 2]
            op = opacities[s]
            cut = maha_cut[s] + 1e-9
            r0 = max(by0[s], y0t)
            r1 = min(by1[s], y0t + h - 1)
            c0 = max(bx0[s], x0t)
            c1 = min(bx1[s], x0t + w - 1)
            for gy in range(r0, r1 + 1):
                dy = gy + 0.5 - cy0
                ly = gy - y0t
                for gx in range(c0, c1 + 1):
                    T = T_loc[ly, gx - x0t]
                    if T <= 0.0:
                        continue
                    dx = gx + 0.5 - ox
                    maha = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                    if maha > cut:
                        continue
                    a = op * np.exp(-0.5 * maha)
                    if a < ALPHA_CUTOFF:
                        continue
                    wgt = a * T
                    image[gy, gx, 0] += wgt * colors[s, 0]
                    image[gy, gx, 1] += wgt * colors[s, 1]
                    image[gy, gx, 2] += wgt * colors[s, 2]
                    T_loc[ly, gx - x0t] = T * (1.0 - a)
        for ly in range(h):
            for lx in range(w):
                T = T_loc[ly, lx]
                image[y0t + ly, x0t + lx, 0] += T * background[0]
                image[y0t + ly, x0t + lx, 1] += T * background[1]
                image[y0t + ly, x0t + lx, 2] += T * background[2]
                alpha_map[y0t + ly, x0t + lx] = 1.0 - T


@njit(cache=True)
def _backward_kernel(tile_starts, pair_owner, ntx, H, W,
                     means, conics, opacities, colors, maha_cut,
                     bx0, bx1, by0, by1, d_image, pixelg,
                     d_mean, d_conic, d_op, d_col):
    for tid in range(tile_starts.shape[0] - 1):
        lo, hi = tile_starts[tid], tile_starts[tid + 1]
        if lo == hi:
            continue
        ty = tid // ntx
        tx = tid - ty * ntx
        y0t = ty * TILE_SIZE
        x0t = tx * TILE_SIZE
        h = min(TILE_SIZE, H - y0t)
        w = min(TILE_SIZE, W - x0t)
        T_loc = np.ones((h, w))
        prefix = np.zeros((h, w))
        for k in range(lo, hi):
            s = pair_owner[k]
            ox, oy = means[s, 0], means[s, 1]
            ca, cb, cc = conics[s, 0], conics[s, 1], conics[s, 2]
            op = opacities[s]
            cut = maha_cut[s] + 1e-9
            r0 = max(by0[s], y0t)
            r1 = min(by1[s], y0t + h - 1)
            c0 = max(bx0[s], x0t)
            c1 = min(bx1[s], x0t + w - 1)
            for gy in range(r0, r1 + 1):
                dy = gy + 0.5 - oy
                ly = gy - y0t
                for gx in range(c0, c1 + 1):
                    lx = gx - x0t
                    T = T_loc[ly, lx]
                    if T <= 0.0:
                        continue
                    dx = gx + 0.5 - ox
                    maha = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                    if maha > cut:
                        continue
                    G = np.exp(-0.5 * maha)
                    a = op * G
                    if a < ALPHA_CUTOFF:
                        continue
                    g0 = d_image[gy, gx, 0]
                    g1 = d_image[gy, gx, 1]
                    g2 = d_image[gy, gx, 2]
                    cg = colors[s, 0] * g0 + colors[s, 1] * g1 + colors[s, 2] * g2
                    wgt = a * T
                    contrib = wgt * cg
                    om = 1.0 - a
                    # suffix composite behind this splat, per the forward sum
                    if om > 0.0:
                        behind = (pixelg[gy, gx] - prefix[ly, lx] - contrib) / om
                        d_a = T * cg - behind
                    else:
                        d_a = T * cg
                    d_col[s, 0] += wgt * g0
                    d_col[s, 1] += wgt * g1
                    d_col[s, 2] += wgt * g2
                    d_op[s] += d_a * G
                    dm = -0.5 * G * (d_a * op)
                    d_mean[s, 0] += dm * -(2.0 * ca * dx + 2.0 * cb * dy)
                    d_mean[s, 1] += dm * -(2.0 * cb * dx + 2.0 * cc * dy)
                    d_conic[s, 0] += dm * dx * dx
                    d_conic[s, 1] += dm * 2.0 * dx * dy
                    d_conic[s, 2] += dm * dy * dy
                    prefix[ly, lx] += contrib
                    T_loc[ly, lx] = T * om


@dataclass
class _RasterAux:
    order: np.ndarray       # sorted-rank -> input index
    means: np.ndarray       # sorted
    conics: np.ndarray      # sorted, packed (a, b, c)
    opacities: np.ndarray   # sorted
    colors: np.ndarray      # sorted
    maha_cut: np.ndarray
    boxes: tuple            # (bx0, bx1, by0, by1) pixel support boxes
    tile_starts: np.ndarray
    pair_owner: np.ndarray
    ntx: int
    height: int
    width: int
    background: np.ndarray


@dataclass
class RenderOutput:
    image: np.ndarray  # (H, W, 3)
    alpha: np.ndarray  # (H, W) coverage in [0, 1]
    aux: object        # contribution records for the backward pass


def _support_boxes(means, covs, width, height):
    """Inclusive pixel-index boxes covering each splat's support: any pixel
    outside has mahalanobis > SUPPORT_RADIUS^2, hence alpha < 1/255."""
    rx = SUPPORT_RADIUS * np.sqrt(covs[:, 0, 0])
    ry = SUPPORT_RADIUS * np.sqrt(covs[:, 1, 1])
    bx0 = np.ceil(means[:, 0] - rx - 0.5).astype(np.int64)
    bx1 = np.floor(means[:, 0] + rx - 0.5).astype(np.int64)
    by0 = np.ceil(means[:, 1] - ry - 0.5).astype(np.int64)
    by1 = np.floor(means[:, 1] + ry - 0.5).astype(np.int64)
    bx0 = np.clip(bx0, 0, width - 1)
    by0 = np.clip(by0, 0, height - 1)
    bx1 = np.clip(bx1, -1, width - 1)
    by1 = np.clip(by1, -1, height - 1)
    return bx0, bx1, by0, by1


def _bin_pairs(bx0, bx1, by0, by1, width, height):
    """(tile_starts, pair_owner) with owners in depth order inside each tile."""
    ntx = (width + TILE_SIZE - 1) // TILE_SIZE
    nty = (height + TILE_SIZE - 1) // TILE_SIZE
    tx0 = bx0 // TILE_SIZE
    tx1 = bx1 // TILE_SIZE
    ty0 = by0 // TILE_SIZE
    ty1 = by1 // TILE_SIZE
    nx = np.maximum(tx1 - tx0 + 1, 0)
    ny = np.maximum(ty1 - ty0 + 1, 0)
    empty = (bx1 < bx0) | (by1 < by0)
    nx[empty] = 0
    ny[empty] = 0
    counts = nx * ny
    total = int(counts.sum())
    if total == 0:
        return (np.zeros(ntx * nty + 1, dtype=np.int64),
                np.zeros(0, dtype=np.int64), ntx)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    owner = np.repeat(np.arange(counts.shape[0]), counts)
    local = np.arange(total) - offsets[owner]
    lx = local % nx[owner]
    ly = local // nx[owner]
    tile_id = (ty0[owner] + ly) * ntx + (tx0[owner] + lx)
    pair_order = np.lexsort((owner, tile_id))
    tile_id = tile_id[pair_order]
    owner = owner[pair_order]
    tile_starts = np.searchsorted(tile_id, np.arange(ntx * nty + 1))
    return tile_starts.astype(np.int64), owner.astype(np.int64), ntx


def rasterize(splats, cam: Camera, background) -> RenderOutput:
    """Front-to-back alpha compositing of screen splats over a constant
    background.  Accepts a ProjectedSplats batch or a list of Splat2D.
    """
    if not isinstance(splats, ProjectedSplats):
        splats = ProjectedSplats.from_list(list(splats))
    background = np.ascontiguousarray(background, dtype=np.float64).reshape(3)
    H, W = cam.height, cam.width

    for name, arr in (("means", splats.means), ("covs", splats.covs),
                      ("depths", splats.depths), ("opacities", splats.opacities),
                      ("colors", splats.colors)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite splat field: {name}")

    image = np.zeros((H, W, 3))
    alpha_map = np.zeros((H, W))

    order = np.argsort(splats.depths, kind="stable")
    means = np.ascontiguousarray(splats.means[order])
    covs = splats.covs[order]
    opacities = np.ascontiguousarray(splats.opacities[order])
    colors = np.ascontiguousarray(splats.colors[order])

    if len(splats):
        det = covs[:, 0, 0] * covs[:, 1, 1] - covs[:, 0, 1] * covs[:, 1, 0]
        if np.any(det <= 0):
            raise ValueError("degenerate 2D covariance (det <= 0)")
        conics = np.ascontiguousarray(
            np.stack([covs[:, 1, 1] / det, -covs[:, 0, 1] / det,
                      covs[:, 0, 0] / det], axis=1))
        with np.errstate(divide="ignore"):
            maha_cut = 2.0 * np.log(255.0 * opacities)  # alpha cutoff radius
        bx0, bx1, by0, by1 = _support_boxes(means, covs, W, H)
        tile_starts, pair_owner, ntx = _bin_pairs(bx0, bx1, by0, by1, W, H)
    else:
        conics = np.zeros((0, 3))
        maha_cut = np.zeros(0)
        bx0 = bx1 = by0 = by1 = np.zeros(0, dtype=np.int64)
        ntx = (W + TILE_SIZE - 1) // TILE_SIZE
        nty = (H + TILE_SIZE - 1) // TILE_SIZE
        tile_starts = np.zeros(ntx * nty + 1, dtype=np.int64)
        pair_owner = np.zeros(0, dtype=np.int64)

    _forward_kernel(tile_starts, pair_owner, ntx, H, W, means, conics,
                    opacities, colors, maha_cut, bx0, bx1, by0, by1,
                    background, image, alpha_map)

    aux = _RasterAux(order=order, means=means, conics=conics,
                     opacities=opacities, colors=colors, maha_cut=maha_cut,
                     boxes=(bx0, bx1, by0, by1), tile_starts=tile_starts,
                     pair_owner=pair_owner, ntx=ntx, height=H, width=W,
                     background=background)
    return RenderOutput(image=image, alpha=alpha_map, aux=aux)


def rasterize_backward(output: RenderOutput, d_image):
    """Exact gradients of the compositing equation.

    Given dL/dimage, returns (d_mean (M,2), d_cov (M,2,2), d_opacity (M,),
    d_color (M,3)) aligned with the splat batch passed to rasterize.
    Truncated contributions (alpha < 1/255) carry exactly zero gradient.
    """
    aux = output.aux
    if aux is None or not isinstance(aux, _RasterAux):
        raise ValueError("rasterize_backward requires the forward aux records")
    d_image = np.ascontiguousarray(d_image, dtype=np.float64)
    if d_image.shape != (aux.height, aux.width, 3):
        raise ValueError("d_image shape mismatch")

    M = aux.means.shape[0]
    d_mean_s = np.zeros((M, 2))
    d_conic_s = np.zeros((M, 3))
    d_op_s = np.zeros(M)
    d_col_s = np.zeros((M, 3))
    if M:
        pixelg = np.einsum("hwc,hwc->hw", output.image, d_image)
        bx0, bx1, by0, by1 = aux.boxes
        _backward_kernel(aux.tile_starts, aux.pair_owner, aux.ntx, aux.height,
                         aux.width, aux.means, aux.conics, aux.opacities,
                         aux.colors, aux.maha_cut, bx0, bx1, by0, by1,
                         d_image, np.ascontiguousarray(pixelg),
                         d_mean_s, d_conic_s, d_op_s, d_col_s)

    # conic = inv(cov): dL/dcov = -Q (dL/dQ) Q with Q symmetric.
    d_cov_s = np.zeros((M, 2, 2))
    if M:
        Q = np.empty((M, 2, 2))
        Q[:, 0, 0] = aux.conics[:, 0]
        Q[:, 0, 1] = Q[:, 1, 0] = aux.conics[:, 1]
        Q[:, 1, 1] = aux.conics[:, 2]
        dQ = np.empty((M, 2, 2))
        dQ[:, 0, 0] = d_conic_s[:, 0]
        dQ[:, 0, 1] = dQ[:, 1, 0] = 0.5 * d_conic_s[:, 1]
        dQ[:, 1, 1] = d_conic_s[:, 2]
        d_cov_s = -Q @ dQ @ Q

    # scatter from sorted rank back to input order
    d_mean = np.zeros((M, 2))
    d_cov = np.zeros((M, 2, 2))
    d_op = np.zeros(M)
    d_col = np.zeros((M, 3))
    d_mean[aux.order] = d_mean_s
    d_cov[aux.order] = d_cov_s
    d_op[aux.order] = d_op_s
    d_col[aux.order] = d_col_s
    return d_mean, d_cov, d_op, d_col


def render(cloud: GaussianCloud, cam: Camera, background, near=DEFAULT_NEAR):
    """Project + rasterize. Returns (RenderOutput, projection context)."""
    splats, ctx = project_cloud(cloud, cam, near=near)
    out = rasterize(splats, cam, background)
    return out, ctx


def render_backward(out: RenderOutput, ctx: ProjectionContext, d_image):
    """dL/dimage -> gradients for every field of the input cloud."""
    d_mean, d_cov, d_op, d_col = rasterize_backward(out, d_image)
    return project_backward(ctx, d_mean, d_cov, d_op, d_col)
