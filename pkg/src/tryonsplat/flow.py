"""Per-frame learnable rectification flows: differentiable bilinear warping
and the flow smoothness/magnitude regularizer.

Sign convention (backward warping): output(x, y) samples the input image at
(x + dx, y + dy), so a flow field aligns the stored frame onto the render it
is compared against.  Samples outside the image clamp to the border pixel.
Flows start at exactly zero, which makes the warp the bitwise identity.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import check_flow, check_image


@njit(cache=True)
def _warp_kernel(img, flow, out):
    H, W, C = img.shape
    for y in range(H):
        for x in range(W):
            sx = x + flow[y, x, 0]
            sy = y + flow[y, x, 1]
            sxc = min(max(sx, 0.0), W - 1.0)
            syc = min(max(sy, 0.0), H - 1.0)
            x0 = int(np.floor(sxc))
            y0 = int(np.floor(syc))
            x1 = min(x0 + 1, W - 1)
            y1 = min(y0 + 1, H - 1)
            fx = sxc - x0
            fy = syc - y0
            w00 = (1.0 - fx) * (1.0 - fy)
            w01 = fx * (1.0 - fy)
            w10 = (1.0 - fx) * fy
            w11 = fx * fy
            for c in range(C):
                out[y, x, c] = (w00 * img[y0, x0, c] + w01 * img[y0, x1, c]
                                + w10 * img[y1, x0, c] + w11 * img[y1, x1, c])


@njit(cache=True)
def _warp_backward_kernel(img, flow, d_out, d_img, d_flow, need_img):
    H, W, C = img.shape
    for y in range(H):
        for x in range(W):
            sx = x + flow[y, x, 0]
            sy = y + flow[y, x, 1]
            sxc = min(max(sx, 0.0), W - 1.0)
            syc = min(max(sy, 0.0), H - 1.0)
            x0 = int(np.floor(sxc))
            y0 = int(np.floor(syc))
            x1 = min(x0 + 1, W - 1)
            y1 = min(y0 + 1, H - 1)
            fx = sxc - x0
            fy = syc - y0
            w00 = (1.0 - fx) * (1.0 - fy)
            w01 = fx * (1.0 - fy)
            w10 = (1.0 - fx) * fy
            w11 = fx * fy
            gx = 0.0
            gy = 0.0
            for c in range(C):
                g = d_out[y, x, c]
                if need_img:
                    d_img[y0, x0, c] += w00 * g
                    d_img[y0, x1, c] += w01 * g
                    d_img[y1, x0, c] += w10 * g
                    d_img[y1, x1, c] += w11 * g
                gx += g * ((1.0 - fy) * (img[y0, x1, c] - img[y0, x0, c])
                           + fy * (img[y1, x1, c] - img[y1, x0, c]))
                gy += g * ((1.0 - fx) * (img[y1, x0, c] - img[y0, x0, c])
                           + fx * (img[y1, x1, c] - img[y0, x1, c]))
            if 0.0 <= sx <= W - 1.0:
                d_flow[y, x, 0] = gx
            if 0.0 <= sy <= H - 1.0:
                d_flow[y, x, 1] = gy


def warp(image, flow):
    """Bilinear backward warp of an (H, W, 3) image by an (H, W, 2) flow."""
    image = check_image(image)
    H, W = image.shape[:2]
    check_flow(flow, H, W)
    out = np.empty_like(image)
    _warp_kernel(np.ascontiguousarray(image), np.ascontiguousarray(flow), out)
    return out


def warp_backward(image, flow, d_out, need_image_grad=True):
    """Analytic gradients of the bilinear warp.

    Requires the forward inputs (raises if either is None).  Returns
    (d_image, d_flow); d_image is None when need_image_grad is False (the
    flow-refinement loop only consumes d_flow).  The clamp kills the flow
    gradient strictly outside the image; on the closed interval the
    interpolation-formula derivative is used, i.e. the forward difference of
    the sampled image.
    """
    if image is None or flow is None:
        raise ValueError("warp_backward needs the forward inputs")
    image = check_image(image)
    H, W = image.shape[:2]
    check_flow(flow, H, W)
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.shape != image.shape:
        raise ValueError("upstream gradient shape mismatch")
    d_image = np.zeros_like(image)
    d_flow = np.zeros((H, W, 2))
    _warp_backward_kernel(np.ascontiguousarray(image),
                          np.ascontiguousarray(flow),
                          np.ascontiguousarray(d_out), d_image, d_flow,
                          need_image_grad)
    return (d_image if need_image_grad else None), d_flow


def flow_regularizer(flow, lam_tv=1e-3, lam_mag=1e-4):
    """lam_tv * TV(flow) + lam_mag * mean squared magnitude.

    TV is the anisotropic total variation: the sum of |forward differences|
    along x and y over both flow components, normalized by H*W*2.  The
    magnitude term is the per-pixel mean of dx^2 + dy^2.  Returns
    (value, d_flow).
    """
    flow = np.asarray(flow, dtype=np.float64)
    H, W = flow.shape[:2]
    norm = H * W * 2.0

    dxs = flow[:, 1:, :] - flow[:, :-1, :]
    dys = flow[1:, :, :] - flow[:-1, :, :]
    tv = (np.abs(dxs).sum() + np.abs(dys).sum()) / norm
    mag = np.sum(flow * flow) / (H * W)
    value = lam_tv * tv + lam_mag * mag

    d_flow = lam_mag * 2.0 * flow / (H * W)
    sx = np.sign(dxs) * (lam_tv / norm)
    sy = np.sign(dys) * (lam_tv / norm)
    d_flow[:, 1:, :] += sx
    d_flow[:, :-1, :] -= sx
    d_flow[1:, :, :] += sy
    d_flow[:-1, :, :] -= sy
    return value, d_flow


@dataclass
class FlowBank:
    """One learnable (H, W, 2) flow per supervised frame, keyed by frame id;
    every field starts at exactly zero."""

    height: int
    width: int
    fields: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, frame_ids, height, width):
        bank = cls(height=height, width=width)
        for fid in frame_ids:
            bank.fields[fid] = np.zeros((height, width, 2))
        return bank

    def __len__(self):
        return len(self.fields)

    def get(self, frame_id):
        return self.fields[frame_id]

    def validate(self):
        for fid, f in self.fields.items():
            check_flow(f, self.height, self.width, name=f"flow[{fid}]")
        return self
