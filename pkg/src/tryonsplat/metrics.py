"""Image-quality and consistency metrics.

PSNR uses a + inf sentinel for identical images (serialized as the string
"inf" in CSV).  The consistency score is a proxy for learned video metrics:
PSNR between consecutive renders of a pose sequence after motion compensation
through ground-truth texel reprojection, available only on synthetic data;
reports label it "sc_proxy" to keep it distinct from any external metric.
"""

import io as _io
from dataclasses import dataclass, field

import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b):
    """10 log10(1 / MSE) for unit-range images; +inf when MSE is zero."""
    a, b = _check_pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return np.inf
    return 10.0 * np.log10(1.0 / mse)


def _gaussian_kernel():
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def _windows(img):
    win = np.lib.stride_tricks.sliding_window_view(
        img, (SSIM_WINDOW, SSIM_WINDOW), axis=(0, 1))
    return win  # (H-10, W-10, C, 11, 11)


def ssim(a, b):
    """Single-scale structural similarity.

    11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, computed on
    fully interior windows, averaged over positions and channels.
    """
    a, b = _check_pair(a, b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"images must be at least "
                         f"{SSIM_WINDOW}x{SSIM_WINDOW} for SSIM")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    k = _gaussian_kernel()
    wa, wb = _windows(a), _windows(b)
    mu_a = np.einsum("hwcij,ij->hwc", wa, k)
    mu_b = np.einsum("hwcij,ij->hwc", wb, k)
    e_aa = np.einsum("hwcij,hwcij,ij->hwc", wa, wa, k)
    e_bb = np.einsum("hwcij,hwcij,ij->hwc", wb, wb, k)
    e_ab = np.einsum("hwcij,hwcij,ij->hwc", wa, wb, k)
    var_a = e_aa - mu_a ** 2
    var_b = e_bb - mu_b ** 2
    cov = e_ab - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def _sample_bilinear(img, xy):
    H, W = img.shape[:2]
    x = np.clip(xy[:, 0], 0.0, W - 1.0)
    y = np.clip(xy[:, 1], 0.0, H - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    return ((1 - fx) * (1 - fy) * img[y0, x0] + fx * (1 - fy) * img[y0, x1]
            + (1 - fx) * fy * img[y1, x0] + fx * fy * img[y1, x1])


def consistency_score(renders, tracks):
    """Temporal-consistency proxy over a pose sequence.

    tracks[i] = (xy (T, 2), visible (T,)) is the ground-truth reprojection of
    every template texel into frame i.  For each consecutive pair, both
    frames are sampled at their own texel positions (exact motion
    compensation) over commonly visible texels, and the pair scores the PSNR
    of those samples; the sequence score is the mean over pairs.
    """
    if len(renders) < 2:
        raise ValueError("consistency score needs at least 2 frames")
    if tracks is None or len(tracks) != len(renders):
        raise ValueError("missing ground-truth correspondences")
    scores = []
    for i in range(len(renders) - 1):
        xy_a, vis_a = tracks[i]
        xy_b, vis_b = tracks[i + 1]
        common = vis_a & vis_b
        if not np.any(common):
            raise ValueError(f"no commonly visible texels in pair {i}")
        sa = _sample_bilinear(np.asarray(renders[i]), xy_a[common])
        sb = _sample_bilinear(np.asarray(renders[i + 1]), xy_b[common])
        mse = np.mean((sa - sb) ** 2)
        scores.append(np.inf if mse == 0.0 else 10.0 * np.log10(1.0 / mse))
    return float(np.mean(scores)) if np.all(np.isfinite(scores)) else np.inf


def flow_recovery_error(learned, records):
    """Mean endpoint error (pixels) between learned flows and the recorded
    inverse jitter, over garment-region pixels.

    learned: dict frame_id -> (H, W, 2); records: dict frame_id ->
    JitterRecord.  Frames must align exactly.
    """
    if set(learned.keys()) != set(records.keys()):
        raise ValueError("flow bank and jitter records are misaligned")
    if not learned:
        raise ValueError("empty flow bank")
    errs = []
    for fid in sorted(learned):
        rec = records[fid]
        diff = learned[fid] - rec.inverse
        epe = np.linalg.norm(diff, axis=2)
        if not np.any(rec.mask):
            continue
        errs.append(float(np.mean(epe[rec.mask])))
    return float(np.mean(errs))


def fmt_metric(v):
    """CSV formatting with an explicit 'inf' sentinel."""
    if np.isinf(v):
        return "inf"
    return f"{v:.17g}"


@dataclass
class MetricReport:
    """Per-frame metric rows plus aggregates for one model variant."""

    variant: str
    rows: list = field(default_factory=list)   # dicts: frame, split, psnr, ssim
    sc_proxy: float = np.nan
    flow_epe: float = np.nan

    def add(self, frame, split, psnr_value, ssim_value):
        self.rows.append({"frame": frame, "split": split,
                          "psnr": psnr_value, "ssim": ssim_value})

    def aggregate(self, split=None):
        rows = [r for r in self.rows if split is None or r["split"] == split]
        if not rows:
            return {"psnr": np.nan, "ssim": np.nan}
        ps = [r["psnr"] for r in rows]
        ss = [r["ssim"] for r in rows]
        mean_psnr = np.inf if np.any(np.isinf(ps)) else float(np.mean(ps))
        return {"psnr": mean_psnr, "ssim": float(np.mean(ss))}

    def to_csv(self):
        buf = _io.StringIO()
        buf.write("variant,frame,split,psnr,ssim\n")
        for r in self.rows:
            buf.write(f"{self.variant},{r['frame']},{r['split']},"
                      f"{fmt_metric(r['psnr'])},{fmt_metric(r['ssim'])}\n")
        for split in sorted({r["split"] for r in self.rows}):
            agg = self.aggregate(split)
            buf.write(f"{self.variant},aggregate,{split},"
                      f"{fmt_metric(agg['psnr'])},{fmt_metric(agg['ssim'])}\n")
        return buf.getvalue()

    def summary(self):
        lines = [f"variant: {self.variant}"]
        for split in sorted({r["split"] for r in self.rows}):
            agg = self.aggregate(split)
            lines.append(f"  {split}: psnr={fmt_metric(agg['psnr'])} dB, "
                         f"ssim={fmt_metric(agg['ssim'])}")
        if np.isfinite(self.sc_proxy) or np.isinf(self.sc_proxy):
            lines.append(f"  sc_proxy: {fmt_metric(self.sc_proxy)} dB")
        if not np.isnan(self.flow_epe):
            lines.append(f"  flow_epe: {fmt_metric(self.flow_epe)} px")
        return "\n".join(lines)
