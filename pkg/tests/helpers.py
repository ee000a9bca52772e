"""Shared test utilities: the naive rasterization oracle, finite-difference
checking, and random scene generators.

The oracle deliberately shares no code with the tiled renderer: it loops over
pixels, evaluates every splat via an explicit 2x2 inverse, and composites in
a plain Python accumulation, so agreement is a genuine dual-route check.
"""

import numpy as np

from tryonsplat.core import Camera, GaussianCloud, quat_normalize

ALPHA_CUTOFF = 1.0 / 255.0


def naive_rasterize(splats, cam, background):
    """O(pixels x splats) full-sort compositing reference.

    Accepts a ProjectedSplats batch; returns (image, alpha).
    """
    H, W = cam.height, cam.width
    bg = np.asarray(background, dtype=np.float64)
    image = np.empty((H, W, 3))
    alpha_map = np.zeros((H, W))
    order = np.argsort(splats.depths, kind="stable")
    means = splats.means[order]
    covs = splats.covs[order]
    ops = splats.opacities[order]
    cols = splats.colors[order]

    inv = np.zeros((len(order), 2, 2))
    for i in range(len(order)):
        a, b, c = covs[i, 0, 0], covs[i, 0, 1], covs[i, 1, 1]
        det = a * c - b * b
        inv[i] = np.array([[c, -b], [-b, a]]) / det

    for py in range(H):
        for px in range(W):
            center = np.array([px + 0.5, py + 0.5])
            T = 1.0
            acc = np.zeros(3)
            for i in range(len(order)):
                d = center - means[i]
                maha = d @ inv[i] @ d
                a = ops[i] * np.exp(-0.5 * maha)
                if a < ALPHA_CUTOFF:
                    continue
                acc = acc + cols[i] * (a * T)
                T = T * (1.0 - a)
            image[py, px] = acc + T * bg
            alpha_map[py, px] = 1.0 - T
    return image, alpha_map


def rel_error(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.max(np.abs(a - b) / scale)


def central_diff(f, arr, idx, h=1e-5):
    """Central finite difference of scalar-valued f wrt arr[idx] (in place)."""
    orig = arr[idx]
    arr[idx] = orig + h
    fp = f()
    arr[idx] = orig - h
    fm = f()
    arr[idx] = orig
    return (fp - fm) / (2.0 * h)


def check_grad(f, arr, analytic, indices=None, h=1e-5, tol=1e-4, floor=1e-6):
    """Assert analytic gradients of f wrt entries of arr match central
    differences.  Returns the worst relative error seen."""
    if indices is None:
        indices = list(np.ndindex(arr.shape))
    worst = 0.0
    for idx in indices:
        fd = central_diff(f, arr, idx, h=h)
        a = analytic[idx]
        err = abs(a - fd) / max(abs(a), abs(fd), floor)
        worst = max(worst, err)
        assert err < tol, (f"gradient mismatch at {idx}: "
                           f"analytic={a!r} fd={fd!r} rel={err:.3g}")
    return worst


def random_cloud(rng, n, spread=0.35):
    return GaussianCloud(
        positions=rng.normal(0.0, spread, (n, 3)),
        rotations=quat_normalize(rng.normal(0.0, 1.0, (n, 4))),
        scales=rng.uniform(0.05, 0.25, (n, 3)),
        opacities=rng.uniform(0.3, 0.9, n),
        colors=rng.uniform(0.1, 0.9, (n, 3)),
    )


def make_camera(width=24, height=24, fx=30.0, eye=(0.1, 0.2, 2.5)):
    return Camera.look_at(np.asarray(eye, dtype=np.float64), np.zeros(3),
                          np.array([0.0, 1.0, 0.0]), fx=fx, fy=fx,
                          width=width, height=height)


def sample_indices(rng, shape, count):
    """A deterministic subset of multi-indices into an array of `shape`."""
    total = int(np.prod(shape))
    flat = rng.choice(total, size=min(count, total), replace=False)
    return [np.unravel_index(i, shape) for i in np.sort(flat)]
