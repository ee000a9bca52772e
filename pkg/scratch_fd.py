"""Scratch: finite-difference smoke test of the renderer (not shipped)."""
import numpy as np

from tryonsplat.core import Camera, GaussianCloud, quat_normalize
from tryonsplat.renderer import render, render_backward

rng = np.random.default_rng(7)


def random_cloud(n):
    return GaussianCloud(
        positions=rng.normal(0, 0.3, (n, 3)),
        rotations=quat_normalize(rng.normal(0, 1, (n, 4))),
        scales=rng.uniform(0.05, 0.25, (n, 3)),
        opacities=rng.uniform(0.3, 0.9, n),
        colors=rng.uniform(0.1, 0.9, (n, 3)),
    )


cam = Camera.look_at(np.array([0.1, 0.2, 2.5]), np.zeros(3),
                     np.array([0.0, 1.0, 0.0]), fx=30, fy=30, width=24, height=24)
bg = np.array([0.3, 0.4, 0.5])
wmat = rng.normal(0, 1, (24, 24, 3))  # random loss weights


def loss(cloud):
    out, _ = render(cloud, cam, bg)
    return np.sum(out.image * wmat)


cloud = random_cloud(6)
out, ctx = render(cloud, cam, bg)
print("alpha range", out.alpha.min(), out.alpha.max())
grads = render_backward(out, ctx, wmat)

h = 1e-5
worst = 0.0
for fieldname in ("positions", "rotations", "scales", "opacities", "colors"):
    arr = getattr(cloud, fieldname)
    g = grads[fieldname]
    it = np.ndindex(arr.shape)
    for idx in it:
        orig = arr[idx]
        arr[idx] = orig + h
        lp = loss(cloud)
        arr[idx] = orig - h
        lm = loss(cloud)
        arr[idx] = orig
        fd = (lp - lm) / (2 * h)
        a = g[idx]
        rel = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
        if rel > worst:
            worst = rel
            worst_info = (fieldname, idx, a, fd, rel)
print("worst rel error:", worst, worst_info)
