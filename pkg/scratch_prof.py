"""Scratch: profile rasterizer internals (not shipped)."""
import time

import numpy as np

from tryonsplat import synthdata
from tryonsplat.renderer import project_cloud, rasterize, rasterize_backward, _tile_extents
from tryonsplat.skeleton import position_map

subject = synthdata.generate_subject(0)
cams = synthdata.ring_cameras(4, 128)
poses = synthdata.pose_cycle(40)
bg = np.array([0.84, 0.84, 0.88])
lbs = position_map(subject.template, subject.skeleton, subject.weights, poses[7])
cloud = synthdata.subject_cloud(subject, lbs, cams[0])

N = 20
t0 = time.perf_counter()
for _ in range(N):
    splats, ctx = project_cloud(cloud, cams[0])
t1 = time.perf_counter()
print(f"project: {(t1 - t0) / N * 1e3:.2f} ms  kept={len(splats)}")

order = np.argsort(splats.depths, kind="stable")
covs = splats.covs[order]
tx0, ty0, nx, ny, ntx, nty = _tile_extents(splats.means[order], covs, 128, 128)
pairs = int((nx * ny).sum())
print(f"pairs: {pairs}, tiles with content: ...")

t0 = time.perf_counter()
for _ in range(N):
    out = rasterize(splats, cams[0], bg)
t1 = time.perf_counter()
print(f"rasterize fwd: {(t1 - t0) / N * 1e3:.2f} ms, tiles={len(out.aux.tiles)}")
szs = [len(r.ids) for r in out.aux.tiles]
print(f"tile splat counts: max={max(szs)}, mean={np.mean(szs):.0f}, n={len(szs)}")

d = np.ones((128, 128, 3))
t0 = time.perf_counter()
for _ in range(N):
    g = rasterize_backward(out, d)
t1 = time.perf_counter()
print(f"rasterize bwd: {(t1 - t0) / N * 1e3:.2f} ms")
