import numpy as np
import pytest

from tryonsplat.core import Camera, GaussianCloud, GaussianPrimitive
from tryonsplat.renderer import (ALPHA_CUTOFF, COV_DIAG_FLOOR, ProjectedSplats,
                                 Splat2D, project_cloud, project_primitive,
                                 rasterize, rasterize_backward, render,
                                 render_backward)

from helpers import (check_grad, naive_rasterize, random_cloud, rel_error,
                     sample_indices, make_camera)


def axis_camera(width=16, height=16, fx=40.0, depth_axis=True):
    return Camera(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0,
                  R=np.eye(3), t=np.zeros(3), width=width, height=height)


def simple_prim(position, scale=0.1, opacity=0.8, color=(0.9, 0.2, 0.1)):
    return GaussianPrimitive(
        position=np.asarray(position, dtype=np.float64),
        rotation=np.array([1.0, 0.0, 0.0, 0.0]),
        scale=np.full(3, scale), opacity=opacity,
        color=np.asarray(color, dtype=np.float64))


def test_project_on_axis_hits_principal_point():
    cam = axis_camera()
    s = project_primitive(simple_prim([0.0, 0.0, 3.0]), cam)
    assert np.allclose(s.mean, [cam.cx, cam.cy], atol=1e-12)
    assert s.depth == 3.0


def test_project_isotropic_covariance_closed_form():
    cam = axis_camera(fx=50.0)
    sigma, d = 0.2, 4.0
    s = project_primitive(simple_prim([0.0, 0.0, d], scale=sigma), cam)
    expect = (cam.fx * sigma / d) ** 2
    assert np.allclose(s.covariance2d,
                       np.diag([expect + COV_DIAG_FLOOR] * 2), atol=1e-10)


def test_project_culls_behind_near_plane():
    cam = axis_camera()
    assert project_primitive(simple_prim([0.0, 0.0, 0.05]), cam) is None
    assert project_primitive(simple_prim([0.0, 0.0, -2.0]), cam) is None


def test_project_rejects_non_finite():
    cam = axis_camera()
    cloud = random_cloud(np.random.default_rng(0), 3)
    cloud.positions[1, 2] = np.nan
    with pytest.raises(ValueError):
        project_cloud(cloud, cam)


def test_rasterize_empty_scene_is_background():
    cam = axis_camera()
    bg = np.array([0.2, 0.5, 0.7])
    out = rasterize([], cam, bg)
    assert np.array_equal(out.image, np.broadcast_to(bg, (16, 16, 3)))
    assert np.array_equal(out.alpha, np.zeros((16, 16)))


def test_opaque_splat_at_pixel_center_paints_its_color():
    cam = axis_camera()
    color = np.array([0.3, 0.6, 0.9])
    splat = Splat2D(mean=np.array([5.5, 7.5]), covariance2d=np.eye(2),
                    depth=1.0, opacity=1.0, color=color)
    out = rasterize([splat], cam, np.zeros(3))
    # G == 1 exactly at the mean, so the pixel takes the splat color
    assert np.array_equal(out.image[7, 5], color)
    assert out.alpha[7, 5] == 1.0


def test_two_overlapping_splats_hand_composite():
    cam = axis_camera()
    center = np.array([8.5, 8.5])
    red = Splat2D(mean=center, covariance2d=4 * np.eye(2), depth=1.0,
                  opacity=0.5, color=np.array([1.0, 0.0, 0.0]))
    blue = Splat2D(mean=center, covariance2d=4 * np.eye(2), depth=2.0,
                   opacity=1.0, color=np.array([0.0, 0.0, 1.0]))
    out = rasterize([red, blue], cam, np.zeros(3))
    # at the shared mean: 0.5 red + (1 - 0.5) * 1.0 blue
    assert np.allclose(out.image[8, 8], [0.5, 0.0, 0.5], atol=1e-12)


def test_rasterize_matches_naive_oracle_on_random_scenes():
    rng = np.random.default_rng(42)
    cam = make_camera(width=20, height=18)
    for _ in range(10):
        cloud = random_cloud(rng, int(rng.integers(1, 30)))
        splats, _ = project_cloud(cloud, cam)
        out = rasterize(splats, cam, np.array([0.3, 0.3, 0.35]))
        ref, ref_alpha = naive_rasterize(splats, cam, np.array([0.3, 0.3, 0.35]))
        assert np.max(np.abs(out.image - ref)) < 1e-5
        assert np.max(np.abs(out.alpha - ref_alpha)) < 1e-5


def test_rendering_invariant_to_input_order():
    rng = np.random.default_rng(3)
    cam = make_camera()
    cloud = random_cloud(rng, 12)
    splats, _ = project_cloud(cloud, cam)
    out = rasterize(splats, cam, np.zeros(3))
    perm = rng.permutation(len(splats))
    shuffled = ProjectedSplats(
        means=splats.means[perm], covs=splats.covs[perm],
        depths=splats.depths[perm], opacities=splats.opacities[perm],
        colors=splats.colors[perm], source_index=splats.source_index[perm])
    out2 = rasterize(shuffled, cam, np.zeros(3))
    assert np.array_equal(out.image, out2.image)


def test_pixels_stay_in_unit_range():
    rng = np.random.default_rng(4)
    cam = make_camera()
    for _ in range(5):
        cloud = random_cloud(rng, 25)
        out, _ = render(cloud, cam, rng.uniform(0, 1, 3))
        assert out.image.min() >= 0.0 and out.image.max() <= 1.0
        assert out.alpha.min() >= 0.0 and out.alpha.max() <= 1.0


def test_rasterize_rejects_non_finite_splat():
    cam = axis_camera()
    splat = Splat2D(mean=np.array([np.inf, 2.0]), covariance2d=np.eye(2),
                    depth=1.0, opacity=0.5, color=np.zeros(3))
    with pytest.raises(ValueError):
        rasterize([splat], cam, np.zeros(3))


def test_backward_requires_forward_records():
    out = rasterize([], axis_camera(), np.zeros(3))
    out.aux = None
    with pytest.raises(ValueError):
        rasterize_backward(out, np.zeros((16, 16, 3)))


def test_single_splat_color_gradient_closed_form():
    cam = axis_camera()
    splat = Splat2D(mean=np.array([8.5, 8.5]), covariance2d=3 * np.eye(2),
                    depth=1.0, opacity=0.7, color=np.array([0.4, 0.5, 0.6]))
    splats = ProjectedSplats.from_list([splat])
    out = rasterize(splats, cam, np.zeros(3))
    d_mean, d_cov, d_op, d_col = rasterize_backward(out, np.ones((16, 16, 3)))
    # L = sum(image): dL/dcolor_c = opacity * sum_px G (over kept pixels)
    conic = np.linalg.inv(splat.covariance2d)
    xs = np.arange(16) + 0.5
    d = np.stack(np.meshgrid(xs, xs), axis=-1) - splat.mean
    maha = np.einsum("hwi,ij,hwj->hw", d, conic, d)
    G = np.exp(-0.5 * maha)
    alpha = splat.opacity * G
    G_kept = np.where(alpha >= ALPHA_CUTOFF, G, 0.0)
    expect = splat.opacity * G_kept.sum()
    assert np.allclose(d_col[0], expect, rtol=1e-12)


def test_zero_upstream_gradient_gives_zero_grads():
    rng = np.random.default_rng(5)
    cam = make_camera()
    cloud = random_cloud(rng, 6)
    out, ctx = render(cloud, cam, np.zeros(3))
    grads = render_backward(out, ctx, np.zeros((24, 24, 3)))
    for v in grads.values():
        assert np.array_equal(v, np.zeros_like(v))


def test_full_gradient_chain_matches_finite_differences():
    rng = np.random.default_rng(6)
    cam = make_camera(width=18, height=18)
    bg = np.array([0.25, 0.3, 0.4])
    wmat = rng.normal(size=(18, 18, 3))
    cloud = random_cloud(rng, 5)

    def loss():
        out, _ = render(cloud, cam, bg)
        return float(np.sum(out.image * wmat))

    out, ctx = render(cloud, cam, bg)
    grads = render_backward(out, ctx, wmat)
    for name in ("positions", "rotations", "scales", "opacities", "colors"):
        arr = getattr(cloud, name)
        idx = sample_indices(rng, arr.shape, 6)
        check_grad(loss, arr, grads[name], indices=idx, tol=1e-4)


def test_depth_sort_front_to_back():
    cam = axis_camera()
    near = Splat2D(mean=np.array([8.5, 8.5]), covariance2d=np.eye(2),
                   depth=1.0, opacity=1.0, color=np.array([1.0, 0.0, 0.0]))
    far = Splat2D(mean=np.array([8.5, 8.5]), covariance2d=np.eye(2),
                  depth=5.0, opacity=1.0, color=np.array([0.0, 1.0, 0.0]))
    # input order is back-to-front; the renderer must sort by depth
    out = rasterize([far, near], cam, np.zeros(3))
    assert np.array_equal(out.image[8, 8], [1.0, 0.0, 0.0])
