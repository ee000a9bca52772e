import numpy as np
import pytest

from tryonsplat.tensorio import (load_bundle, load_png, load_tensor,
                                 save_bundle, save_png, save_tensor)


def test_tensor_round_trip_dtypes(tmp_path):
    rng = np.random.default_rng(0)
    cases = [
        rng.normal(size=(5, 7, 2)),
        (rng.uniform(0, 255, size=(4, 4))).astype(np.uint8),
        rng.integers(-5, 99, size=(3,)).astype(np.int64),
        rng.uniform(size=(6, 6)) > 0.5,
        np.float64(3.25) * np.ones(()),
    ]
    for i, arr in enumerate(cases):
        path = tmp_path / f"t{i}.tns"
        save_tensor(path, arr)
        back = load_tensor(path)
        assert back.dtype == np.asarray(arr).dtype
        assert np.array_equal(back, arr)


def test_tensor_rejects_garbage(tmp_path):
    path = tmp_path / "bad.tns"
    path.write_bytes(b"NOTATENSORFILE..")
    with pytest.raises(ValueError):
        load_tensor(path)


def test_bundle_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(1)
    tensors = {"a.x": rng.normal(size=(3, 3)),
               "b": rng.integers(0, 9, size=5).astype(np.int64)}
    meta = {"iteration": 12, "nested": {"k": [1, 2, 3]}}
    p1 = tmp_path / "one.tsb"
    p2 = tmp_path / "two.tsb"
    save_bundle(p1, tensors, meta)
    back_t, back_m = load_bundle(p1)
    assert back_m == meta
    assert set(back_t) == set(tensors)
    for k in tensors:
        assert np.array_equal(back_t[k], tensors[k])
    save_bundle(p2, back_t, back_m)
    assert p1.read_bytes() == p2.read_bytes()


def test_png_round_trip_quantization(tmp_path):
    rng = np.random.default_rng(2)
    img = rng.uniform(size=(17, 13, 3))
    path = tmp_path / "img.png"
    save_png(path, img)
    back = load_png(path)
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 0.5 / 255.0 + 1e-12
    # already-quantized data survives exactly
    save_png(path, back)
    assert np.array_equal(load_png(path), back)
