"""Serialization: 8-bit PNG image export/import and the little-endian binary
tensor container used for all internal state (templates, jitter records,
checkpoints).

Tensor container layout (all integers little-endian):

    bytes 0..7   magic  b"TSPLTNSR"
    byte  8      format version (1)
    byte  9      dtype code: 0=float64, 1=uint8, 2=int64, 3=bool
    byte  10     ndim
    bytes 11..15 zero padding
    next         ndim x uint32 dimension sizes
    next         raw C-order array data, little-endian

A bundle file stores named tensors plus a JSON metadata block:

    bytes 0..7   magic  b"TSPLBNDL"
    byte  8      format version (1)
    bytes 9..15  zero padding
    next         uint32 metadata length, then canonical JSON (sorted keys)
    next         uint32 tensor count, then per tensor:
                 uint16 name length, name UTF-8, tensor block as above

Both formats round-trip bitwise; checkpoints rely on that.
"""

import json
import struct

import numpy as np
from PIL import Image as PILImage

from .core import check_image

TENSOR_MAGIC = b"TSPLTNSR"
BUNDLE_MAGIC = b"TSPLBNDL"

_DTYPE_CODES = {
    np.dtype("<f8"): 0,
    np.dtype("u1"): 1,
    np.dtype("<i8"): 2,
    np.dtype("bool"): 3,
}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def save_png(path, img):
    """Quantize a float image in [0, 1] to 8-bit RGB and write a PNG."""
    img = check_image(img)
    data = np.clip(img, 0.0, 1.0)
    data = np.rint(data * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path, format="PNG")


def load_png(path):
    """Read an 8-bit RGB PNG into a float64 image in [0, 1]."""
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr.astype(np.float64) / 255.0


def _encode_tensor(arr):
    arr = np.asarray(arr)
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)  # note: would promote 0-d to 1-d
    if arr.dtype == np.float32:
        arr = arr.astype(np.float64)
    dtype = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    arr = arr.astype(dtype, copy=False)
    if arr.dtype not in _DTYPE_CODES:
        raise ValueError(f"unsupported tensor dtype {arr.dtype}")
    code = _DTYPE_CODES[arr.dtype]
    header = TENSOR_MAGIC + struct.pack("<BBB5x", 1, code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
    return header + dims + arr.tobytes(order="C")


def _decode_tensor(buf, offset=0):
    if buf[offset:offset + 8] != TENSOR_MAGIC:
        raise ValueError("bad tensor magic; not a tensor container")
    version, code, ndim = struct.unpack_from("<BBB", buf, offset + 8)
    if version != 1:
        raise ValueError(f"unsupported tensor container version {version}")
    if code not in _CODE_DTYPES:
        raise ValueError(f"unknown dtype code {code}")
    offset += 16
    shape = struct.unpack_from(f"<{ndim}I", buf, offset) if ndim else ()
    offset += 4 * ndim
    dtype = _CODE_DTYPES[code]
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    nbytes = count * dtype.itemsize
    arr = np.frombuffer(buf[offset:offset + nbytes], dtype=dtype).reshape(shape)
    return arr.copy(), offset + nbytes


def save_tensor(path, arr):
    with open(path, "wb") as fh:
        fh.write(_encode_tensor(arr))


def load_tensor(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, _ = _decode_tensor(buf)
    return arr


def save_bundle(path, tensors, meta=None):
    """Write named tensors plus a JSON meta dict; key order is canonicalized
    so equal content yields byte-equal files."""
    meta_bytes = json.dumps(meta or {}, sort_keys=True,
                            separators=(",", ":")).encode("utf-8")
    parts = [BUNDLE_MAGIC + struct.pack("<B7x", 1),
             struct.pack("<I", len(meta_bytes)), meta_bytes,
             struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(_encode_tensor(tensors[name]))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_bundle(path):
    """Returns (tensors: dict[str, ndarray], meta: dict)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != BUNDLE_MAGIC:
        raise ValueError("bad bundle magic; not a bundle file")
    (version,) = struct.unpack_from("<B", buf, 8)
    if version != 1:
        raise ValueError(f"unsupported bundle version {version}")
    offset = 16
    (meta_len,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    meta = json.loads(buf[offset:offset + meta_len].decode("utf-8"))
    offset += meta_len
    (count,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", buf, offset)
        offset += 2
        name = buf[offset:offset + name_len].decode("utf-8")
        offset += name_len
        tensors[name], offset = _decode_tensor(buf, offset)
    return tensors, meta
