"""On-disk formats: PMTS tensors, PMVL volumes, model checkpoints, 2D masks.

PMTS (tensor): magic b"PMTS", u32 rank, u32 extents[rank], u8 dtype tag
(0 = float64, 1 = float32), then raw values row-major. Little-endian
throughout.

PMVL (labeled/valued volume): magic b"PMVL", u32 rank, u32 extents[rank],
float64 spacing[rank] in mm, u8 dtype tag (0 = float64, 1 = float32,
2 = uint8), then raw voxels row-major. The uint8 tag carries integer label
volumes; it is an extension over the tensor format's two tags.

Checkpoint: a plain-text manifest (one "name<TAB>kind<TAB>shape<TAB>offset"
line per tensor) followed by "---" and the concatenated PMTS blobs; offsets
are byte positions within the blob section.

2D masks travel as 8-bit grayscale PNG where pixel value = class id.
"""

from __future__ import annotations

import io
import struct

import numpy as np
from PIL import Image

PMTS_MAGIC = b"PMTS"
PMVL_MAGIC = b"PMVL"

_TENSOR_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_VOLUME_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4"), 2: np.dtype("u1")}


def _dtype_tag(dtype, table):
    dtype = np.dtype(dtype)
    for tag, dt in table.items():
        if dt == dtype.newbyteorder("<"):
            return tag
    raise ValueError(f"unsupported dtype {dtype} (supported: {list(table.values())})")


def dump_tensor(arr, fh):
    arr = np.asarray(arr)
    tag = _dtype_tag(arr.dtype, _TENSOR_DTYPES)
    fh.write(PMTS_MAGIC)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(struct.pack("<B", tag))
    fh.write(np.ascontiguousarray(arr, dtype=_TENSOR_DTYPES[tag]).tobytes())


def load_tensor(fh):
    magic = fh.read(4)
    if magic != PMTS_MAGIC:
        raise ValueError(f"bad tensor magic {magic!r}")
    (rank,) = struct.unpack("<I", fh.read(4))
    shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
    (tag,) = struct.unpack("<B", fh.read(1))
    if tag not in _TENSOR_DTYPES:
        raise ValueError(f"unknown tensor dtype tag {tag}")
    dt = _TENSOR_DTYPES[tag]
    count = int(np.prod(shape, dtype=np.int64))
    data = fh.read(count * dt.itemsize)
    if len(data) != count * dt.itemsize:
        raise ValueError("truncated tensor payload")
    return np.frombuffer(data, dtype=dt).reshape(shape).copy()


def tensor_bytes(arr):
    buf = io.BytesIO()
    dump_tensor(arr, buf)
    return buf.getvalue()


def save_tensor(path, arr):
    with open(path, "wb") as fh:
        dump_tensor(arr, fh)


def read_tensor(path):
    with open(path, "rb") as fh:
        return load_tensor(fh)


def save_volume(path, voxels, spacing=None):
    voxels = np.asarray(voxels)
    tag = _dtype_tag(voxels.dtype, _VOLUME_DTYPES)
    spacing = np.ones(voxels.ndim) if spacing is None else np.asarray(spacing, float)
    if spacing.shape != (voxels.ndim,):
        raise ValueError(f"spacing must have {voxels.ndim} entries")
    if np.any(spacing <= 0):
        raise ValueError("spacing must be strictly positive")
    with open(path, "wb") as fh:
        fh.write(PMVL_MAGIC)
        fh.write(struct.pack("<I", voxels.ndim))
        fh.write(struct.pack(f"<{voxels.ndim}I", *voxels.shape))
        fh.write(struct.pack(f"<{voxels.ndim}d", *spacing))
        fh.write(struct.pack("<B", tag))
        fh.write(np.ascontiguousarray(voxels, dtype=_VOLUME_DTYPES[tag]).tobytes())


def load_volume(path):
    """-> (voxels, spacing)"""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != PMVL_MAGIC:
            raise ValueError(f"bad volume magic {magic!r} in {path}")
        (rank,) = struct.unpack("<I", fh.read(4))
        shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        spacing = np.array(struct.unpack(f"<{rank}d", fh.read(8 * rank)))
        (tag,) = struct.unpack("<B", fh.read(1))
        if tag not in _VOLUME_DTYPES:
            raise ValueError(f"unknown volume dtype tag {tag}")
        dt = _VOLUME_DTYPES[tag]
        count = int(np.prod(shape, dtype=np.int64))
        data = fh.read(count * dt.itemsize)
        if len(data) != count * dt.itemsize:
            raise ValueError(f"truncated volume payload in {path}")
    return np.frombuffer(data, dtype=dt).reshape(shape).copy(), spacing


def save_mask_png(path, mask):
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError("PNG masks must be 2D")
    if mask.min() < 0 or mask.max() > 255:
        raise ValueError("class ids must fit in uint8")
    Image.fromarray(mask.astype(np.uint8), mode="L").save(path, format="PNG")


def load_mask_png(path):
    with Image.open(path) as img:
        return np.asarray(img.convert("L"))


def save_image_png(path, image):
    """Image in [0, 1], shape (H, W) or (C, H, W) with C in {1, 3}."""
    image = np.asarray(image, dtype=float)
    if image.ndim == 3:
        if image.shape[0] == 1:
            image = image[0]
        elif image.shape[0] == 3:
            image = np.moveaxis(image, 0, -1)
        else:
            raise ValueError(f"cannot write {image.shape[0]}-channel image")
    quantized = np.clip(np.rint(image * 255), 0, 255).astype(np.uint8)
    mode = "L" if quantized.ndim == 2 else "RGB"
    Image.fromarray(quantized, mode=mode).save(path, format="PNG")


def load_image_png(path, channels=3):
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB" if channels == 3 else "L"), dtype=float)
    arr = arr / 255.0
    if channels == 3:
        return np.moveaxis(arr, -1, 0)
    return arr[None]


def save_checkpoint(path, named_tensors, meta=None):
    """named_tensors: iterable of (name, array); meta: dict of str -> str
    recorded as '# key value' comment lines."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in named_tensors:
        arr = np.asarray(arr)
        blob = tensor_bytes(arr)
        shape = "x".join(str(e) for e in arr.shape) or "scalar"
        entries.append((name, "tensor", shape, offset))
        blobs.append(blob)
        offset += len(blob)
    with open(path, "wb") as fh:
        fh.write(b"PMCK v1\n")
        for key, val in (meta or {}).items():
            fh.write(f"# {key} {val}\n".encode())
        for name, kind, shape, off in entries:
            fh.write(f"{name}\t{kind}\t{shape}\t{off}\n".encode())
        fh.write(b"---\n")
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """-> (ordered dict name -> array, meta dict)"""
    with open(path, "rb") as fh:
        header = fh.readline()
        if header != b"PMCK v1\n":
            raise ValueError(f"bad checkpoint header in {path}")
        meta = {}
        entries = []
        while True:
            line = fh.readline()
            if not line:
                raise ValueError(f"missing manifest terminator in {path}")
            if line == b"---\n":
                break
            text = line.decode().rstrip("\n")
            if text.startswith("# "):
                key, _, val = text[2:].partition(" ")
                meta[key] = val
                continue
            name, kind, shape, off = text.split("\t")
            entries.append((name, int(off)))
        blob_start = fh.tell()
        tensors = {}
        for name, off in entries:
            fh.seek(blob_start + off)
            tensors[name] = load_tensor(fh)
    return tensors, meta
