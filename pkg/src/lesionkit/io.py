"""File I/O: raw+sidecar volumes and a minimal NIfTI-1 subset.

Two on-disk formats are supported:

``raw_sidecar``
    ``<name>.raw`` holds the voxel payload, little-endian, z-major (z slowest,
    x fastest — i.e. the C order of our (d, h, w) arrays).  ``<name>.json``
    is a sidecar with ``{"dims": [d, h, w], "spacing": [sz, sy, sx],
    "dtype": "u8"|"i16"|"f32", "num_classes": C}``.  Round trips are
    bit-exact.

``nifti1``
    Single-file ``.nii`` / gzipped ``.nii.gz``, restricted to what this
    package needs: ``dim``, ``datatype`` in {2 (u8), 4 (i16), 16 (f32)},
    ``pixdim``, ``vox_offset`` and ``scl_slope``/``scl_inter`` (applied when
    the slope is nonzero).  NIfTI stores (x, y, z) order with x fastest; the
    payload layout therefore matches our z-major arrays directly and only the
    header's pixdim needs permuting to the internal (z, y, x) convention.
    Orientation matrices (qform/sform) are ignored.  NIfTI carries no class
    count, so labels loaded from it infer ``num_classes = max(label) + 1``.

Probability volumes are stored one file per class, ``<base>_c<k>.<ext>``,
as 32-bit floats.  Label payloads use the smallest sufficient integer width.
"""

from __future__ import annotations

import gzip
import json
import os
import re
import struct

import numpy as np

from .errors import InputError
from .grid import GridShape, LabelVolume, ProbVolume

__all__ = ["load_volume", "load_fields", "save_volume", "save_fields"]

_DTYPES = {
    "u8": np.dtype("<u1"),
    "i16": np.dtype("<i2"),
    "f32": np.dtype("<f4"),
}
_NIFTI_DATATYPE = {"u8": 2, "i16": 4, "f32": 16}
_NIFTI_DTYPE = {v: k for k, v in _NIFTI_DATATYPE.items()}
_CHANNEL_RE = re.compile(r"_c(\d+)$")


def _split_path(path) -> tuple[str, str]:
    """Split into (stem, extension), treating .nii.gz as one extension."""
    path = os.fspath(path)
    if path.endswith(".nii.gz"):
        return path[: -len(".nii.gz")], ".nii.gz"
    for ext in (".nii", ".raw", ".json"):
        if path.endswith(ext):
            return path[: -len(ext)], ext
    return path, ""


def _format_for_ext(ext: str) -> str | None:
    if ext in (".raw", ".json"):
        return "raw_sidecar"
    if ext in (".nii", ".nii.gz"):
        return "nifti1"
    return None


# ---------------------------------------------------------------------------
# raw + sidecar
# ---------------------------------------------------------------------------

def _read_sidecar(base: str) -> dict:
    sidecar = base + ".json"
    try:
        with open(sidecar, "r") as f:
            meta = json.load(f)
    except FileNotFoundError:
        raise InputError(f"missing sidecar {sidecar}")
    except json.JSONDecodeError as e:
        raise InputError(f"unreadable sidecar {sidecar}: {e}")
    for key in ("dims", "spacing", "dtype", "num_classes"):
        if key not in meta:
            raise InputError(f"sidecar {sidecar} lacks required field {key!r}")
    if meta["dtype"] not in _DTYPES:
        raise InputError(f"unsupported data type {meta['dtype']!r} in {sidecar}")
    return meta


def _read_raw(base: str) -> tuple[np.ndarray, GridShape, int]:
    meta = _read_sidecar(base)
    dims = tuple(int(n) for n in meta["dims"])
    shape = GridShape(dims, tuple(float(s) for s in meta["spacing"]))
    dtype = _DTYPES[meta["dtype"]]
    raw_path = base + ".raw"
    try:
        payload = np.fromfile(raw_path, dtype=dtype)
    except FileNotFoundError:
        raise InputError(f"missing payload {raw_path}")
    if payload.size != shape.num_voxels:
        raise InputError(
            f"dimension mismatch in {raw_path}: header says {shape.num_voxels} voxels, "
            f"payload holds {payload.size}"
        )
    return payload.reshape(dims), shape, int(meta["num_classes"])


def _write_raw(base: str, data: np.ndarray, shape: GridShape, dtype_name: str, num_classes: int):
    data.astype(_DTYPES[dtype_name], copy=False).tofile(base + ".raw")
    meta = {
        "dims": list(shape.dims),
        "spacing": list(shape.spacing),
        "dtype": dtype_name,
        "num_classes": int(num_classes),
    }
    with open(base + ".json", "w") as f:
        json.dump(meta, f, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# minimal NIfTI-1
# ---------------------------------------------------------------------------

_HDR_SIZE = 348
_VOX_OFFSET = 352.0


def _read_nifti(path: str) -> tuple[np.ndarray, GridShape]:
    opener = gzip.open if path.endswith(".gz") else open
    try:
        with opener(path, "rb") as f:
            hdr = f.read(_HDR_SIZE)
            if len(hdr) < _HDR_SIZE:
                raise InputError(f"unreadable header in {path}: truncated")
            (sizeof_hdr,) = struct.unpack_from("<i", hdr, 0)
            if sizeof_hdr != _HDR_SIZE:
                raise InputError(
                    f"unreadable header in {path}: sizeof_hdr={sizeof_hdr} "
                    "(big-endian or non-NIfTI-1 files are not supported)"
                )
            magic = hdr[344:348]
            if magic not in (b"n+1\x00", b"ni1\x00"):
                raise InputError(f"unreadable header in {path}: bad magic {magic!r}")
            dim = struct.unpack_from("<8h", hdr, 40)
            ndim = dim[0]
            if ndim < 3 or any(d > 1 for d in dim[4 : 1 + ndim]):
                raise InputError(f"dimension mismatch in {path}: not a 3-D volume (dim={dim})")
            nx, ny, nz = dim[1], dim[2], dim[3]
            (datatype,) = struct.unpack_from("<h", hdr, 70)
            if datatype not in _NIFTI_DTYPE:
                raise InputError(f"unsupported data type {datatype} in {path}")
            dtype = _DTYPES[_NIFTI_DTYPE[datatype]]
            pixdim = struct.unpack_from("<8f", hdr, 76)
            if any(p <= 0 or not np.isfinite(p) for p in pixdim[1:4]):
                raise InputError(f"unreadable header in {path}: non-positive pixdim {pixdim[1:4]}")
            (vox_offset,) = struct.unpack_from("<f", hdr, 108)
            slope, inter = struct.unpack_from("<2f", hdr, 112)
            offset = int(round(vox_offset))
            if offset < _HDR_SIZE:
                raise InputError(f"unreadable header in {path}: vox_offset={vox_offset}")
            f.read(offset - _HDR_SIZE)
            count = nx * ny * nz
            payload = f.read(count * dtype.itemsize)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}")
    if len(payload) < count * dtype.itemsize:
        raise InputError(f"dimension mismatch in {path}: payload shorter than header promises")
    data = np.frombuffer(payload, dtype=dtype, count=count).reshape(nz, ny, nx)
    if slope != 0.0 and not (slope == 1.0 and inter == 0.0):
        data = data.astype(np.float64) * float(slope) + float(inter)
    # pixdim is (x, y, z); internal spacing order is (z, y, x)
    shape = GridShape((nz, ny, nx), (float(pixdim[3]), float(pixdim[2]), float(pixdim[1])))
    return data, shape


def _write_nifti(path: str, data: np.ndarray, shape: GridShape, dtype_name: str):
    d, h, w = shape.dims
    sz, sy, sx = shape.spacing
    hdr = bytearray(_HDR_SIZE)
    struct.pack_into("<i", hdr, 0, _HDR_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, w, h, d, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, _NIFTI_DATATYPE[dtype_name])
    struct.pack_into("<h", hdr, 72, _DTYPES[dtype_name].itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, _VOX_OFFSET)
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<b", hdr, 123, 2)  # xyzt_units: mm
    hdr[344:348] = b"n+1\x00"
    blob = bytes(hdr) + b"\x00\x00\x00\x00" + data.astype(_DTYPES[dtype_name], copy=False).tobytes()
    if path.endswith(".gz"):
        with open(path, "wb") as f:
            # fixed mtime and no embedded filename: identical volumes must
            # produce identical bytes wherever they are written
            with gzip.GzipFile(filename="", fileobj=f, mode="wb", mtime=0) as gz:
                gz.write(blob)
    else:
        with open(path, "wb") as f:
            f.write(blob)


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def _read_scalar(path) -> tuple[np.ndarray, GridShape, int | None]:
    """Read one file of either format; num_classes is None when unavailable."""
    path = os.fspath(path)
    stem, ext = _split_path(path)
    fmt = _format_for_ext(ext)
    if fmt == "raw_sidecar" or (fmt is None and os.path.exists(stem + ".json")):
        data, shape, num_classes = _read_raw(stem)
        return data, shape, num_classes
    if fmt == "nifti1":
        data, shape = _read_nifti(path)
        return data, shape, None
    raise InputError(f"cannot determine format of {path!r} (expected .raw/.json or .nii/.nii.gz)")


def _as_labels(data: np.ndarray, shape: GridShape, num_classes: int | None) -> LabelVolume:
    if np.issubdtype(data.dtype, np.floating):
        rounded = np.rint(data)
        if data.size and np.abs(data - rounded).max() > 1e-6:
            raise InputError("label volume contains non-integral values")
        data = rounded.astype(np.int64)
    if num_classes is None:
        num_classes = max(2, int(data.max()) + 1 if data.size else 2)
    if data.size and data.max() >= num_classes:
        raise InputError(
            f"label value {int(data.max())} >= declared num_classes {num_classes}"
        )
    return LabelVolume(shape=shape, data=data.astype(np.int64), num_classes=num_classes)


def _channel_path(base: str, ext: str, c: int) -> str:
    return f"{base}_c{c}{ext}"


def _prob_base(path: str) -> tuple[str, str]:
    stem, ext = _split_path(path)
    m = _CHANNEL_RE.search(stem)
    if m:
        stem = stem[: m.start()]
    if ext == ".json":
        ext = ".raw"
    if not ext:
        for cand in (".raw", ".nii", ".nii.gz"):
            if os.path.exists(_channel_path(stem, cand, 0)) or os.path.exists(
                _channel_path(stem, ".json" if cand == ".raw" else cand, 0)
            ):
                ext = cand
                break
        else:
            raise InputError(f"no probability channel files found for base {stem!r}")
    return stem, ext


def load_volume(path: str, kind: str = "labels") -> LabelVolume | ProbVolume:
    """Load a volume from disk.

    ``kind="labels"`` reads a single file into a :class:`LabelVolume`.
    ``kind="probs"`` treats ``path`` as the base of a per-class family
    ``<base>_c0 .. <base>_c{C-1}`` and assembles a :class:`ProbVolume`; the
    result is marked normalized only if per-voxel sums are 1 within 1e-6.
    """
    if kind == "labels":
        data, shape, num_classes = _read_scalar(path)
        return _as_labels(data, shape, num_classes)
    if kind != "probs":
        raise InputError(f"unknown volume kind {kind!r}")
    stack, shape = load_fields(path)
    sums = stack.sum(axis=0)
    normalized = bool(sums.size == 0 or np.abs(sums - 1.0).max() <= 1e-6)
    return ProbVolume(shape=shape, data=stack, normalized=normalized)


def load_fields(path: str) -> tuple[np.ndarray, GridShape]:
    """Assemble a per-class scalar-field family (``<base>_c0..``) without any
    probability-range validation — the loader for logit inputs."""
    base, ext = _prob_base(path)
    first = _channel_path(base, ext, 0)
    if not (os.path.exists(first) or os.path.exists(_channel_path(base, ".json", 0))):
        raise InputError(f"missing channel 0: {first}")
    data0, shape, declared = _read_scalar(first)
    if declared is not None:
        num_classes = declared
    else:
        num_classes = 1
        while os.path.exists(_channel_path(base, ext, num_classes)):
            num_classes += 1
    if num_classes < 2:
        raise InputError(f"probability family {base!r} has fewer than 2 channels")
    channels = [data0]
    for c in range(1, num_classes):
        cpath = _channel_path(base, ext, c)
        if not (os.path.exists(cpath) or os.path.exists(_channel_path(base, ".json", c))):
            raise InputError(f"missing channel {c}: {cpath}")
        data, cshape, _ = _read_scalar(cpath)
        if cshape != shape:
            raise InputError(f"channel {c} grid {cshape} differs from channel 0 grid {shape}")
        channels.append(data)
    stack = np.stack([np.asarray(ch, dtype=np.float64) for ch in channels], axis=0)
    return stack, shape


def save_fields(fields: np.ndarray, shape: GridShape, path: str):
    """Write a (C, d, h, w) scalar-field family as f32 channel files without
    range validation — the writer for gradient dumps and logits."""
    fields = np.asarray(fields, dtype=np.float64)
    if fields.ndim != 4:
        raise InputError("field family must have shape (C, d, h, w)")
    stem, ext = _split_path(path)
    fmt = _format_for_ext(ext)
    if fmt is None:
        fmt, ext = "raw_sidecar", ".raw"
    num = fields.shape[0]
    for c in range(num):
        if fmt == "raw_sidecar":
            _write_raw(f"{stem}_c{c}", fields[c], shape, "f32", num)
        else:
            _write_nifti(_channel_path(stem, ext, c), fields[c], shape, "f32")


def save_volume(volume: LabelVolume | ProbVolume, path: str, format: str | None = None,
                dtype: str | None = None):
    """Write a volume; format inferred from the extension unless given.

    Probability volumes are written as one 32-bit float file per class
    (``<base>_c<k>``); requesting an integer encoding for them is an error.
    """
    stem, ext = _split_path(path)
    if format is None:
        format = _format_for_ext(ext)
        if format is None:
            raise InputError(f"cannot infer format from {path!r}; pass format=")
    if format not in ("raw_sidecar", "nifti1"):
        raise InputError(f"unknown format {format!r}")
    if not ext:
        ext = ".raw" if format == "raw_sidecar" else ".nii"

    if isinstance(volume, LabelVolume):
        if dtype is None:
            dtype = "u8" if volume.num_classes <= 256 else "i16"
        if dtype not in ("u8", "i16"):
            raise InputError(f"labels cannot be stored as {dtype!r}")
        if format == "raw_sidecar":
            _write_raw(stem, volume.data, volume.shape, dtype, volume.num_classes)
        else:
            _write_nifti(stem + ext, volume.data, volume.shape, dtype)
        return

    if isinstance(volume, ProbVolume):
        if dtype is not None and dtype != "f32":
            raise InputError("probability volume requested in an integer-only encoding")
        for c in range(volume.num_classes):
            field = volume.data[c]
            if format == "raw_sidecar":
                _write_raw(f"{stem}_c{c}", field, volume.shape, "f32", volume.num_classes)
            else:
                _write_nifti(_channel_path(stem, ext, c), field, volume.shape, "f32")
        return

    raise InputError(f"cannot save object of type {type(volume).__name__}")
