"""Volume/mask data model plus every byte format that crosses the wire.

Two binary formats live here:

SVOL1 (dense volume):
    "SVOL" | version 0x01 | dtype code (U8=0, I16=1, U16=2, F32=3)
    | nx ny nz as u32 LE | sx sy sz as f32 LE | raw voxels LE, x-fastest

RLE mask:
    nx ny nz as u32 LE, then run lengths as unsigned LEB128 varints.
    Runs alternate voxel values starting at 0; only the leading zero-run
    may have length 0.

Voxel order is x-fastest everywhere (flat index = i + nx*(j + ny*k)).
Digests are SHA-256 over these canonical encodings, so equal content
always hashes identically across processes and platforms.

A minimal NIfTI-1 reader handles ingestion of standard medical volumes
(single-file .nii, optionally gzipped). Orientation/affine and the
scl_slope/scl_inter intensity scaling are deliberately not applied:
voxels are used exactly as stored.
"""

from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass

import numpy as np

SVOL_MAGIC = b"SVOL"
SVOL_VERSION = 1
SVOL_HEADER_LEN = 30

DTYPE_CODES = {"U8": 0, "I16": 1, "U16": 2, "F32": 3}
CODE_TO_DTYPE = {v: k for k, v in DTYPE_CODES.items()}
NUMPY_DTYPES = {
    "U8": np.dtype(np.uint8),
    "I16": np.dtype(np.int16),
    "U16": np.dtype(np.uint16),
    "F32": np.dtype(np.float32),
}

NIFTI_HEADER_LEN = 348
NIFTI_DATATYPES = {2: "U8", 4: "I16", 512: "U16", 16: "F32"}


class VolumeError(ValueError):
    """Base for every malformed-data error raised by this module."""


class BadMagic(VolumeError):
    pass


class UnsupportedVersion(VolumeError):
    pass


class UnknownDtype(VolumeError):
    pass


class TruncatedPayload(VolumeError):
    pass


class ZeroDim(VolumeError):
    pass


class NonPositiveSpacing(VolumeError):
    pass


class BufferSizeMismatch(VolumeError):
    pass


class RunSumMismatch(VolumeError):
    pass


class InteriorZeroRun(VolumeError):
    pass


class TruncatedVarint(VolumeError):
    pass


class BadHeader(VolumeError):
    pass


class UnsupportedDatatype(VolumeError):
    pass


class NonPositivePixdim(VolumeError):
    pass


def _check_dims(dims) -> tuple[int, int, int]:
    if len(dims) != 3:
        raise ZeroDim(f"need 3 dimensions, got {len(dims)}")
    out = tuple(int(d) for d in dims)
    if any(d < 1 for d in out):
        raise ZeroDim(f"non-positive dimension in {out}")
    return out


@dataclass(frozen=True, eq=False)
class Volume3D:
    """Dense 3D scalar image.

    ``voxels`` is a flat, read-only numpy array in x-fastest order.
    Spacing is snapped to float32 on construction because the wire
    format carries it as f32; this keeps encode/decode an exact identity.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    dtype: str
    voxels: np.ndarray

    def __post_init__(self):
        dims = _check_dims(self.dims)
        if self.dtype not in NUMPY_DTYPES:
            raise UnknownDtype(f"dtype {self.dtype!r} not one of {sorted(NUMPY_DTYPES)}")
        if len(self.spacing) != 3:
            raise NonPositiveSpacing("need 3 spacing components")
        spacing = tuple(float(np.float32(s)) for s in self.spacing)
        if any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise NonPositiveSpacing(f"spacing must be positive and finite, got {spacing}")
        vox = np.ascontiguousarray(self.voxels, dtype=NUMPY_DTYPES[self.dtype]).reshape(-1)
        n = dims[0] * dims[1] * dims[2]
        if vox.size != n:
            raise BufferSizeMismatch(f"buffer has {vox.size} voxels, dims imply {n}")
        vox = vox.copy()
        vox.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "voxels", vox)

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def as_xyz(self) -> np.ndarray:
        """View shaped (nx, ny, nz); element [i, j, k] is voxel (i, j, k)."""
        nx, ny, nz = self.dims
        return self.voxels.reshape(nz, ny, nx).transpose(2, 1, 0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Volume3D):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and self.dtype == other.dtype
            and self.voxels.tobytes() == other.voxels.tobytes()
        )


@dataclass(frozen=True, eq=False)
class Mask3D:
    """Binary segmentation volume; ``bits`` is flat uint8 of 0/1, x-fastest."""

    dims: tuple[int, int, int]
    bits: np.ndarray

    def __post_init__(self):
        dims = _check_dims(self.dims)
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8).reshape(-1)
        n = dims[0] * dims[1] * dims[2]
        if bits.size != n:
            raise BufferSizeMismatch(f"mask has {bits.size} voxels, dims imply {n}")
        if bits.size and bits.max() > 1:
            raise ValueError("mask elements must be 0 or 1")
        bits = bits.copy()
        bits.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def zeros(cls, dims) -> "Mask3D":
        dims = _check_dims(dims)
        return cls(dims, np.zeros(dims[0] * dims[1] * dims[2], dtype=np.uint8))

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def count(self) -> int:
        return int(self.bits.sum())

    def as_xyz(self) -> np.ndarray:
        nx, ny, nz = self.dims
        return self.bits.reshape(nz, ny, nx).transpose(2, 1, 0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mask3D):
            return NotImplemented
        return self.dims == other.dims and self.bits.tobytes() == other.bits.tobytes()


# --- SVOL1 codec ---


def encode_svol(v: Volume3D) -> bytes:
    """Serialize a volume to SVOL1 bytes. Deterministic, byte-for-byte."""
    header = SVOL_MAGIC + bytes((SVOL_VERSION, DTYPE_CODES[v.dtype]))
    header += struct.pack("<IIIfff", *v.dims, *v.spacing)
    le = NUMPY_DTYPES[v.dtype].newbyteorder("<")
    return header + v.voxels.astype(le, copy=False).tobytes()


def decode_svol(b: bytes) -> Volume3D:
    """Parse SVOL1 bytes; exact inverse of :func:`encode_svol`."""
    b = bytes(b)
    if len(b) >= 4 and b[:4] != SVOL_MAGIC:
        raise BadMagic(f"magic {b[:4]!r} != {SVOL_MAGIC!r}")
    if len(b) < SVOL_HEADER_LEN:
        raise TruncatedPayload(f"stream has {len(b)} bytes, header needs {SVOL_HEADER_LEN}")
    version = b[4]
    if version != SVOL_VERSION:
        raise UnsupportedVersion(f"version {version}")
    code = b[5]
    if code not in CODE_TO_DTYPE:
        raise UnknownDtype(f"dtype code {code}")
    dtype = CODE_TO_DTYPE[code]
    nx, ny, nz, sx, sy, sz = struct.unpack_from("<IIIfff", b, 6)
    if min(nx, ny, nz) < 1:
        raise ZeroDim(f"dims ({nx}, {ny}, {nz})")
    for s in (sx, sy, sz):
        if not np.isfinite(s) or s <= 0:
            raise NonPositiveSpacing(f"spacing ({sx}, {sy}, {sz})")
    expected = nx * ny * nz * NUMPY_DTYPES[dtype].itemsize
    payload = b[SVOL_HEADER_LEN:]
    if len(payload) != expected:
        raise TruncatedPayload(f"payload has {len(payload)} bytes, header implies {expected}")
    vox = np.frombuffer(payload, dtype=NUMPY_DTYPES[dtype].newbyteorder("<"))
    return Volume3D((nx, ny, nz), (sx, sy, sz), dtype, vox.astype(NUMPY_DTYPES[dtype], copy=False))


def peek_svol_voxel_count(b: bytes) -> int | None:
    """Voxel count claimed by an SVOL1 header, or None if the header is unreadable.

    Lets a server enforce size limits before decoding the payload.
    """
    if len(b) < 18 or b[:4] != SVOL_MAGIC or b[4] != SVOL_VERSION:
        return None
    nx, ny, nz = struct.unpack_from("<III", b, 6)
    return nx * ny * nz


# --- RLE mask codec ---


def _leb128_encode(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _leb128_read(b: bytes, offset: int) -> tuple[int, int]:
    value = 0
    shift = 0
    while True:
        if offset >= len(b):
            raise TruncatedVarint("stream ended inside a varint")
        byte = b[offset]
        offset += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, offset
        shift += 7


def rle_encode(m: Mask3D) -> bytes:
    """Encode a mask as dims header + alternating-run varints (first run is 0s)."""
    bits = m.bits
    n = bits.size
    change = np.flatnonzero(bits[1:] != bits[:-1]) + 1
    bounds = np.concatenate(([0], change, [n]))
    runs = np.diff(bounds).tolist()
    if bits[0] == 1:
        runs.insert(0, 0)
    out = bytearray(struct.pack("<III", *m.dims))
    for run in runs:
        out += _leb128_encode(int(run))
    return bytes(out)


def rle_decode(b: bytes) -> Mask3D:
    """Decode an RLE mask stream; exact inverse of :func:`rle_encode`."""
    b = bytes(b)
    if len(b) < 12:
        raise TruncatedPayload(f"stream has {len(b)} bytes, dims header needs 12")
    dims = struct.unpack_from("<III", b, 0)
    if min(dims) < 1:
        raise ZeroDim(f"dims {dims}")
    n = dims[0] * dims[1] * dims[2]
    runs: list[int] = []
    total = 0
    offset = 12
    while offset < len(b):
        run, offset = _leb128_read(b, offset)
        if run == 0 and runs:
            raise InteriorZeroRun(f"zero-length run at index {len(runs)}")
        runs.append(run)
        total += run
        if total > n:
            raise RunSumMismatch(f"runs sum past {n} voxels")
    if total != n:
        raise RunSumMismatch(f"runs sum to {total}, dims imply {n}")
    values = np.arange(len(runs), dtype=np.uint8) & 1
    bits = np.repeat(values, runs)
    return Mask3D(dims, bits)


# --- Content digests ---


def digest_volume(v: Volume3D) -> str:
    """SHA-256 over the canonical SVOL1 bytes, as 64 lowercase hex chars."""
    return hashlib.sha256(encode_svol(v)).hexdigest()


def digest_mask(m: Mask3D) -> str:
    """SHA-256 over the canonical RLE bytes, as 64 lowercase hex chars."""
    return hashlib.sha256(rle_encode(m)).hexdigest()


# --- NIfTI-1 ingestion (read-only, single-file .nii, optionally gzipped) ---


def parse_nifti(b: bytes) -> Volume3D:
    """Parse a NIfTI-1 single-file volume into a :class:`Volume3D`.

    Handles both byte orders (detected via sizeof_hdr) and gzip-compressed
    streams. Only scalar 3D volumes are accepted; higher-dimensional files
    pass only when every trailing dimension is 1. Stored voxel values are
    used as-is: scl_slope/scl_inter scaling and orientation are ignored.
    """
    b = bytes(b)
    if b[:2] == b"\x1f\x8b":
        try:
            b = gzip.decompress(b)
        except (OSError, EOFError) as exc:
            raise TruncatedPayload(f"bad gzip stream: {exc}") from exc
    if len(b) < NIFTI_HEADER_LEN:
        raise BadHeader(f"stream has {len(b)} bytes, header needs {NIFTI_HEADER_LEN}")
    if struct.unpack_from("<i", b, 0)[0] == NIFTI_HEADER_LEN:
        endian = "<"
    elif struct.unpack_from(">i", b, 0)[0] == NIFTI_HEADER_LEN:
        endian = ">"
    else:
        raise BadHeader("sizeof_hdr is not 348 in either byte order")

    magic = b[344:348]
    if magic != b"n+1\x00":
        raise BadMagic(f"magic {magic!r} != b'n+1\\x00' (only single-file .nii supported)")

    dim = struct.unpack_from(endian + "8h", b, 40)
    datatype = struct.unpack_from(endian + "h", b, 70)[0]
    pixdim = struct.unpack_from(endian + "8f", b, 76)
    vox_offset_f = struct.unpack_from(endian + "f", b, 108)[0]

    ndim = dim[0]
    if ndim < 1 or ndim > 7:
        raise BadHeader(f"dim[0] = {ndim} outside 1..7")
    if any(dim[i] < 1 for i in range(1, ndim + 1)):
        raise BadHeader(f"non-positive dimension in dim[1..{ndim}]")
    if ndim > 3 and any(dim[i] != 1 for i in range(4, ndim + 1)):
        raise BadHeader("volumes with dim[0] > 3 need all trailing dims == 1")
    dims = tuple(dim[i] if i <= ndim else 1 for i in (1, 2, 3))

    if datatype not in NIFTI_DATATYPES:
        raise UnsupportedDatatype(f"datatype code {datatype}")
    dtype = NIFTI_DATATYPES[datatype]

    spacing = []
    for axis in (1, 2, 3):
        s = pixdim[axis] if axis <= ndim else 1.0
        if not np.isfinite(s) or s <= 0:
            raise NonPositivePixdim(f"pixdim[{axis}] = {s}")
        spacing.append(float(s))

    if not np.isfinite(vox_offset_f) or vox_offset_f != int(vox_offset_f) or vox_offset_f < NIFTI_HEADER_LEN:
        raise BadHeader(f"vox_offset {vox_offset_f} is not an integer >= {NIFTI_HEADER_LEN}")
    offset = int(vox_offset_f)

    np_dtype = NUMPY_DTYPES[dtype]
    nbytes = dims[0] * dims[1] * dims[2] * np_dtype.itemsize
    payload = b[offset : offset + nbytes]
    if len(payload) < nbytes:
        raise TruncatedPayload(f"payload has {len(payload)} bytes, header implies {nbytes}")
    vox = np.frombuffer(payload, dtype=np_dtype.newbyteorder(endian))
    return Volume3D(dims, tuple(spacing), dtype, vox.astype(np_dtype, copy=False))
