"""Dense video tensors, binary masks and the primitives shared by all attack stages.

Every type is an immutable value: the wrapped numpy array is marked read-only
and operations return new instances, so instances are safe to share across
concurrent tasks. Pixel data lives on the 0-255 scale as float64. Perturbed
tensors may leave that range during search; clamping would distort the
boundary geometry being measured, so it happens only on export.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FrameOutOfRange, ShapeMismatch, ZeroDirection

__all__ = [
    "VideoTensor",
    "BinaryMask",
    "Direction",
    "as_block",
    "l2_norm",
    "normalize",
    "apply_mask",
    "del_frame",
    "key_frame_count",
    "write_tensor",
    "read_video",
    "read_mask",
    "read_direction",
]

VBT1_MAGIC = b"VBT1"
_HEADER = struct.Struct("<4sIIII")


def _validated(data, *, name: str) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, copy=True)
    if arr.ndim != 4:
        raise ShapeMismatch(
            f"{name} must be a (frames, width, height, channels) tensor, got shape {arr.shape}"
        )
    if min(arr.shape) < 1:
        raise ShapeMismatch(f"{name} dims must all be >= 1, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


class _Tensor:
    """Shared plumbing for the three tensor value types."""

    __slots__ = ("data",)

    data: np.ndarray

    def __init__(self, data):
        self.data = _validated(data, name=type(self).__name__)
        self._check()

    def _check(self):
        pass

    @classmethod
    def _wrap(cls, data: np.ndarray):
        """Trusted fast path: takes ownership of a known-good float64 array."""
        self = object.__new__(cls)
        data.setflags(write=False)
        self.data = data
        return self

    def __setattr__(self, key, value):
        if hasattr(self, "data"):
            raise AttributeError(f"{type(self).__name__} is immutable")
        object.__setattr__(self, key, value)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    def __repr__(self):
        t, w, h, c = self.dims
        return f"{type(self).__name__}({t}x{w}x{h}x{c})"


class VideoTensor(_Tensor):
    """A video as a dense (frames, width, height, channels) block of reals."""


class Direction(_Tensor):
    """A search direction congruent to a video tensor.

    A useful direction is not identically zero; that is enforced where it
    matters (``normalize``) rather than at construction, because gradient
    estimates may legitimately come out as the zero tensor.
    """


class BinaryMask(_Tensor):
    """A {0,1} tensor selecting the pixels a perturbation may touch."""

    def _check(self):
        d = self.data
        if not ((d == 0.0) | (d == 1.0)).all():
            raise ValueError("mask values must be exactly 0 or 1")

    @classmethod
    def ones(cls, dims) -> "BinaryMask":
        return cls._wrap(np.ones(tuple(dims), dtype=np.float64))


def as_block(v) -> np.ndarray:
    """The underlying float64 array of a tensor value or array-like."""
    if isinstance(v, _Tensor):
        return v.data
    return np.asarray(v, dtype=np.float64)


def l2_norm(v) -> float:
    """Euclidean norm of a tensor's entries, as a plain float."""
    return float(np.linalg.norm(as_block(v).ravel()))


def normalize(v: Direction) -> Direction:
    """Scale a direction to unit L2 norm.

    Raises ZeroDirection for an identically-zero input, which signals a
    degenerate candidate (x_hat equal to x, or an empty mask).
    """
    arr = as_block(v)
    n = float(np.linalg.norm(arr.ravel()))
    if n == 0.0:
        raise ZeroDirection("cannot normalize an all-zero direction")
    return Direction._wrap(arr / n)


def apply_mask(v, m: BinaryMask):
    """Elementwise product with a congruent binary mask; preserves the input type."""
    if v.dims != m.dims:
        raise ShapeMismatch(f"tensor dims {v.dims} != mask dims {m.dims}")
    return type(v)._wrap(v.data * m.data)


def del_frame(m: BinaryMask, t: int) -> BinaryMask:
    """Copy of the mask with frame ``t`` zeroed out; other frames untouched."""
    if not 0 <= t < m.frames:
        raise FrameOutOfRange(f"frame {t} outside [0, {m.frames})")
    out = m.data.copy()
    out[t] = 0.0
    return BinaryMask._wrap(out)


def key_frame_count(m: BinaryMask) -> int:
    """Number of frames containing at least one selected pixel."""
    return int(np.any(m.data != 0.0, axis=(1, 2, 3)).sum())


def write_tensor(path, tensor: _Tensor) -> None:
    """Serialize a tensor to the VBT1 container.

    Layout: magic ``VBT1``, four little-endian uint32 dims (t, w, h, c), then
    t*w*h*c little-endian float32 values in row-major (t, w, h, c) order.
    """
    t, w, h, c = tensor.dims
    payload = tensor.data.astype("<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(VBT1_MAGIC, t, w, h, c))
        fh.write(payload)


def _read_block(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: too short to be a VBT1 file")
    magic, t, w, h, c = _HEADER.unpack_from(raw)
    if magic != VBT1_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {VBT1_MAGIC!r}")
    n = t * w * h * c
    body = raw[_HEADER.size :]
    if len(body) != 4 * n:
        raise ValueError(f"{path}: payload holds {len(body)} bytes, expected {4 * n}")
    flat = np.frombuffer(body, dtype="<f4", count=n)
    return flat.astype(np.float64).reshape(t, w, h, c)


def read_video(path) -> VideoTensor:
    return VideoTensor(_read_block(path))


def read_direction(path) -> Direction:
    return Direction(_read_block(path))


def read_mask(path) -> BinaryMask:
    return BinaryMask(_read_block(path))
