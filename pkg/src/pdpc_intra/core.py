"""Block geometry, reference arrays and the canonical reference ordering.

A reference vector for an N x N block has 4N+1 entries::

    index 0            corner   r[-1,-1]
    index 1 .. 2N      top      r[0,-1] .. r[2N-1,-1]
    index 2N+1 .. 4N   left     r[-1,0] .. r[-1,2N-1]

Every matrix in the package (predictor matrices, correlation statistics)
uses this column ordering.  The *contour* ordering (left reversed, corner,
top) is the 1-D signal used by reference filters and by the availability
substitution.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

BLOCK_SIZES = (4, 8, 16, 32)
NUM_MODES = 35
PLANAR, DC, HOR, DIA, VER = 0, 1, 10, 18, 26


class BoundsError(ValueError):
    """Block does not fit inside the image."""


@dataclass(frozen=True)
class PredictionMode:
    index: int

    def __post_init__(self):
        if not 0 <= int(self.index) < NUM_MODES:
            raise ValueError(f"prediction mode must be in [0, 34], got {self.index}")

    @property
    def is_angular(self) -> bool:
        return self.index >= 2

    def __int__(self) -> int:
        return int(self.index)


@dataclass(frozen=True)
class BlockSize:
    N: int

    def __post_init__(self):
        if self.N not in BLOCK_SIZES:
            raise ValueError(f"block size must be one of {BLOCK_SIZES}, got {self.N}")

    @property
    def log2N(self) -> int:
        return self.N.bit_length() - 1

    def __int__(self) -> int:
        return self.N


def check_size(N) -> int:
    """Normalize a BlockSize or int to a validated int."""
    return BlockSize(int(N)).N


def check_mode(mode) -> int:
    return PredictionMode(int(mode)).index


def num_refs(N: int) -> int:
    return 4 * N + 1


@dataclass(frozen=True, eq=False)
class ReferenceArray:
    """The 4N+1 causal samples of an N x N block."""

    corner: float
    top: np.ndarray
    left: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        top = np.array(self.top)
        left = np.array(self.left)
        if top.ndim != 1 or top.shape != left.shape:
            raise ValueError("top and left must be 1-D sequences of equal length")
        check_size(top.size // 2)
        if top.size % 2:
            raise ValueError("reference sides must have length 2N")
        if self.bit_depth not in (8, 10):
            raise ValueError(f"unsupported bit depth {self.bit_depth}")
        hi = (1 << self.bit_depth) - 1
        vec = np.concatenate([[self.corner], top, left])
        if np.any(vec < 0) or np.any(vec > hi):
            raise ValueError(f"reference samples outside [0, {hi}]")
        top.flags.writeable = False
        left.flags.writeable = False
        object.__setattr__(self, "top", top)
        object.__setattr__(self, "left", left)

    @property
    def N(self) -> int:
        return self.top.size // 2

    def to_vector(self) -> np.ndarray:
        """Canonical 4N+1 vector."""
        return np.concatenate([[self.corner], self.top, self.left])

    @classmethod
    def from_vector(cls, vec, bit_depth: int = 8) -> "ReferenceArray":
        vec = np.asarray(vec)
        N = (vec.size - 1) // 4
        if vec.ndim != 1 or vec.size != num_refs(N):
            raise ValueError(f"reference vector length {vec.size} is not 4N+1")
        return cls(vec[0], vec[1 : 2 * N + 1], vec[2 * N + 1 :], bit_depth)

    def transpose(self) -> "ReferenceArray":
        return ReferenceArray(self.corner, self.left, self.top, self.bit_depth)

    def __eq__(self, other):
        if not isinstance(other, ReferenceArray):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(
            self.to_vector(), other.to_vector()
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BlockView:
    samples: np.ndarray
    origin: tuple[int, int] = (0, 0)

    def __post_init__(self):
        s = np.array(self.samples)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("block samples must be a square 2-D array")
        check_size(s.shape[0])
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    def to_vector(self) -> np.ndarray:
        """Raster-order samples, index y*N + x."""
        return self.samples.reshape(-1)


# PredictionBlock values are plain (N, N) float arrays indexed [y, x].
PredictionBlock = np.ndarray


def as_ref_vectors(refs, N: int | None = None) -> np.ndarray:
    """Return refs as an array of canonical vectors, shape (..., 4N+1)."""
    if isinstance(refs, ReferenceArray):
        vec = refs.to_vector()
    else:
        vec = np.asarray(refs)
    n = vec.shape[-1]
    if (n - 1) % 4 or (n - 1) // 4 not in BLOCK_SIZES:
        raise ValueError(f"reference vector length {n} is not 4N+1 for a valid N")
    if N is not None and n != num_refs(check_size(N)):
        raise ValueError(f"reference vector length {n} does not match N={int(N)}")
    return vec


def split_refs(vec: np.ndarray):
    """Views (corner, top, left) of canonical vectors along the last axis."""
    N = (vec.shape[-1] - 1) // 4
    return vec[..., 0], vec[..., 1 : 2 * N + 1], vec[..., 2 * N + 1 :]


@lru_cache(maxsize=None)
def contour_order(N: int) -> np.ndarray:
    """Canonical indices listed in contour order: left[2N-1..0], corner, top[0..2N-1]."""
    left = 2 * N + 1 + np.arange(2 * N)[::-1]
    top = 1 + np.arange(2 * N)
    order = np.concatenate([left, [0], top])
    order.flags.writeable = False
    return order


@lru_cache(maxsize=None)
def canonical_from_contour(N: int) -> np.ndarray:
    inv = np.argsort(contour_order(N))
    inv.flags.writeable = False
    return inv


def to_contour(vec: np.ndarray) -> np.ndarray:
    N = (vec.shape[-1] - 1) // 4
    return vec[..., contour_order(N)]


def from_contour(contour: np.ndarray) -> np.ndarray:
    N = (contour.shape[-1] - 1) // 4
    return contour[..., canonical_from_contour(N)]


def transpose_refs(vec: np.ndarray) -> np.ndarray:
    """Swap the top and left halves of canonical vectors."""
    corner, top, left = split_refs(vec)
    return np.concatenate([corner[..., None], left, top], axis=-1)


def extract_block(image, x0: int, y0: int, N, bit_depth: int | None = None):
    """Cut an N x N block and its substituted reference array out of an image.

    ``image`` is a GrayImage or a 2-D array (rows = y).  References come from
    original pixels; positions outside the image are filled by replicating
    the nearest available sample along the contour (HEVC substitution), or
    with mid-gray when nothing is available.
    """
    N = check_size(N)
    samples = getattr(image, "samples", image)
    if bit_depth is None:
        bit_depth = getattr(image, "bit_depth", 8)
    samples = np.asarray(samples)
    H, W = samples.shape
    if x0 < 0 or y0 < 0 or x0 + N > W or y0 + N > H:
        raise BoundsError(f"block ({x0},{y0}) size {N} outside {W}x{H} image")

    block = BlockView(samples[y0 : y0 + N, x0 : x0 + N].copy(), (x0, y0))
    contour, avail = _raw_contour(samples, x0, y0, N)
    contour = substitute(contour, avail, bit_depth)
    vec = from_contour(contour)
    return block, ReferenceArray.from_vector(vec, bit_depth)


def _raw_contour(samples: np.ndarray, x0: int, y0: int, N: int):
    H, W = samples.shape
    # positions along the contour: (col, row)
    cols = np.concatenate([np.full(2 * N, x0 - 1), [x0 - 1], x0 + np.arange(2 * N)])
    rows = np.concatenate([y0 + np.arange(2 * N)[::-1], [y0 - 1], np.full(2 * N, y0 - 1)])
    avail = (cols >= 0) & (cols < W) & (rows >= 0) & (rows < H)
    values = np.zeros(cols.size, dtype=np.int64)
    values[avail] = samples[rows[avail], cols[avail]]
    return values, avail


def substitute(contour: np.ndarray, avail: np.ndarray, bit_depth: int) -> np.ndarray:
    """Fill unavailable contour samples by replication, scanning bottom-left to top-right."""
    out = np.array(contour, dtype=np.int64)
    if not avail.any():
        out[:] = 1 << (bit_depth - 1)
        return out
    if not avail[0]:
        out[0] = out[np.argmax(avail)]
    for i in range(1, out.size):
        if not avail[i]:
            out[i] = out[i - 1]
    return out


def needs_substitution(shape, x0: int, y0: int, N: int) -> bool:
    """True when any of the block's 4N+1 reference positions lies outside the image."""
    H, W = shape
    return x0 == 0 or y0 == 0 or x0 + 2 * N > W or y0 + 2 * N > H


def block_positions(shape, N: int, stride: int | None = None):
    """Top-left corners of the blocks on a stride grid, raster order."""
    H, W = shape
    stride = stride or N
    for y0 in range(0, H - N + 1, stride):
        for x0 in range(0, W - N + 1, stride):
            yield x0, y0


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def finalize(pred, bit_depth: int = 8) -> np.ndarray:
    """Clip real-valued predictions to the sample range and round half away from zero."""
    hi = (1 << bit_depth) - 1
    return np.clip(round_half_away(np.asarray(pred, dtype=np.float64)), 0, hi).astype(np.int64)
