"""HEVC intra predictors: planar, DC, 33 angular modes, [1 2 1] reference smoothing.

All predictors take canonical reference vectors (or a ReferenceArray) and
work on batches: refs of shape (..., 4N+1) give predictions of shape
(..., N, N) indexed [y, x].  Two arithmetic flavours are offered:

* ``integer=True``  bit-exact HEVC integer arithmetic (shifts with offsets)
* ``integer=False`` the same formulas over reals, which makes every predictor
  a linear map of its references

Predictions are defined pixel by pixel.  Passing coordinate arrays ``xs`` and
``ys`` evaluates only those positions, with the same arithmetic as the
whole-block call.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (
    DC,
    HOR,
    PLANAR,
    VER,
    ReferenceArray,
    as_ref_vectors,
    check_mode,
    check_size,
    from_contour,
    split_refs,
    to_contour,
)

# intraPredAngle for modes 2..34
ANGLES = (
    32, 26, 21, 17, 13, 9, 5, 2, 0, -2, -5, -9, -13, -17, -21, -26,
    -32, -26, -21, -17, -13, -9, -5, -2, 0, 2, 5, 9, 13, 17, 21, 26, 32,
)
INV_ANGLES = {-2: -4096, -5: -1638, -9: -910, -13: -630, -17: -482, -21: -390, -26: -315, -32: -256}

# smoothing applies when min(|m-26|, |m-10|) exceeds this threshold
_SMOOTH_THRESHOLD = {8: 7, 16: 1, 32: 0}


@dataclass(frozen=True)
class SmoothingPolicy:
    """Which HEVC reference/boundary filters are active.

    ``clip_boundary`` clips the DC/H/V boundary-filter output in real-valued
    predictions as well; integer predictions are always clipped.  Leave it
    off whenever the predictor must stay linear.
    """

    enabled: bool = True
    edge_filters: bool = True
    clip_boundary: bool = False

    def without_smoothing(self) -> "SmoothingPolicy":
        return SmoothingPolicy(False, self.edge_filters, self.clip_boundary)


def intra_angle(mode: int) -> int:
    mode = check_mode(mode)
    if mode < 2:
        raise ValueError(f"mode {mode} is not angular")
    return ANGLES[mode - 2]


def smoothing_decision(mode, N) -> bool:
    mode, N = check_mode(mode), check_size(N)
    if N == 4 or mode == DC:
        return False
    return min(abs(mode - VER), abs(mode - HOR)) > _SMOOTH_THRESHOLD[N]


def _unwrap(refs, N=None, integer=True):
    vec = as_ref_vectors(refs, N)
    if integer:
        if not np.issubdtype(vec.dtype, np.integer):
            if not np.all(vec == np.round(vec)):
                raise ValueError("integer prediction needs integer reference samples")
            vec = vec.astype(np.int64)
        else:
            vec = vec.astype(np.int64)
    else:
        vec = vec.astype(np.float64)
    return vec


def _rewrap(like, vec):
    if isinstance(like, ReferenceArray):
        return ReferenceArray.from_vector(vec, like.bit_depth)
    return vec


def smooth_refs_121(refs, integer: bool = True):
    """[1 2 1] filter along the reference contour; both contour ends are kept."""
    vec = _unwrap(refs, integer=integer)
    c = to_contour(vec)
    out = c.copy()
    inner = c[..., :-2] + 2 * c[..., 1:-1] + c[..., 2:]
    out[..., 1:-1] = (inner + 2) >> 2 if integer else inner / 4.0
    return _rewrap(refs, from_contour(out))


@lru_cache(maxsize=None)
def _grid(N: int):
    ys, xs = np.indices((N, N))
    ys.flags.writeable = False
    xs.flags.writeable = False
    return xs, ys


def _coords(N, xs, ys):
    if xs is None and ys is None:
        return _grid(N)
    gx, gy = _grid(N)
    xs = gx if xs is None else np.asarray(xs)
    ys = gy if ys is None else np.asarray(ys)
    if np.any(xs < 0) or np.any(xs >= N) or np.any(ys < 0) or np.any(ys >= N):
        raise ValueError("pixel coordinates outside the block")
    return np.broadcast_arrays(xs, ys)


def predict_planar(refs, N, integer: bool = True, xs=None, ys=None):
    N = check_size(N)
    vec = _unwrap(refs, N, integer)
    xs, ys = _coords(N, xs, ys)
    corner, top, left = split_refs(vec)
    s = (
        (N - 1 - xs) * left[..., ys]
        + (xs + 1) * _expand(top[..., N], xs.ndim)
        + (N - 1 - ys) * top[..., xs]
        + (ys + 1) * _expand(left[..., N], xs.ndim)
    )
    if integer:
        return (s + N) >> (N.bit_length())
    return s / (2.0 * N)


def _dc_value(top, left, N, integer):
    total = top[..., :N].sum(axis=-1) + left[..., :N].sum(axis=-1)
    if integer:
        return (total + N) >> N.bit_length()
    return total / (2.0 * N)


def _expand(a, ndim):
    """Append ndim trailing axes so per-block scalars broadcast against pixels."""
    return a.reshape(a.shape + (1,) * ndim)


def predict_dc(refs, N, edge_filters: bool = True, integer: bool = True, xs=None, ys=None):
    N = check_size(N)
    vec = _unwrap(refs, N, integer)
    xs, ys = _coords(N, xs, ys)
    corner, top, left = split_refs(vec)
    dc = _expand(_dc_value(top, left, N, integer), xs.ndim)
    p = dc + np.zeros(xs.shape, dtype=dc.dtype)
    if edge_filters and N < 32:
        t, l = top[..., xs], left[..., ys]
        if integer:
            p00 = (_expand(left[..., 0] + top[..., 0], xs.ndim) + 2 * dc + 2) >> 2
            prow = (t + 3 * dc + 2) >> 2
            pcol = (l + 3 * dc + 2) >> 2
        else:
            p00 = (_expand(left[..., 0] + top[..., 0], xs.ndim) + 2 * dc) / 4.0
            prow = (t + 3 * dc) / 4.0
            pcol = (l + 3 * dc) / 4.0
        p = np.where((xs == 0) & (ys == 0), p00, np.where(ys == 0, prow, np.where(xs == 0, pcol, p)))
    return p


def _logical_to_canonical(logical, N, vertical, inv):
    """Map indices of HEVC's 1-D main reference ref[] to canonical vector positions."""
    logical = np.asarray(logical)
    main_base = 0 if vertical else 2 * N
    side_base = 2 * N + 1 if vertical else 1
    out = np.where(logical > 0, main_base + logical, 0)
    if inv is not None:
        side = ((logical * inv + 128) >> 8) - 1
        out = np.where(logical < 0, side_base + side, out)
    return out


@lru_cache(maxsize=None)
def _angular_tables(N: int, mode: int):
    xs, ys = _grid(N)
    return _angular_indices(N, mode, xs, ys)


def _angular_indices(N, mode, xs, ys):
    A = intra_angle(mode)
    vertical = mode >= 18
    along, across = (xs, ys) if vertical else (ys, xs)
    pos = (across + 1) * A
    idx = pos >> 5
    frac = pos & 31
    l1 = along + idx + 1
    l2 = np.minimum(l1 + 1, 2 * N)
    inv = INV_ANGLES.get(A)
    i1 = _logical_to_canonical(l1, N, vertical, inv)
    i2 = _logical_to_canonical(l2, N, vertical, inv)
    return i1, i2, frac


def predict_angular(refs, N, mode, integer: bool = True, xs=None, ys=None):
    """Directional prediction with 1/32-pel linear interpolation (no boundary filters)."""
    N = check_size(N)
    mode = check_mode(mode)
    if mode < 2:
        raise ValueError(f"mode {mode} is not angular")
    vec = _unwrap(refs, N, integer)
    if xs is None and ys is None:
        i1, i2, frac = _angular_tables(N, mode)
    else:
        xs, ys = _coords(N, xs, ys)
        i1, i2, frac = _angular_indices(N, mode, xs, ys)
    v = (32 - frac) * vec[..., i1] + frac * vec[..., i2]
    if integer:
        return (v + 16) >> 5
    return v / 32.0


def _boundary_filter(p, vec, N, mode, xs, ys, integer, clip, bit_depth):
    """HEVC first-row/column gradient correction for pure horizontal and vertical modes."""
    corner, top, left = split_refs(vec)
    c = _expand(corner, xs.ndim)
    if mode == VER:
        edge, grad, mask = _expand(top[..., 0], xs.ndim), left[..., ys] - c, xs == 0
    else:
        edge, grad, mask = _expand(left[..., 0], xs.ndim), top[..., xs] - c, ys == 0
    q = edge + (grad >> 1) if integer else edge + grad / 2.0
    if clip:
        q = np.clip(q, 0, (1 << bit_depth) - 1)
    return np.where(mask, q, p)


def predict_hevc(refs, N, mode, policy: SmoothingPolicy = SmoothingPolicy(), integer: bool = True,
                 xs=None, ys=None, bit_depth: int | None = None):
    """HEVC luma prediction for one mode, including reference smoothing and boundary filters."""
    N = check_size(N)
    mode = check_mode(mode)
    if bit_depth is None:
        bit_depth = refs.bit_depth if isinstance(refs, ReferenceArray) else 8
    vec = _unwrap(refs, N, integer)
    if policy.enabled and smoothing_decision(mode, N):
        vec = smooth_refs_121(vec, integer)
    edges = policy.edge_filters and N < 32
    if mode == PLANAR:
        return predict_planar(vec, N, integer, xs, ys)
    if mode == DC:
        return predict_dc(vec, N, edges, integer, xs, ys)
    p = predict_angular(vec, N, mode, integer, xs, ys)
    if edges and mode in (HOR, VER):
        xs, ys = _coords(N, xs, ys)
        p = _boundary_filter(p, vec, N, mode, xs, ys, integer, integer or policy.clip_boundary, bit_depth)
    return p


def predict_all(refs, N, policy: SmoothingPolicy = SmoothingPolicy(), integer: bool = True):
    """Predictions for all 35 modes, shape (..., 35, N, N)."""
    return np.stack([predict_hevc(refs, N, m, policy, integer) for m in range(35)], axis=-3)


@lru_cache(maxsize=None)
def hevc_matrix(N: int, mode: int, policy: SmoothingPolicy = SmoothingPolicy()) -> np.ndarray:
    """Real-valued HEVC predictor as an N^2 x (4N+1) matrix (rows raster, columns canonical)."""
    if policy.edge_filters and policy.clip_boundary:
        raise ValueError("clipped boundary filters are not linear")
    eye = np.eye(4 * N + 1)
    cols = predict_hevc(eye, N, mode, policy, integer=False)
    m = cols.reshape(4 * N + 1, N * N).T.copy()
    m.flags.writeable = False
    return m
