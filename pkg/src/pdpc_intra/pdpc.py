"""Position-dependent prediction combination.

A PDPC prediction mixes the unfiltered boundary samples, with weights that
halve every ``d`` pixels away from the edge, and an HEVC prediction computed
from a blended, binomially smoothed copy ``s`` of the references::

    s = a*r + (1-a)*(h_k * r)
    p[x,y] = (c1v*top[x] - c2v*corner) * 2^(-y/dv)
           + (c1h*left[y] - c2h*corner) * 2^(-x/dh)
           + b'[x,y] * hevc(s)[x,y]

with ``b'`` chosen so the weights sum to one.  Everything here is real-valued;
use :func:`pdpc_intra.core.finalize` for integer output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import NamedTuple

import numpy as np

from .core import (
    NUM_MODES,
    ReferenceArray,
    as_ref_vectors,
    check_mode,
    check_size,
    from_contour,
    split_refs,
    to_contour,
)
from .intra import SmoothingPolicy, _expand, _coords, hevc_matrix, predict_hevc

KERNEL_ORDERS = (2, 4, 6, 8)
DEFAULT_MODE_GROUPS = (
    (0, 1),
    tuple(range(2, 10)),
    tuple(range(10, 18)),
    tuple(range(18, 26)),
    tuple(range(26, 35)),
)


def size_rule(N) -> int:
    """Decay distance d shared by both directions: 1 up to 16x16, 2 from 32x32."""
    return 1 if check_size(N) <= 16 else 2


@dataclass(frozen=True)
class PdpcParams:
    c1v: float = 0.0
    c2v: float = 0.0
    c1h: float = 0.0
    c2h: float = 0.0
    dv: int = 1
    dh: int = 1
    a: float = 1.0
    k: int = 2

    def __post_init__(self):
        for name in ("c1v", "c2v", "c1h", "c2h"):
            if abs(getattr(self, name)) > 1:
                raise ValueError(f"{name}={getattr(self, name)} outside [-1, 1]")
        if self.dv not in (1, 2) or self.dh not in (1, 2):
            raise ValueError("decay distances must be 1 or 2")
        if not 0.0 <= self.a <= 1.0:
            raise ValueError(f"blend weight a={self.a} outside [0, 1]")
        if self.k not in KERNEL_ORDERS:
            raise ValueError(f"binomial order k={self.k} not in {KERNEL_ORDERS}")

    @classmethod
    def identity(cls, N=4) -> "PdpcParams":
        d = size_rule(N)
        return cls(dv=d, dh=d)

    @classmethod
    def for_size(cls, N, c1v=0.0, c2v=0.0, c1h=0.0, c2h=0.0, a=1.0, k=2) -> "PdpcParams":
        d = size_rule(N)
        return cls(c1v, c2v, c1h, c2h, d, d, a, k)

    @property
    def is_identity(self) -> bool:
        return self.c1v == self.c2v == self.c1h == self.c2h == 0 and self.a == 1

    @property
    def cs(self) -> tuple[float, float, float, float]:
        return (self.c1v, self.c2v, self.c1h, self.c2h)


def binomial_kernel(k: int) -> np.ndarray:
    if k not in KERNEL_ORDERS:
        raise ValueError(f"binomial order must be one of {KERNEL_ORDERS}, got {k}")
    return np.array([comb(k, i) for i in range(k + 1)], dtype=np.float64) / 2.0**k


def make_filtered_refs(refs, a: float, k: int):
    """Blend references with their binomially smoothed contour (edge samples replicated)."""
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"blend weight a={a} outside [0, 1]")
    taps = binomial_kernel(k)
    vec = as_ref_vectors(refs).astype(np.float64)
    c = to_contour(vec)
    half = k // 2
    pad = [(0, 0)] * (c.ndim - 1) + [(half, half)]
    padded = np.pad(c, pad, mode="edge")
    n = c.shape[-1]
    smooth = np.zeros_like(c)
    for i, tap in enumerate(taps):
        smooth += tap * padded[..., i : i + n]
    s = from_contour(a * c + (1.0 - a) * smooth)
    if isinstance(refs, ReferenceArray):
        # real-valued samples, so no range re-validation beyond the blend itself
        return ReferenceArray.from_vector(s, refs.bit_depth)
    return s


def decay_weight(coord, d: int):
    """2^(-coord/d)."""
    if d not in (1, 2):
        raise ValueError("decay distance must be 1 or 2")
    return np.exp2(-np.asarray(coord, dtype=np.float64) / d)


def t_weight(x, y, N):
    N = check_size(N)
    return (N - np.minimum(x, y)) / N


class PdpcWeights(NamedTuple):
    wv: np.ndarray
    wvc: np.ndarray
    wh: np.ndarray
    whc: np.ndarray
    t: np.ndarray
    b: np.ndarray
    b_prime: np.ndarray


def pdpc_weights(x, y, N, params: PdpcParams) -> PdpcWeights:
    dy = decay_weight(y, params.dv)
    dx = decay_weight(x, params.dh)
    wv, wvc = params.c1v * dy, params.c2v * dy
    wh, whc = params.c1h * dx, params.c2h * dx
    b_prime = 1.0 - (params.c1v - params.c2v) * dy - (params.c1h - params.c2h) * dx
    t = t_weight(x, y, N)
    return PdpcWeights(wv, wvc, wh, whc, t, b_prime - t, b_prime)


def _near_edge_terms(vec, N, params, xs, ys):
    corner, top, left = split_refs(vec)
    c = _expand(corner, xs.ndim)
    dy = decay_weight(ys, params.dv)
    dx = decay_weight(xs, params.dh)
    return (params.c1v * top[..., xs] - params.c2v * c) * dy + (params.c1h * left[..., ys] - params.c2h * c) * dx


def _inner_policy(policy: SmoothingPolicy) -> SmoothingPolicy:
    # the filtered references already carry the smoothing
    return policy.without_smoothing()


def predict_pdpc_shortcut(refs, N, mode, params: PdpcParams, policy: SmoothingPolicy = SmoothingPolicy(),
                          xs=None, ys=None):
    """Real-valued PDPC prediction needing a single HEVC prediction (from ``s``)."""
    N, mode = check_size(N), check_mode(mode)
    bit_depth = refs.bit_depth if isinstance(refs, ReferenceArray) else 8
    vec = as_ref_vectors(refs, N).astype(np.float64)
    xs, ys = _coords(N, xs, ys)
    s = make_filtered_refs(vec, params.a, params.k)
    ps = predict_hevc(s, N, mode, _inner_policy(policy), integer=False, xs=xs, ys=ys, bit_depth=bit_depth)
    w = pdpc_weights(xs, ys, N, params)
    return _near_edge_terms(vec, N, params, xs, ys) + w.b_prime * ps


def predict_pdpc_full(refs, N, mode, params: PdpcParams, policy: SmoothingPolicy = SmoothingPolicy(),
                      xs=None, ys=None):
    """PDPC with separate unfiltered (weight t) and filtered (weight b) HEVC predictions."""
    N, mode = check_size(N), check_mode(mode)
    bit_depth = refs.bit_depth if isinstance(refs, ReferenceArray) else 8
    vec = as_ref_vectors(refs, N).astype(np.float64)
    xs, ys = _coords(N, xs, ys)
    inner = _inner_policy(policy)
    s = make_filtered_refs(vec, params.a, params.k)
    pr = predict_hevc(vec, N, mode, inner, integer=False, xs=xs, ys=ys, bit_depth=bit_depth)
    ps = predict_hevc(s, N, mode, inner, integer=False, xs=xs, ys=ys, bit_depth=bit_depth)
    w = pdpc_weights(xs, ys, N, params)
    return _near_edge_terms(vec, N, params, xs, ys) + w.t * pr + w.b * ps


def _check_linear(policy: SmoothingPolicy):
    if policy.edge_filters and policy.clip_boundary:
        raise ValueError("policy clips boundary filters; the PDPC predictor would not be linear")


def realize_matrix(N, mode, params: PdpcParams, policy: SmoothingPolicy = SmoothingPolicy()) -> np.ndarray:
    """The N^2 x (4N+1) matrix of the PDPC predictor: column j predicts from unit reference j."""
    N, mode = check_size(N), check_mode(mode)
    _check_linear(policy)
    cols = predict_pdpc_shortcut(np.eye(4 * N + 1), N, mode, params, policy)
    return cols.reshape(4 * N + 1, N * N).T.copy()


@lru_cache(maxsize=None)
def filter_matrix(N: int, a: float, k: int) -> np.ndarray:
    """Matrix F with s = F r."""
    f = make_filtered_refs(np.eye(4 * N + 1), a, k).T.copy()
    f.flags.writeable = False
    return f


@lru_cache(maxsize=None)
def _selectors(N: int):
    ys, xs = np.indices((N, N))
    n = 4 * N + 1
    rows = np.arange(N * N)
    top = np.zeros((N * N, n))
    top[rows, 1 + xs.ravel()] = 1.0
    left = np.zeros((N * N, n))
    left[rows, 2 * N + 1 + ys.ravel()] = 1.0
    corner = np.zeros((N * N, n))
    corner[:, 0] = 1.0
    return xs.ravel(), ys.ravel(), top, left, corner


def pdpc_basis(N, mode, a: float, k: int, d: int, policy: SmoothingPolicy = SmoothingPolicy()):
    """Affine decomposition of the PDPC matrix in the four c coefficients.

    Returns ``(H0, M)`` with ``realize_matrix(...) == H0 + sum(c[i] * M[i])``
    for c = (c1v, c2v, c1h, c2h) and fixed (a, k, d).
    """
    N, mode = check_size(N), check_mode(mode)
    _check_linear(policy)
    xs, ys, top, left, corner = _selectors(N)
    h0 = hevc_matrix(N, mode, _inner_policy(policy)) @ filter_matrix(N, float(a), int(k))
    wy = decay_weight(ys, d)[:, None]
    wx = decay_weight(xs, d)[:, None]
    basis = np.stack([wy * (top - h0), wy * (h0 - corner), wx * (left - h0), wx * (h0 - corner)])
    return h0, basis


@dataclass
class ParamLibrary:
    """Parameter sets per (block size, mode group, set index).

    Set 0 is always plain HEVC and is never stored.
    """

    num_sets: int
    mode_groups: tuple = DEFAULT_MODE_GROUPS
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.num_sets < 1:
            raise ValueError("a library needs at least the identity set")
        self.mode_groups = tuple(tuple(int(m) for m in g) for g in self.mode_groups)
        seen = [m for g in self.mode_groups for m in g]
        if sorted(seen) != list(range(NUM_MODES)):
            raise ValueError("mode groups must partition modes 0..34 exactly once")
        self._group_of = {m: gi for gi, g in enumerate(self.mode_groups) for m in g}
        for key, p in list(self.entries.items()):
            self._check_entry(key, p)

    def _check_entry(self, key, p: PdpcParams):
        N, g, s = key
        check_size(N)
        if not 0 <= g < len(self.mode_groups):
            raise ValueError(f"group index {g} out of range")
        if not 1 <= s < self.num_sets:
            raise ValueError(f"set index {s} out of range for {self.num_sets} sets")
        d = size_rule(N)
        if p.dv != d or p.dh != d:
            raise ValueError(f"N={N} requires dv = dh = {d}, got ({p.dv}, {p.dh})")

    def group_of(self, mode) -> int:
        return self._group_of[check_mode(mode)]

    def set(self, N, group: int, s: int, params: PdpcParams):
        key = (check_size(N), group, s)
        self._check_entry(key, params)
        self.entries[key] = params

    def params(self, N, mode, s: int) -> PdpcParams | None:
        """Parameters for a block, or None for set 0 (plain HEVC)."""
        if s == 0:
            return None
        return self.entries[(check_size(N), self.group_of(mode), s)]

    @property
    def sizes(self) -> list[int]:
        return sorted({k[0] for k in self.entries})

    def validate_for(self, sizes):
        for N in sizes:
            for g in range(len(self.mode_groups)):
                for s in range(1, self.num_sets):
                    if (N, g, s) not in self.entries:
                        raise ValueError(f"library has no parameters for N={N}, group {g}, set {s}")
