"""Slow scalar reference implementations used as independent checks.

Nothing here imports the vectorized prediction code; each function follows
the geometric or textbook definition directly.
"""

from fractions import Fraction
from math import comb, floor

import numpy as np

ANGLE_TABLE = {
    2: 32, 3: 26, 4: 21, 5: 17, 6: 13, 7: 9, 8: 5, 9: 2, 10: 0, 11: -2, 12: -5, 13: -9, 14: -13,
    15: -17, 16: -21, 17: -26, 18: -32, 19: -26, 20: -21, 21: -17, 22: -13, 23: -9, 24: -5, 25: -2,
    26: 0, 27: 2, 28: 5, 29: 9, 30: 13, 31: 17, 32: 21, 33: 26, 34: 32,
}


def split(vec):
    vec = [int(v) for v in vec]
    N = (len(vec) - 1) // 4
    return N, vec[0], vec[1 : 2 * N + 1], vec[2 * N + 1 :]


def angular(vec, mode):
    """Walk from each pixel along the prediction direction to the reference line."""
    N, corner, top, left = split(vec)
    A = ANGLE_TABLE[mode]
    inv = round(Fraction(8192, A)) if A < 0 else None
    vertical = mode >= 18
    main, side = (top, left) if vertical else (left, top)

    def ref(i):
        # position i on the main line; i = -1 is the corner
        if i >= 0:
            return main[min(i, 2 * N - 1)]
        if i == -1:
            return corner
        L = i + 1  # HEVC logical index (negative)
        j = floor(Fraction(L * inv, 256) + Fraction(1, 2)) - 1
        return side[j]

    out = np.zeros((N, N), dtype=np.int64)
    for y in range(N):
        for x in range(N):
            along, dist = (x, y + 1) if vertical else (y, x + 1)
            u = along + Fraction(dist * A, 32)  # crossing of the reference line
            base = floor(u)
            f = int((u - base) * 32)
            val = (32 - f) * ref(base) + (f * ref(base + 1) if f else 0)
            out[y, x] = (val + 16) >> 5
    return out


def planar(vec):
    N, corner, top, left = split(vec)
    shift = N.bit_length()
    out = np.zeros((N, N), dtype=np.int64)
    for y in range(N):
        for x in range(N):
            h = (N - 1 - x) * left[y] + (x + 1) * top[N]
            v = (N - 1 - y) * top[x] + (y + 1) * left[N]
            out[y, x] = (h + v + N) >> shift
    return out


def dc_mean(vec):
    N, corner, top, left = split(vec)
    return floor(Fraction(sum(top[:N]) + sum(left[:N]), 2 * N) + Fraction(1, 2))


def substitute(image, x0, y0, N, bit_depth=8):
    """Reference array (corner, top, left) by walking positions bottom-left to top-right."""
    H, W = image.shape
    positions = [(x0 - 1, y0 + k) for k in range(2 * N - 1, -1, -1)]
    positions += [(x0 - 1, y0 - 1)]
    positions += [(x0 + k, y0 - 1) for k in range(2 * N)]
    vals = [int(image[r, c]) if 0 <= c < W and 0 <= r < H else None for c, r in positions]
    if all(v is None for v in vals):
        vals = [1 << (bit_depth - 1)] * len(vals)
    else:
        first = next(v for v in vals if v is not None)
        prev = first
        for i, v in enumerate(vals):
            if v is None:
                vals[i] = prev
            prev = vals[i]
    left = vals[: 2 * N][::-1]
    corner = vals[2 * N]
    top = vals[2 * N + 1 :]
    return corner, top, left


def convolve_replicate(signal, taps):
    n, h = len(signal), len(taps) // 2
    out = []
    for i in range(n):
        acc = 0.0
        for j, t in enumerate(taps):
            idx = min(max(i + j - h, 0), n - 1)
            acc += t * signal[idx]
        out.append(acc)
    return out


def binomial(k):
    return [comb(k, i) / 2**k for i in range(k + 1)]


def pdpc_pixel(x, y, top, left, corner, ps, c1v, c2v, c1h, c2h, dv, dh):
    """Shortcut combination for a single pixel, spelled out term by term."""
    wy = 1.0 / 2 ** (y / dv)
    wx = 1.0 / 2 ** (x / dh)
    bp = 1 - (c1v - c2v) * wy - (c1h - c2h) * wx
    return (c1v * top[x] - c2v * corner) * wy + (c1h * left[y] - c2h * corner) * wx + bp * ps
