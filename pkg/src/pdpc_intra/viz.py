"""Grayscale rendering of predictor matrices.

Each mode is one row of tiles; tile j is column j of that mode's matrix
(the weights every block pixel gives reference j), laid out as an N x N
image.  Zero maps to gray 128, positive weights are lighter, negative darker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import num_refs, round_half_away

GUTTER_VALUE = 64


@dataclass(frozen=True, eq=False)
class MatrixImage:
    pixels: np.ndarray  # uint8, (height, width)
    tile_size: int
    grid: tuple[int, int]
    gutter: int

    def tile(self, row: int, col: int) -> np.ndarray:
        step = self.tile_size + self.gutter
        y, x = self.gutter + row * step, self.gutter + col * step
        return self.pixels[y : y + self.tile_size, x : x + self.tile_size]


def gray_levels(w: np.ndarray, w_max: float) -> np.ndarray:
    if w_max == 0:
        return np.full(w.shape, 128, dtype=np.uint8)
    v = round_half_away(128.0 + 127.0 * np.asarray(w, dtype=np.float64) / w_max)
    return np.clip(v, 0, 255).astype(np.uint8)


def render_matrix_grid(matrices, normalization: str = "per-matrix", gutter: int = 1) -> MatrixImage:
    """Tile a list of predictor matrices (one grid row per matrix, in input order)."""
    if normalization not in ("global", "per-matrix"):
        raise ValueError(f"unknown normalization {normalization!r}")
    if gutter < 0:
        raise ValueError("gutter must be non-negative")
    matrices = list(matrices)
    if not matrices:
        raise ValueError("nothing to render")
    sizes = {m.N for m in matrices}
    if len(sizes) != 1:
        raise ValueError(f"matrices of mixed block sizes {sorted(sizes)}")
    modes = [m.mode for m in matrices]
    if len(set(modes)) != len(modes):
        raise ValueError("each mode may appear only once")
    N = sizes.pop()
    cols = num_refs(N)
    step = N + gutter
    img = np.full((len(matrices) * step + gutter, cols * step + gutter), GUTTER_VALUE, dtype=np.uint8)
    global_max = max(float(np.abs(m.entries).max()) for m in matrices)
    for row, m in enumerate(matrices):
        H = np.asarray(m.entries, dtype=np.float64)
        w_max = global_max if normalization == "global" else float(np.abs(H).max())
        tiles = gray_levels(H, w_max)  # (N*N, cols)
        for j in range(cols):
            y, x = gutter + row * step, gutter + j * step
            img[y : y + N, x : x + N] = tiles[:, j].reshape(N, N)
    return MatrixImage(img, N, (len(matrices), cols), gutter)
