"""File formats: PGM/YUV images, binary statistics and matrix containers, JSON parameter libraries."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .core import check_mode, check_size, num_refs
from .pdpc import ParamLibrary, PdpcParams
from .training import KIND_NAMES, ModeStats, PredictorMatrix

STATS_MAGIC = b"PDPCST01"
MATRIX_MAGIC = b"PDPCHM01"
PARAMS_VERSION = 1
PARAMS_DENOMINATOR = 32


class FormatError(ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True, eq=False)
class GrayImage:
    width: int
    height: int
    bit_depth: int
    samples: np.ndarray  # (height, width), row-major

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.shape != (self.height, self.width):
            raise ValueError(f"sample array {s.shape} does not match {self.width}x{self.height}")
        if self.bit_depth not in (8, 10):
            raise ValueError(f"unsupported bit depth {self.bit_depth}")
        if s.size and (s.min() < 0 or s.max() > (1 << self.bit_depth) - 1):
            raise ValueError("samples outside the bit-depth range")

    @classmethod
    def from_array(cls, a, bit_depth=8):
        a = np.asarray(a).astype(np.int64)
        return cls(a.shape[1], a.shape[0], bit_depth, a)


# --------------------------------------------------------------------------- images


def _pgm_token(data: bytes, pos: int):
    """Next whitespace-delimited header token, skipping '#' comments."""
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated PGM header", start)
    return data[start:pos], pos


def parse_pgm(data: bytes) -> GrayImage:
    if data[:2] != b"P5":
        raise FormatError("not a binary PGM (missing P5 magic)", 0)
    pos = 2
    fields = []
    for _ in range(3):
        tok, end = _pgm_token(data, pos)
        if not tok.isdigit():
            raise FormatError(f"malformed PGM header field {tok!r}", pos)
        fields.append(int(tok))
        pos = end
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise FormatError("missing whitespace after maxval", pos)
    pos += 1
    width, height, maxval = fields
    if maxval == 255:
        bit_depth, dtype = 8, np.uint8
    elif maxval == 1023:
        bit_depth, dtype = 10, np.dtype(">u2")
    else:
        raise FormatError(f"unsupported maxval {maxval}", pos - 1)
    need = width * height * np.dtype(dtype).itemsize
    if len(data) - pos < need:
        raise FormatError(f"truncated PGM payload: need {need} bytes, have {len(data) - pos}", len(data))
    samples = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    samples = samples.astype(np.int64).reshape(height, width)
    if samples.size and samples.max() > maxval:
        raise FormatError("sample exceeds maxval", pos)
    return GrayImage(width, height, bit_depth, samples)


def load_pgm(path) -> GrayImage:
    return parse_pgm(Path(path).read_bytes())


def pgm_bytes(image) -> bytes:
    if not isinstance(image, GrayImage):
        image = GrayImage.from_array(image)
    maxval = (1 << image.bit_depth) - 1
    header = f"P5\n{image.width} {image.height}\n{maxval}\n".encode()
    dtype = np.uint8 if maxval == 255 else np.dtype(">u2")
    return header + np.asarray(image.samples).astype(dtype).tobytes()


def save_pgm(path, image):
    Path(path).write_bytes(pgm_bytes(image))


def load_yuv(path, width: int, height: int, bit_depth: int = 8, frame_index: int = 0) -> GrayImage:
    """Luma plane of one frame of a planar 4:2:0 raw file (10-bit: 16-bit little-endian)."""
    if width % 2 or height % 2:
        raise ValueError("4:2:0 frames need even dimensions")
    bps = 1 if bit_depth == 8 else 2
    frame_size = width * height * 3 // 2 * bps
    path = Path(path)
    actual = path.stat().st_size
    expected = (frame_index + 1) * frame_size
    if actual < expected:
        raise FormatError(f"YUV file too small for frame {frame_index}: expected at least {expected} bytes, "
                          f"got {actual}")
    dtype = np.uint8 if bps == 1 else np.dtype("<u2")
    with path.open("rb") as fh:
        fh.seek(frame_index * frame_size)
        luma = np.frombuffer(fh.read(width * height * bps), dtype=dtype)
    return GrayImage(width, height, bit_depth, luma.astype(np.int64).reshape(height, width))


def load_image(path, width=None, height=None, bit_depth=8, frame_index=0) -> GrayImage:
    path = Path(path)
    if path.suffix.lower() == ".yuv":
        if not width or not height:
            raise ValueError(f"{path}: raw YUV input needs --width and --height")
        return load_yuv(path, width, height, bit_depth, frame_index)
    return load_pgm(path)


# --------------------------------------------------------------------------- statistics

_STATS_HEADER = struct.Struct("<IIQ")


def stats_bytes(stats) -> bytes:
    parts = [STATS_MAGIC]
    for st in _ordered_stats(stats):
        parts.append(_STATS_HEADER.pack(st.N, st.mode, st.count))
        parts.append(np.ascontiguousarray(st.P, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(st.Q, dtype="<f8").tobytes())
    return b"".join(parts)


def _ordered_stats(stats):
    if isinstance(stats, dict):
        items = stats.values()
    else:
        items = stats
    return sorted(items, key=lambda s: (s.N, s.mode))


def parse_stats(data: bytes) -> dict[tuple[int, int], ModeStats]:
    if data[:8] != STATS_MAGIC:
        raise FormatError(f"bad statistics magic {data[:8]!r}, expected {STATS_MAGIC!r}", 0)
    pos, out = 8, {}
    while pos < len(data):
        if len(data) - pos < _STATS_HEADER.size:
            raise FormatError("truncated statistics record header", pos)
        N, mode, count = _STATS_HEADER.unpack_from(data, pos)
        try:
            check_size(N)
            check_mode(mode)
        except ValueError as exc:
            raise FormatError(f"bad statistics record: {exc}", pos) from None
        pos += _STATS_HEADER.size
        n = num_refs(N)
        need = 8 * (n * n + N * N * n)
        if len(data) - pos < need:
            raise FormatError(f"truncated statistics payload for N={N}, mode {mode}", pos)
        P = np.frombuffer(data, "<f8", n * n, pos).reshape(n, n).astype(np.float64)
        Q = np.frombuffer(data, "<f8", N * N * n, pos + 8 * n * n).reshape(N * N, n).astype(np.float64)
        pos += need
        if (N, mode) in out:
            raise FormatError(f"duplicate statistics record for N={N}, mode {mode}", pos - need)
        out[(N, mode)] = ModeStats(N, mode, P, Q, count)
    return out


def save_stats(path, stats):
    """Write ModeStats records (a mapping or iterable; order is normalized to (N, mode))."""
    Path(path).write_bytes(stats_bytes(stats))


def load_stats(path) -> dict[tuple[int, int], ModeStats]:
    """Records keyed by (N, mode)."""
    return parse_stats(Path(path).read_bytes())


def stats_for_size(stats: dict, N) -> dict[int, ModeStats]:
    return {mode: st for (n, mode), st in sorted(stats.items()) if n == N}


# --------------------------------------------------------------------------- matrices

_MATRIX_HEADER = struct.Struct("<IIB")


def matrices_bytes(matrices) -> bytes:
    parts = [MATRIX_MAGIC]
    for m in matrices:
        parts.append(_MATRIX_HEADER.pack(m.mode, m.N, m.kind))
        parts.append(np.ascontiguousarray(m.entries, dtype="<f8").tobytes())
    return b"".join(parts)


def parse_matrices(data: bytes) -> list[PredictorMatrix]:
    if data[:8] != MATRIX_MAGIC:
        raise FormatError(f"bad matrix magic {data[:8]!r}, expected {MATRIX_MAGIC!r}", 0)
    pos, out = 8, []
    while pos < len(data):
        if len(data) - pos < _MATRIX_HEADER.size:
            raise FormatError("truncated matrix record header", pos)
        mode, N, kind = _MATRIX_HEADER.unpack_from(data, pos)
        try:
            check_size(N)
            check_mode(mode)
        except ValueError as exc:
            raise FormatError(f"bad matrix record: {exc}", pos) from None
        if kind not in KIND_NAMES:
            raise FormatError(f"unknown matrix kind {kind}", pos + 8)
        pos += _MATRIX_HEADER.size
        count = N * N * num_refs(N)
        if len(data) - pos < 8 * count:
            raise FormatError(f"truncated matrix payload for N={N}, mode {mode}", pos)
        H = np.frombuffer(data, "<f8", count, pos).reshape(N * N, num_refs(N)).astype(np.float64)
        out.append(PredictorMatrix(H, N, mode, kind))
        pos += 8 * count
    return out


def save_matrices(path, matrices):
    Path(path).write_bytes(matrices_bytes(matrices))


def load_matrices(path) -> list[PredictorMatrix]:
    return parse_matrices(Path(path).read_bytes())


# --------------------------------------------------------------------------- parameters


def _numerator(value, name):
    num = Fraction(value) * PARAMS_DENOMINATOR
    if num.denominator != 1:
        raise ValueError(f"{name}={value} is not a multiple of 1/{PARAMS_DENOMINATOR}")
    return int(num)


def params_document(library: ParamLibrary) -> dict:
    entries = {}
    for N in library.sizes:
        for g in range(len(library.mode_groups)):
            entries[f"{N},{g},0"] = {"identity": True}
            for s in range(1, library.num_sets):
                p = library.entries.get((N, g, s))
                if p is None:
                    continue
                entries[f"{N},{g},{s}"] = {
                    "c1v": _numerator(p.c1v, "c1v"),
                    "c2v": _numerator(p.c2v, "c2v"),
                    "c1h": _numerator(p.c1h, "c1h"),
                    "c2h": _numerator(p.c2h, "c2h"),
                    "dv": p.dv,
                    "dh": p.dh,
                    "a": _numerator(p.a, "a"),
                    "k": p.k,
                }
    return {
        "version": PARAMS_VERSION,
        "denominator": PARAMS_DENOMINATOR,
        "num_sets": library.num_sets,
        "mode_groups": [list(g) for g in library.mode_groups],
        "entries": entries,
    }


def params_json(library: ParamLibrary) -> str:
    return json.dumps(params_document(library), indent=2) + "\n"


def library_from_document(doc: dict) -> ParamLibrary:
    if not isinstance(doc, dict) or doc.get("version") != PARAMS_VERSION:
        raise FormatError(f"unsupported parameter file version {doc.get('version') if isinstance(doc, dict) else None}")
    if doc.get("denominator", PARAMS_DENOMINATOR) != PARAMS_DENOMINATOR:
        raise FormatError("unsupported coefficient denominator")
    if "mode_groups" not in doc or "num_sets" not in doc:
        raise FormatError("parameter file lacks mode_groups or num_sets")
    try:
        lib = ParamLibrary(int(doc["num_sets"]), doc["mode_groups"])
    except ValueError as exc:
        raise FormatError(f"invalid mode groups: {exc}") from None
    den = PARAMS_DENOMINATOR
    for key, e in doc.get("entries", {}).items():
        try:
            N, g, s = (int(x) for x in key.split(","))
        except ValueError:
            raise FormatError(f"bad entry key {key!r}") from None
        if s == 0:
            if e != {"identity": True}:
                raise FormatError(f"set 0 of {key} must be the identity")
            continue
        try:
            p = PdpcParams(e["c1v"] / den, e["c2v"] / den, e["c1h"] / den, e["c2h"] / den,
                           int(e["dv"]), int(e["dh"]), e["a"] / den, int(e["k"]))
            lib.set(N, g, s, p)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad entry {key}: {exc}") from None
    return lib


def save_params(path, library: ParamLibrary):
    Path(path).write_text(params_json(library))


def load_params(path) -> ParamLibrary:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"parameter file is not JSON: {exc}") from None
    return library_from_document(doc)
