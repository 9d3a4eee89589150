"""Corpus block collection and per-block set-selection evaluation."""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import block_positions, check_size, extract_block, needs_substitution
from .intra import SmoothingPolicy
from .pdpc import ParamLibrary
from .training import BlockBatch, classify_blocks, select_sets, sse_table

REPORT_NOTE = (
    "SSE is measured on rounded and clipped integer predictions; "
    "parameters were fitted on the real-valued trace objective"
)


def image_blocks(image, N, stride=None, skip_padded=False) -> BlockBatch:
    """All blocks of one image on the stride grid, raster order."""
    N = check_size(N)
    samples = np.asarray(getattr(image, "samples", image))
    bit_depth = getattr(image, "bit_depth", 8)
    pairs = []
    for x0, y0 in block_positions(samples.shape, N, stride):
        if skip_padded and needs_substitution(samples.shape, x0, y0, N):
            continue
        pairs.append(extract_block(samples, x0, y0, N, bit_depth))
    batch = BlockBatch.from_pairs(pairs, N, bit_depth)
    batch.bit_depth = bit_depth
    return batch


def collect_blocks(images, N, stride=None, skip_padded=False, threads=1) -> BlockBatch:
    """Blocks of every image, concatenated in image order whatever the thread count."""
    images = list(images)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda im: image_blocks(im, N, stride, skip_padded), images))
    else:
        parts = [image_blocks(im, N, stride, skip_padded) for im in images]
    return BlockBatch.concat(parts, N)


def corpus_digest(images) -> str:
    h = hashlib.sha256()
    for im in images:
        s = np.ascontiguousarray(np.asarray(getattr(im, "samples", im)), dtype="<i8")
        h.update(np.array(s.shape, dtype="<i8").tobytes())
        h.update(s.tobytes())
    return h.hexdigest()


@dataclass
class EvalReport:
    config: dict
    corpus_digest: str
    num_sets: int
    rows: list = field(default_factory=list)

    @property
    def blocks(self) -> int:
        return sum(r["blocks"] for r in self.rows)

    @property
    def hevc_sse(self) -> int:
        return sum(r["hevc_sse"] for r in self.rows)

    @property
    def selected_sse(self) -> int:
        return sum(sum(r["selected_sse"]) for r in self.rows)

    @property
    def reduction_percent(self) -> float:
        total = self.hevc_sse
        return 0.0 if total == 0 else 100.0 * (total - self.selected_sse) / total

    def histogram(self) -> list[int]:
        out = [0] * self.num_sets
        for r in self.rows:
            out = [a + b for a, b in zip(out, r["selected"])]
        return out

    def to_dict(self) -> dict:
        rows = []
        for r in self.rows:
            n = r["blocks"]
            rows.append({
                **r,
                "mean_hevc_sse": r["hevc_sse"] / n,
                "mean_set_sse": [s / n for s in r["set_sse"]],
                "reduction_percent": 0.0 if r["hevc_sse"] == 0
                else 100.0 * (r["hevc_sse"] - sum(r["selected_sse"])) / r["hevc_sse"],
            })
        return {
            "note": REPORT_NOTE,
            "config": self.config,
            "corpus_digest": self.corpus_digest,
            "num_sets": self.num_sets,
            "blocks": self.blocks,
            "hevc_sse": self.hevc_sse,
            "selected_sse": self.selected_sse,
            "reduction_percent": self.reduction_percent,
            "selected_histogram": self.histogram(),
            "rows": rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"# {REPORT_NOTE}", f"corpus {self.corpus_digest[:16]}  sets {self.num_sets}"]
        head = f"{'N':>3} {'mode':>4} {'blocks':>7} {'HEVC MSE':>10} {'sel MSE':>10} {'gain %':>7}  histogram"
        lines.append(head)
        for r in self.rows:
            n = r["blocks"]
            sel = sum(r["selected_sse"])
            gain = 0.0 if r["hevc_sse"] == 0 else 100.0 * (r["hevc_sse"] - sel) / r["hevc_sse"]
            lines.append(f"{r['N']:>3} {r['mode']:>4} {n:>7} {r['hevc_sse'] / n:>10.2f} {sel / n:>10.2f} "
                         f"{gain:>7.3f}  {r['selected']}")
        lines.append(f"total: {self.blocks} blocks, HEVC SSE {self.hevc_sse}, selected SSE {self.selected_sse}, "
                     f"reduction {self.reduction_percent:.3f}%")
        return "\n".join(lines) + "\n"


def evaluate_batch(batch: BlockBatch, library: ParamLibrary, policy: SmoothingPolicy = SmoothingPolicy()):
    """Per-block modes, SSE table (B, S) and selected set."""
    modes, hevc_sse = classify_blocks(batch, policy)
    table = sse_table(batch, modes, hevc_sse, library, policy)
    return modes, table, select_sets(table)


def evaluate(corpus, library: ParamLibrary, sizes, policy: SmoothingPolicy = SmoothingPolicy(), stride=None,
             skip_padded: bool = False, threads: int = 1) -> EvalReport:
    """Classify every block, score plain HEVC and each PDPC set, and keep the best set per block."""
    corpus = list(corpus)
    sizes = sorted(check_size(N) for N in sizes)
    library.validate_for(sizes)
    config = {
        "sizes": sizes,
        "stride": stride,
        "skip_padded": skip_padded,
        "smoothing": policy.enabled,
        "edge_filters": policy.edge_filters,
        "mode_groups": [list(g) for g in library.mode_groups],
    }
    report = EvalReport(config, corpus_digest(corpus), library.num_sets)
    for N in sizes:
        batch = collect_blocks(corpus, N, stride, skip_padded, threads)
        if len(batch) == 0:
            continue
        modes, table, chosen = evaluate_batch(batch, library, policy)
        picked = table[np.arange(len(batch)), chosen]
        for m in range(35):
            sel = modes == m
            if not sel.any():
                continue
            report.rows.append({
                "N": N,
                "mode": m,
                "blocks": int(sel.sum()),
                "hevc_sse": int(table[sel, 0].sum()),
                "set_sse": [int(v) for v in table[sel].sum(axis=0)],
                "selected": [int(np.sum(chosen[sel] == s)) for s in range(library.num_sets)],
                "selected_sse": [int(picked[sel & (chosen == s)].sum()) for s in range(library.num_sets)],
            })
    return report
