"""Command line: stats, oracle, fit, eval and viz workflows."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import formats
from .core import BLOCK_SIZES
from .evaluate import collect_blocks, evaluate
from .intra import SmoothingPolicy, hevc_matrix
from .pdpc import ParamLibrary, PdpcParams, realize_matrix
from .training import (
    KIND_HEVC,
    KIND_PDPC,
    ConditioningError,
    PredictorMatrix,
    SearchSpec,
    classify_blocks,
    condition_number,
    fit_multiset,
    objective,
    search_params,
    solve_optimal,
    stats_from_batch,
)
from .viz import render_matrix_grid

log = logging.getLogger("pdpc_intra")


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _common(p: argparse.ArgumentParser):
    p.add_argument("--size", type=int, action="append", choices=BLOCK_SIZES,
                   help="block size (repeatable; default 4 and 8)")
    p.add_argument("--stride", type=int, default=None, help="block grid stride (default: block size)")
    p.add_argument("--bit-depth", type=int, choices=(8, 10), default=8, help="bit depth of raw YUV input")
    p.add_argument("--width", type=int, help="raw YUV frame width")
    p.add_argument("--height", type=int, help="raw YUV frame height")
    p.add_argument("--frame", type=int, default=0, help="raw YUV frame index")
    p.add_argument("--smoothing", type=_on_off, default=True, metavar="{on,off}")
    p.add_argument("--edge-filters", type=_on_off, default=True, metavar="{on,off}")
    p.add_argument("--skip-padded-blocks", action="store_true",
                   help="ignore blocks whose references needed substitution")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="seed for --max-blocks subsampling")
    p.add_argument("--max-blocks", type=int, default=None, help="random subsample of blocks per size")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdpc-intra", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus -> per-mode correlation statistics")
    p.add_argument("images", nargs="+", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--center", action="store_true", help="remove the reference mean per block (analysis only)")
    _common(p)

    p = sub.add_parser("oracle", help="statistics -> optimal linear predictor matrices")
    p.add_argument("stats", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--ridge", type=float, default=1e-6)
    _common(p)

    p = sub.add_parser("fit", help="statistics or corpus -> PDPC parameter library")
    p.add_argument("images", nargs="*", type=Path)
    p.add_argument("--stats", type=Path, help="fit one set per mode group from a statistics file")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--sets", type=int, choices=(2, 4), default=2)
    p.add_argument("--ridge", type=float, default=1e-6, help="ridge for the oracle bound in the fit report")
    p.add_argument("--grid-step", type=float, default=1 / 32, help="fine step for the c coefficients")
    _common(p)

    p = sub.add_parser("eval", help="corpus + parameter library -> SSE report")
    p.add_argument("images", nargs="+", type=Path)
    p.add_argument("--params", type=Path, required=True)
    p.add_argument("--json", type=Path, help="also write the report as JSON")
    _common(p)

    p = sub.add_parser("viz", help="predictor matrices -> PGM grid image")
    p.add_argument("--matrices", type=Path, help="matrix file (e.g. from 'oracle')")
    p.add_argument("--params", type=Path, help="render PDPC matrices of a parameter library instead")
    p.add_argument("--set", type=int, default=1, help="parameter set to render with --params")
    p.add_argument("--hevc", action="store_true", help="render plain HEVC matrices for --size")
    p.add_argument("--modes", type=str, default=None, help="comma-separated modes (default: all available)")
    p.add_argument("--normalization", choices=("global", "per-matrix"), default="per-matrix")
    p.add_argument("--gutter", type=int, default=1)
    p.add_argument("-o", "--output", type=Path, required=True)
    _common(p)
    return parser


def _policy(args) -> SmoothingPolicy:
    return SmoothingPolicy(args.smoothing, args.edge_filters)


def _sizes(args):
    return sorted(set(args.size or [4, 8]))


def _images(args):
    return [formats.load_image(p, args.width, args.height, args.bit_depth, args.frame) for p in args.images]


def _blocks(args, images, N):
    batch = collect_blocks(images, N, args.stride, args.skip_padded_blocks, args.threads)
    if args.max_blocks and len(batch) > args.max_blocks:
        rng = np.random.default_rng(args.seed)
        batch = batch.subset(np.sort(rng.choice(len(batch), args.max_blocks, replace=False)))
    return batch


def cmd_stats(args):
    images = _images(args)
    out = {}
    for N in _sizes(args):
        batch = _blocks(args, images, N)
        modes, _ = classify_blocks(batch, _policy(args))
        for m, st in stats_from_batch(batch, modes, args.center).items():
            out[(N, m)] = st
        print(f"N={N}: {len(batch)} blocks, {len(np.unique(modes))} modes used")
    formats.save_stats(args.output, out)


def cmd_oracle(args):
    stats = formats.load_stats(args.stats)
    matrices = []
    for (N, mode), st in sorted(stats.items()):
        if args.size and N not in args.size:
            continue
        if st.count == 0:
            continue
        try:
            H = solve_optimal(st, args.ridge)
        except ConditioningError as exc:
            print(f"N={N} mode {mode:2d}: skipped, {exc}")
            continue
        matrices.append(H)
        print(f"N={N} mode {mode:2d}: {st.count:7d} blocks, condition {condition_number(st, args.ridge):.3e}, "
              f"J {objective(H, st):.2f}")
    formats.save_matrices(args.output, matrices)


def _search(args):
    return SearchSpec(fine_step=args.grid_step)


def cmd_fit(args):
    policy = _policy(args)
    search = _search(args)
    if args.stats:
        if args.sets != 2:
            raise SystemExit("fit: --sets 4 needs a corpus (per-block assignment), not a statistics file")
        stats = formats.load_stats(args.stats)
        lib = ParamLibrary(2)
        for N in sorted({n for n, _ in stats} & set(args.size or BLOCK_SIZES)):
            for gi, group in enumerate(lib.mode_groups):
                group_stats = [stats[(N, m)] for m in group if (N, m) in stats and stats[(N, m)].count]
                if not group_stats:
                    lib.set(N, gi, 1, PdpcParams.identity(N))
                    continue
                res = search_params(group_stats, N, search, policy, args.threads)
                lib.set(N, gi, 1, res.params)
                print(f"N={N} group {gi}: J pdpc {res.J:.2f}, hevc {res.J_identity:.2f}, "
                      f"oracle {_oracle_bound(group_stats, args.ridge):.2f}  {res.params}")
    elif args.images:
        images = _images(args)
        lib = ParamLibrary(args.sets)
        for N in _sizes(args):
            batch = _blocks(args, images, N)
            two = fit_multiset(batch, N, 2, search, policy, workers=args.threads)
            part = fit_multiset(batch, N, 4, search, policy, base=two, workers=args.threads) if args.sets == 4 else two
            for key, p in part.entries.items():
                lib.set(*key, p)
            print(f"N={N}: fitted {args.sets} sets on {len(batch)} blocks")
    else:
        raise SystemExit("fit: give images or --stats")
    formats.save_params(args.output, lib)


def _oracle_bound(group_stats, ridge):
    total = sum(st.count for st in group_stats)
    try:
        return sum(st.count * objective(solve_optimal(st, ridge), st) for st in group_stats) / total
    except ConditioningError:
        return float("nan")


def cmd_eval(args):
    lib = formats.load_params(args.params)
    report = evaluate(_images(args), lib, _sizes(args), _policy(args), args.stride, args.skip_padded_blocks,
                      args.threads)
    sys.stdout.write(report.to_text())
    if args.json:
        args.json.write_text(report.to_json())


def cmd_viz(args):
    policy = _policy(args)
    modes = [int(m) for m in args.modes.split(",")] if args.modes else None
    if args.matrices:
        matrices = formats.load_matrices(args.matrices)
        if args.size:
            matrices = [m for m in matrices if m.N in args.size]
        if modes is not None:
            matrices = [m for m in matrices if m.mode in modes]
    else:
        N = _sizes(args)[0]
        modes = modes if modes is not None else list(range(35))
        if args.params:
            lib = formats.load_params(args.params)
            matrices = [PredictorMatrix(realize_matrix(N, m, lib.params(N, m, args.set), policy), N, m, KIND_PDPC)
                        for m in modes]
        elif args.hevc:
            matrices = [PredictorMatrix(np.array(hevc_matrix(N, m, policy)), N, m, KIND_HEVC) for m in modes]
        else:
            raise SystemExit("viz: give --matrices, --params or --hevc")
    image = render_matrix_grid(matrices, args.normalization, args.gutter)
    formats.save_pgm(args.output, formats.GrayImage.from_array(image.pixels))


COMMANDS = {"stats": cmd_stats, "oracle": cmd_oracle, "fit": cmd_fit, "eval": cmd_eval, "viz": cmd_viz}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    COMMANDS[args.command](args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
