"""Mode-conditioned statistics, optimal linear predictors and PDPC parameter fitting."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np

from .core import BlockView, ReferenceArray, check_mode, check_size, finalize, num_refs
from .intra import SmoothingPolicy, hevc_matrix, predict_hevc
from .pdpc import KERNEL_ORDERS, ParamLibrary, PdpcParams, pdpc_basis, realize_matrix, size_rule

log = logging.getLogger(__name__)

KIND_ORACLE, KIND_PDPC, KIND_HEVC = 0, 1, 2
KIND_NAMES = {KIND_ORACLE: "oracle", KIND_PDPC: "pdpc", KIND_HEVC: "hevc"}


class ConditioningError(ValueError):
    def __init__(self, message, condition):
        super().__init__(f"{message} (condition number ~ {condition:.3g})")
        self.condition = condition


@dataclass
class ModeStats:
    """Accumulated r r^T and v r^T sums for the blocks classified as one mode."""

    N: int
    mode: int
    P: np.ndarray = None
    Q: np.ndarray = None
    count: int = 0

    def __post_init__(self):
        n = num_refs(check_size(self.N))
        check_mode(self.mode)
        if self.P is None:
            self.P = np.zeros((n, n))
        if self.Q is None:
            self.Q = np.zeros((self.N * self.N, n))
        if self.P.shape != (n, n) or self.Q.shape != (self.N * self.N, n):
            raise ValueError(f"statistics shapes do not match N={self.N}")

    def add(self, V: np.ndarray, R: np.ndarray):
        """Add blocks given as rows: V (B, N^2) samples, R (B, 4N+1) references."""
        R = np.asarray(R, dtype=np.float64)
        V = np.asarray(V, dtype=np.float64)
        # integer samples keep these sums exact (well below 2^53), so order never matters
        self.P += R.T @ R
        self.Q += V.T @ R
        self.count += len(R)
        return self

    def merge(self, other: "ModeStats") -> "ModeStats":
        if (other.N, other.mode) != (self.N, self.mode):
            raise ValueError("cannot merge statistics of different (N, mode)")
        return ModeStats(self.N, self.mode, self.P + other.P, self.Q + other.Q, self.count + other.count)

    __add__ = merge

    @property
    def P_mean(self) -> np.ndarray:
        return self.P / self.count

    @property
    def Q_mean(self) -> np.ndarray:
        return self.Q / self.count


@dataclass
class PredictorMatrix:
    entries: np.ndarray
    N: int
    mode: int
    kind: int = KIND_ORACLE

    def __post_init__(self):
        N = check_size(self.N)
        check_mode(self.mode)
        if self.entries.shape != (N * N, num_refs(N)):
            raise ValueError(f"predictor matrix shape {self.entries.shape} does not match N={N}")
        if self.kind not in KIND_NAMES:
            raise ValueError(f"unknown matrix kind {self.kind}")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass
class BlockBatch:
    """Blocks of one size as rows: samples V (B, N^2) in raster order, references R (B, 4N+1)."""

    N: int
    V: np.ndarray
    R: np.ndarray
    bit_depth: int = 8
    origins: list = field(default_factory=list)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[BlockView, ReferenceArray]], N, bit_depth=8):
        N = check_size(N)
        V, R, origins = [], [], []
        for block, refs in pairs:
            if block.N != N or refs.N != N:
                raise ValueError("all blocks must share the same size")
            V.append(block.to_vector())
            R.append(refs.to_vector())
            origins.append(block.origin)
            bit_depth = refs.bit_depth
        n = num_refs(N)
        V = np.array(V, dtype=np.int64).reshape(-1, N * N)
        R = np.array(R, dtype=np.int64).reshape(-1, n)
        return cls(N, V, R, bit_depth, origins)

    def __len__(self):
        return len(self.R)

    def subset(self, idx) -> "BlockBatch":
        origins = [self.origins[i] for i in np.arange(len(self))[idx]] if self.origins else []
        return BlockBatch(self.N, self.V[idx], self.R[idx], self.bit_depth, origins)

    @staticmethod
    def concat(batches: list["BlockBatch"], N) -> "BlockBatch":
        N = check_size(N)
        if not batches:
            return BlockBatch(N, np.zeros((0, N * N), np.int64), np.zeros((0, num_refs(N)), np.int64))
        return BlockBatch(
            N,
            np.concatenate([b.V for b in batches]),
            np.concatenate([b.R for b in batches]),
            batches[0].bit_depth,
            [o for b in batches for o in b.origins],
        )


def _sse(V, pred):
    d = V.astype(np.int64) - pred.reshape(V.shape).astype(np.int64)
    return np.einsum("ij,ij->i", d, d)


def classify_blocks(batch: BlockBatch, policy: SmoothingPolicy = SmoothingPolicy()):
    """Best HEVC mode per block by integer SSE (ties go to the lowest mode) and that SSE."""
    B = len(batch)
    best_mode = np.zeros(B, dtype=np.int64)
    best_sse = np.full(B, np.iinfo(np.int64).max)
    for m in range(35):
        pred = predict_hevc(batch.R, batch.N, m, policy, integer=True, bit_depth=batch.bit_depth)
        sse = _sse(batch.V, pred)
        better = sse < best_sse
        best_mode[better] = m
        best_sse[better] = sse[better]
    return best_mode, best_sse


def classify_block(block: BlockView, refs: ReferenceArray, N, policy: SmoothingPolicy = SmoothingPolicy()) -> int:
    batch = BlockBatch.from_pairs([(block, refs)], N)
    return int(classify_blocks(batch, policy)[0][0])


def stats_from_batch(batch: BlockBatch, modes: np.ndarray, center: bool = False) -> dict[int, ModeStats]:
    V, R = batch.V, batch.R
    if center:
        mean = R.mean(axis=1, keepdims=True)
        V, R = V - mean, R - mean
    out = {}
    for m in range(35):
        sel = modes == m
        out[m] = ModeStats(batch.N, m).add(V[sel], R[sel])
    return out


def accumulate_stats(blocks, N, policy: SmoothingPolicy = SmoothingPolicy(), center: bool = False) -> dict[int, ModeStats]:
    """Classify every block and add its outer products to the stats of its mode.

    ``blocks`` is a BlockBatch or an iterable of (BlockView, ReferenceArray).
    Every mode is present in the result, with count 0 if never chosen.
    """
    batch = blocks if isinstance(blocks, BlockBatch) else BlockBatch.from_pairs(blocks, N)
    modes, _ = classify_blocks(batch, policy)
    return stats_from_batch(batch, modes, center)


def merge_stats(*parts: dict) -> dict:
    """Merge per-mode stats mappings in argument order."""
    out: dict = {}
    for part in parts:
        for key in sorted(part):
            out[key] = out[key].merge(part[key]) if key in out else part[key]
    return dict(sorted(out.items()))


def solve_optimal(stats: ModeStats, ridge: float = 1e-6, max_condition: float = 1e13) -> PredictorMatrix:
    """Least-squares predictor Q P^-1 with Tikhonov term ridge * trace(P)/(4N+1)."""
    if stats.count <= 0:
        raise ValueError("cannot solve with zero samples")
    P, Q = stats.P_mean, stats.Q_mean
    n = P.shape[0]
    lam = ridge * np.trace(P) / n
    A = P + lam * np.eye(n)
    eig = np.linalg.eigvalsh(A)
    cond = np.inf if eig[0] <= 0 else eig[-1] / eig[0]
    if not cond < max_condition:
        raise ConditioningError(f"correlation matrix for mode {stats.mode}, N={stats.N} is singular", cond)
    import scipy.linalg

    H = scipy.linalg.solve(A, Q.T, assume_a="pos").T
    return PredictorMatrix(H, stats.N, stats.mode, KIND_ORACLE)


def condition_number(stats: ModeStats, ridge: float = 1e-6) -> float:
    P = stats.P_mean
    n = P.shape[0]
    eig = np.linalg.eigvalsh(P + ridge * np.trace(P) / n * np.eye(n))
    return np.inf if eig[0] <= 0 else float(eig[-1] / eig[0])


def objective(H, stats: ModeStats) -> float:
    """Tr(H P H^T) - 2 Tr(H Q^T) on normalized statistics: mean squared error minus E|v|^2."""
    H = np.asarray(H, dtype=np.float64)
    P, Q = stats.P_mean, stats.Q_mean
    return float(np.sum((H @ P) * H) - 2.0 * np.sum(H * Q))


# --------------------------------------------------------------------------- fitting


@dataclass(frozen=True)
class SearchSpec:
    fine_step: float = 1 / 32
    coarse_step: float = 1 / 8
    c_bound: float = 1.0
    a_values: tuple = tuple(i / 8 for i in range(9))
    k_values: tuple = KERNEL_ORDERS
    sweeps: int = 3

    def __post_init__(self):
        for name in ("fine_step", "coarse_step"):
            step = getattr(self, name)
            if step <= 0 or abs(32 * step - round(32 * step)) > 1e-12:
                raise ValueError(f"{name} must be a positive multiple of 1/32")
        if abs(self.coarse_step / self.fine_step - round(self.coarse_step / self.fine_step)) > 1e-12:
            raise ValueError("coarse step must be a multiple of the fine step")
        if any(not 0 <= a <= 1 or abs(32 * a - round(32 * a)) > 1e-12 for a in self.a_values):
            raise ValueError("a values must be multiples of 1/32 in [0, 1]")
        if 1.0 not in self.a_values:
            raise ValueError("a = 1 must be searched so the identity point is reachable")
        if any(k not in KERNEL_ORDERS for k in self.k_values):
            raise ValueError(f"k values must come from {KERNEL_ORDERS}")

    def values(self, step):
        n = int(round(self.c_bound / step))
        return np.arange(-n, n + 1) * step


@dataclass
class FitResult:
    params: PdpcParams
    J: float
    J_identity: float


class _Quadratic:
    """J(c) = J0 + 2 g.c + c.K.c for a fixed (a, k), summed over the modes being fitted."""

    def __init__(self, stats_list, N, a, k, policy):
        d = size_rule(N)
        total = sum(s.count for s in stats_list)
        self.J0 = 0.0
        self.g = np.zeros(4)
        self.K = np.zeros((4, 4))
        for st in stats_list:
            if st.count == 0:
                continue
            h0, M = pdpc_basis(N, st.mode, a, k, d, policy)
            MP = M @ st.P
            H0P = h0 @ st.P
            self.J0 += (np.sum(H0P * h0) - 2.0 * np.sum(h0 * st.Q)) / total
            self.g += (np.einsum("ipn,pn->i", MP, h0) - np.einsum("ipn,pn->i", M, st.Q)) / total
            self.K += np.einsum("ipn,jpn->ij", MP, M) / total
        self.K = 0.5 * (self.K + self.K.T)

    def __call__(self, C):
        C = np.atleast_2d(C)
        return self.J0 + 2.0 * (C @ self.g) + np.sum((C @ self.K) * C, axis=1)


def _tie_keys(C, a, k):
    """Tie-break key rows: small coefficients first, then the unsmoothed blend, then low filter order."""
    C = np.atleast_2d(C)
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), (len(C),))
    k = np.broadcast_to(np.asarray(k, dtype=np.float64), (len(C),))
    return np.column_stack([np.abs(C), C, -a, k])


def _pick(J, keys, tol):
    """Index of the minimum of J; values within tol of it are ties resolved lexicographically by key rows."""
    cand = np.flatnonzero(J <= np.min(J) + tol)
    if cand.size == 1:
        return int(cand[0])
    sub = keys[cand]
    return int(cand[np.lexsort(sub.T[::-1])[0]])


def _key_less(u, v):
    diff = np.flatnonzero(u != v)
    return diff.size > 0 and u[diff[0]] < v[diff[0]]


@lru_cache(maxsize=8)
def _coarse_grid(step, bound):
    """Coarse c grid and each point's rank under the coefficient tie-break order."""
    n = int(round(bound / step))
    axis = np.arange(-n, n + 1) * step
    grid = np.array(list(itertools.product(axis, repeat=4)))
    rank = np.empty(len(grid), dtype=np.int64)
    rank[np.lexsort(np.column_stack([np.abs(grid), grid]).T[::-1])] = np.arange(len(grid))
    grid.flags.writeable = False
    rank.flags.writeable = False
    return grid, rank


def _fit_one(quad: _Quadratic, a, k, spec: SearchSpec, tol):
    fine = spec.values(spec.fine_step)
    grid, rank = _coarse_grid(spec.coarse_step, spec.c_bound)
    J = quad(grid)
    # a and k are fixed here, so the grid rank alone orders ties
    cand = np.flatnonzero(J <= np.min(J) + tol)
    i = cand[np.argmin(rank[cand])]
    c, best = grid[i].copy(), J[i]
    for _ in range(spec.sweeps):
        for axis in range(4):
            trial = np.repeat(c[None, :], fine.size, axis=0)
            trial[:, axis] = fine
            Jt = quad(trial)
            tk = _tie_keys(trial, a, k)
            j = _pick(Jt, tk, tol)
            if Jt[j] < best - tol or (Jt[j] <= best + tol and _key_less(tk[j], _tie_keys(c, a, k)[0])):
                c, best = trial[j].copy(), Jt[j]
    return best, c


def _as_stats_list(stats) -> list[ModeStats]:
    if isinstance(stats, ModeStats):
        return [stats]
    if isinstance(stats, dict):
        return [stats[k] for k in sorted(stats)]
    return list(stats)


def group_objective(params: PdpcParams, stats, N, policy: SmoothingPolicy = SmoothingPolicy()) -> float:
    """Count-weighted trace objective of one parameter set over several modes' statistics."""
    stats_list = [s for s in _as_stats_list(stats) if s.count > 0]
    total = sum(s.count for s in stats_list)
    return sum(s.count * objective(realize_matrix(N, s.mode, params, policy), s) for s in stats_list) / total


def search_params(stats, N, search: SearchSpec = SearchSpec(), policy: SmoothingPolicy = SmoothingPolicy(),
                  workers: int = 1) -> FitResult:
    """Minimize the trace objective over the PDPC grid; ``stats`` may span several modes."""
    N = check_size(N)
    stats_list = [s for s in _as_stats_list(stats) if s.count > 0]
    if not stats_list:
        raise ValueError("cannot fit parameters without samples")
    identity = PdpcParams.identity(N)
    combos = []
    for a in sorted(search.a_values):
        for k in sorted(search.k_values):
            if a == 1.0 and k != min(search.k_values):
                continue  # k is irrelevant when nothing is filtered
            combos.append((float(a), int(k)))

    # J is of the order of N^2 * E[r^2]; differences below this are rounding noise
    scale = N * N * max(np.abs(s.P_mean).max() for s in stats_list)
    tol = 1e-12 * max(scale, 1.0)

    def run(ak):
        a, k = ak
        quad = _Quadratic(stats_list, N, a, k, policy)
        return _fit_one(quad, a, k, search, tol)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, combos))
    else:
        results = [run(ak) for ak in combos]

    Js = np.array([r[0] for r in results])
    keys = np.vstack([_tie_keys(r[1], a, k) for r, (a, k) in zip(results, combos)])
    best_i = _pick(Js, keys, tol)
    c = results[best_i][1]
    a, k = combos[best_i]
    best = PdpcParams.for_size(N, *(float(x) for x in c), a=a, k=k)

    J_best = group_objective(best, stats_list, N, policy)
    J_id = group_objective(identity, stats_list, N, policy)
    if not J_best < J_id:
        best, J_best = identity, J_id
    return FitResult(best, J_best, J_id)


def fit_params(stats, N, search: SearchSpec = SearchSpec(), policy: SmoothingPolicy = SmoothingPolicy(),
               workers: int = 1) -> PdpcParams:
    return search_params(stats, N, search, policy, workers).params


# --------------------------------------------------------------------------- multi-set


def pdpc_predictions(batch: BlockBatch, modes, params: PdpcParams, policy: SmoothingPolicy = SmoothingPolicy()):
    """Finalized integer PDPC predictions (B, N^2) for blocks with known modes."""
    out = np.zeros(batch.V.shape, dtype=np.int64)
    for m in np.unique(modes):
        sel = modes == m
        H = realize_matrix(batch.N, int(m), params, policy)
        out[sel] = finalize(batch.R[sel] @ H.T, batch.bit_depth)
    return out


def sse_table(batch: BlockBatch, modes, hevc_sse, library: ParamLibrary,
              policy: SmoothingPolicy = SmoothingPolicy()) -> np.ndarray:
    """Integer SSE of every block under every set of the library, shape (B, S)."""
    table = np.zeros((len(batch), library.num_sets), dtype=np.int64)
    table[:, 0] = hevc_sse
    for gi, group in enumerate(library.mode_groups):
        in_group = np.isin(modes, group)
        if not in_group.any():
            continue
        sub = batch.subset(in_group)
        for s in range(1, library.num_sets):
            params = library.entries[(batch.N, gi, s)]
            pred = pdpc_predictions(sub, modes[in_group], params, policy)
            table[in_group, s] = _sse(sub.V, pred)
    return table


def select_sets(table: np.ndarray) -> np.ndarray:
    """Per-block set choice; argmin keeps the lowest set index on ties."""
    return np.argmin(table, axis=1)


def fit_multiset(blocks, N, S: int, search: SearchSpec = SearchSpec(), policy: SmoothingPolicy = SmoothingPolicy(),
                 mode_groups=None, base: ParamLibrary | None = None, max_iter: int = 10,
                 min_change: float = 0.01, workers: int = 1) -> ParamLibrary:
    """Train S-1 PDPC sets (set 0 is plain HEVC) by alternating assignment and refitting.

    With ``base``, the sets of that library are copied and frozen; only the
    additional sets are trained, so the result never does worse than ``base``
    on per-block selection.
    """
    N = check_size(N)
    if S not in (1, 2, 4):
        raise ValueError(f"number of sets must be 1, 2 or 4, got {S}")
    batch = blocks if isinstance(blocks, BlockBatch) else BlockBatch.from_pairs(blocks, N)
    if base is not None:
        mode_groups = base.mode_groups
    lib = ParamLibrary(S, mode_groups) if mode_groups is not None else ParamLibrary(S)
    frozen = 1
    if base is not None:
        if base.num_sets > S:
            raise ValueError("base library has more sets than requested")
        frozen = base.num_sets
        for (bN, g, s), p in base.entries.items():
            if bN == N:
                lib.set(N, g, s, p)
    trainable = list(range(frozen, S))
    if not trainable:
        return lib

    modes, hevc_sse = classify_blocks(batch, policy)
    groups = [np.flatnonzero(np.isin(modes, g)) for g in lib.mode_groups]

    def refit(idx):
        if idx.size == 0:
            return PdpcParams.identity(N)
        sub = batch.subset(idx)
        return fit_params(stats_from_batch(sub, modes[idx]), N, search, policy, workers)

    # seed: split each group's blocks into HEVC-error quantiles, one per trainable set
    for gi, idx in enumerate(groups):
        order = idx[np.argsort(hevc_sse[idx], kind="stable")]
        for s, chunk in zip(trainable, np.array_split(order, len(trainable))):
            lib.set(N, gi, s, refit(chunk))

    assign = None
    for it in range(max_iter):
        table = sse_table(batch, modes, hevc_sse, lib, policy)
        new = select_sets(table)
        changed = len(new) if assign is None else int(np.sum(new != assign))
        assign = new
        log.info("N=%d iteration %d: %d assignments changed, selected SSE %d",
                 N, it, changed, int(table[np.arange(len(new)), new].sum()))
        if it > 0 and changed < min_change * len(batch):
            break
        selected = table[np.arange(len(new)), new]
        for gi, idx in enumerate(groups):
            if idx.size == 0:
                continue
            for s in trainable:
                mine = idx[assign[idx] == s]
                if mine.size == 0:
                    # reseed from the worst-served blocks of the group
                    order = idx[np.argsort(-selected[idx], kind="stable")]
                    mine = order[: max(1, idx.size // S)]
                lib.set(N, gi, s, refit(mine))
    return lib
