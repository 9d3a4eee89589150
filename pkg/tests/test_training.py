import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_refs
from pdpc_intra.core import BlockView, ReferenceArray
from pdpc_intra.intra import SmoothingPolicy, hevc_matrix, predict_hevc
from pdpc_intra.pdpc import ParamLibrary, PdpcParams, realize_matrix
from pdpc_intra.training import (
    BlockBatch,
    ConditioningError,
    ModeStats,
    PredictorMatrix,
    SearchSpec,
    accumulate_stats,
    classify_block,
    classify_blocks,
    fit_multiset,
    fit_params,
    group_objective,
    merge_stats,
    objective,
    search_params,
    select_sets,
    solve_optimal,
    sse_table,
)

NO_EDGE = SmoothingPolicy(enabled=True, edge_filters=False)


def test_classify_vertical_copy():
    top = [10, 50, 90, 130, 0, 0, 0, 0]
    refs = ReferenceArray(200, top, [220] * 8)
    block = BlockView(np.tile(top[:4], (4, 1)))
    assert classify_block(block, refs, 4, NO_EDGE) == 26


def test_classify_constant_ties_to_planar():
    refs = ReferenceArray(90, [90] * 8, [90] * 8)
    assert classify_block(BlockView(np.full((4, 4), 90)), refs, 4) == 0


def test_classify_matches_brute_force(rng):
    R = random_refs(rng, 4, count=200)
    V = rng.integers(0, 256, (200, 16))
    batch = BlockBatch(4, V, R)
    modes, sse = classify_blocks(batch)
    for i in range(200):
        errs = [int(np.sum((V[i] - predict_hevc(R[i], 4, m).ravel()) ** 2)) for m in range(35)]
        assert modes[i] == errs.index(min(errs))
        assert sse[i] == min(errs)


def test_accumulate_empty():
    stats = accumulate_stats([], 4)
    assert len(stats) == 35
    for s in stats.values():
        assert s.count == 0 and not s.P.any() and not s.Q.any()


def test_accumulate_single(rng):
    r = random_refs(rng, 4)
    v = rng.integers(0, 256, (4, 4))
    pair = (BlockView(v), ReferenceArray.from_vector(r))
    stats = accumulate_stats([pair], 4)
    m = classify_block(*pair, 4)
    assert stats[m].count == 1
    assert np.array_equal(stats[m].P, np.outer(r, r))
    assert np.array_equal(stats[m].Q, np.outer(v.ravel(), r))
    assert sum(s.count for s in stats.values()) == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 60), st.integers(1, 60))
def test_merge_equals_concatenation(seed, na, nb):
    rng = np.random.default_rng(seed)
    R = random_refs(rng, 4, count=na + nb)
    V = rng.integers(0, 256, (na + nb, 16))
    a = accumulate_stats(BlockBatch(4, V[:na], R[:na]), 4)
    b = accumulate_stats(BlockBatch(4, V[na:], R[na:]), 4)
    whole = accumulate_stats(BlockBatch(4, V, R), 4)
    merged = merge_stats(a, b)
    for m in range(35):
        assert merged[m].count == whole[m].count
        assert np.array_equal(merged[m].P, whole[m].P)
        assert np.array_equal(merged[m].Q, whole[m].Q)


def test_merge_rejects_mismatch():
    with pytest.raises(ValueError):
        ModeStats(4, 0).merge(ModeStats(4, 1))


def _scalar_like(N, P, Q, count=1):
    return ModeStats(N, 0, np.asarray(P, float), np.asarray(Q, float), count)


def test_solve_identity_P(rng):
    N = 4
    M = rng.normal(size=(16, 17))
    st_ = _scalar_like(N, np.eye(17), M)
    lam = 1e-3 * 17 / 17
    H = solve_optimal(st_, ridge=1e-3)
    assert np.allclose(H.entries, M / (1 + lam), rtol=1e-12)


def test_solve_scalar_case():
    # embed P=[2], Q=[4] on one coordinate, identity elsewhere
    P = np.eye(17)
    P[0, 0] = 2.0
    Q = np.zeros((16, 17))
    Q[0, 0] = 4.0
    H = solve_optimal(_scalar_like(4, P, Q), ridge=0.0)
    assert H.entries[0, 0] == pytest.approx(2.0, rel=1e-14)
    only = np.zeros((16, 17))
    only[0, 0] = 2.0
    # scalar objective: 2*2*2 - 2*2*4 = -8
    assert objective(only, _scalar_like(4, P, Q)) == pytest.approx(-8.0)
    assert objective(np.zeros((16, 17)), _scalar_like(4, P, Q)) == 0.0


def test_solve_rejects_empty_and_singular():
    with pytest.raises(ValueError):
        solve_optimal(ModeStats(4, 0))
    st_ = ModeStats(4, 0)
    r = np.ones((5, 17))
    st_.add(np.zeros((5, 16)), r)
    with pytest.raises(ConditioningError) as exc:
        solve_optimal(st_, ridge=0.0)
    assert exc.value.condition > 1e13


def _synthetic_stats(rng, N, G, count, sigma):
    R = rng.integers(0, 256, (count, 4 * N + 1)).astype(float)
    V = R @ G.T + sigma * rng.normal(size=(count, N * N))
    return ModeStats(N, 5).add(V, R), V, R


@pytest.mark.parametrize("N", [4, 8])
def test_solve_matches_lstsq(rng, N):
    G = rng.normal(size=(N * N, 4 * N + 1)) / (4 * N)
    st_, V, R = _synthetic_stats(rng, N, G, 20 * (4 * N + 1), 3.0)
    H = solve_optimal(st_, ridge=0.0).entries
    ref = np.linalg.lstsq(R, V, rcond=None)[0].T
    assert np.linalg.norm(H - ref) <= 1e-6 * np.linalg.norm(ref)


@pytest.mark.parametrize("N", [4, 8])
def test_noise_free_recovery(rng, N):
    G = rng.normal(size=(N * N, 4 * N + 1))
    st_, _, _ = _synthetic_stats(rng, N, G, 10 * (4 * N + 1), 0.0)
    H = solve_optimal(st_, ridge=0.0).entries
    assert np.linalg.norm(H - G) <= 1e-6 * np.linalg.norm(G)


def test_objective_optimality(rng):
    N = 4
    G = rng.normal(size=(16, 17)) / 16
    st_, _, _ = _synthetic_stats(rng, N, G, 500, 5.0)
    H = solve_optimal(st_, ridge=0.0)
    J = objective(H, st_)
    scale = np.abs(H.entries).max()
    for _ in range(100):
        probe = H.entries + rng.normal(scale=scale * rng.choice([1e-3, 1e-1, 1]), size=H.entries.shape)
        assert J <= objective(probe, st_)
    assert J <= objective(hevc_matrix(4, 5, SmoothingPolicy()), st_)
    assert J <= objective(realize_matrix(4, 5, PdpcParams.for_size(4, 0.3, -0.2, 0.1, 0.5, 0.25, 4)), st_)


def test_objective_equals_mse_difference(rng):
    N = 4
    R = random_refs(rng, N, count=100).astype(float)
    V = rng.integers(0, 256, (100, 16)).astype(float)
    st_ = ModeStats(N, 3).add(V, R)
    H = rng.normal(size=(16, 17)) / 17
    mse = np.mean(np.sum((V - R @ H.T) ** 2, axis=1))
    energy = np.mean(np.sum(V**2, axis=1))
    assert objective(H, st_) == pytest.approx(mse - energy, rel=1e-10)


def test_predictor_matrix_shape_check():
    with pytest.raises(ValueError):
        PredictorMatrix(np.zeros((16, 16)), 4, 0)


def test_search_spec_validation():
    with pytest.raises(ValueError):
        SearchSpec(fine_step=0.1)
    with pytest.raises(ValueError):
        SearchSpec(a_values=(0.0, 0.5))
    with pytest.raises(ValueError):
        SearchSpec(k_values=(3,))


def _vertical_batch(rng, N, count, offset=None):
    R = random_refs(rng, N, count=count)
    top = R[:, 1 : N + 1]
    V = np.repeat(top[:, None, :], N, axis=1).reshape(count, -1)
    if offset is not None:
        V = V + offset(R)
    return BlockBatch(N, V, R)


def test_fit_params_cannot_improve_exact(rng):
    batch = _vertical_batch(rng, 4, 300)
    stats = ModeStats(4, 26).add(batch.V, batch.R)
    res = search_params(stats, 4, policy=NO_EDGE)
    assert res.J == res.J_identity
    assert res.params.is_identity


def test_fit_params_finds_near_edge_model(rng):
    N = 4
    R = random_refs(rng, N, count=400).astype(float)
    # DC base prediction: unlike pure vertical copy, every c coefficient is identifiable
    true = PdpcParams.for_size(N, c1v=0.5, c2v=0.25, c1h=0.25, a=1.0)
    V = R @ realize_matrix(N, 1, true, NO_EDGE).T
    stats = ModeStats(N, 1).add(V, R)
    res = search_params(stats, N, policy=NO_EDGE)
    assert res.J < res.J_identity
    assert res.params.c1v != 0 and res.params.c2v != 0
    assert res.params.cs == pytest.approx(true.cs, abs=1e-9)
    assert res.params.a == 1.0


def test_vertical_copy_only_sees_corner_term(rng):
    # for mode 26 the c1v term cancels against b'; the tie-break keeps it at zero
    N = 4
    R = random_refs(rng, N, count=300).astype(float)
    V = R @ realize_matrix(N, 26, PdpcParams.for_size(N, c1v=0.5, c2v=0.5), NO_EDGE).T
    res = search_params(ModeStats(N, 26).add(V, R), N, policy=NO_EDGE)
    assert res.params.c2v == 0.5 and res.params.c1v == 0.0
    assert res.J < res.J_identity


def test_fit_params_matches_exhaustive_grid(rng):
    # with equal coarse and fine steps the search is exhaustive, so brute force must agree
    N = 4
    spec = SearchSpec(fine_step=0.5, coarse_step=0.5, a_values=(0.5, 1.0), k_values=(2,))
    R = random_refs(rng, N, count=200).astype(float)
    V = R @ realize_matrix(N, 20, PdpcParams.for_size(N, 0.3, 0.1, -0.4, 0.2, 0.7, 2)).T
    V = V + rng.normal(scale=4, size=V.shape)
    stats = [ModeStats(N, 20).add(V, R)]
    res = search_params(stats, N, spec)
    axis = [-1, -0.5, 0, 0.5, 1]
    best = min(
        group_objective(PdpcParams.for_size(N, *c, a=a, k=2), stats, N)
        for a in (0.5, 1.0)
        for c in itertools.product(axis, repeat=4)
    )
    assert res.J == pytest.approx(best, rel=1e-9)
    assert res.J <= res.J_identity


def test_fit_params_never_worse_than_identity(rng):
    for mode in (0, 1, 7, 18, 30):
        R = random_refs(rng, 4, count=150).astype(float)
        V = rng.integers(0, 256, (150, 16))
        stats = ModeStats(4, mode).add(V, R)
        res = search_params(stats, 4)
        assert res.J <= res.J_identity
        assert fit_params(stats, 4) == res.params


def test_search_deterministic_across_workers(rng):
    R = random_refs(rng, 8, count=300).astype(float)
    V = rng.integers(0, 256, (300, 64))
    stats = ModeStats(8, 12).add(V, R)
    assert search_params(stats, 8, workers=1) == search_params(stats, 8, workers=4)


def _smooth_batch(rng, N, count):
    # plane-like content: references and block sampled from the same gradient
    out_V, out_R = [], []
    for _ in range(count):
        gx, gy, c = rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(60, 190)
        img = c + gx * np.arange(-1, 2 * N)[None, :] + gy * np.arange(-1, 2 * N)[:, None]
        img = np.clip(np.round(img + rng.normal(scale=2, size=img.shape)), 0, 255).astype(int)
        corner = img[0, 0]
        top, left = img[0, 1:], img[1:, 0]
        out_R.append(np.concatenate([[corner], top, left]))
        out_V.append(img[1 : N + 1, 1 : N + 1].ravel())
    return BlockBatch(N, np.array(out_V), np.array(out_R))


def test_multiset_exact_blocks_gain_nothing(rng):
    batch = _vertical_batch(rng, 4, 200)
    lib = fit_multiset(batch, 4, 2, policy=NO_EDGE)
    modes, hevc = classify_blocks(batch, NO_EDGE)
    table = sse_table(batch, modes, hevc, lib, NO_EDGE)
    chosen = select_sets(table)
    assert table[np.arange(len(batch)), chosen].sum() == hevc.sum() == 0
    assert np.all(chosen == 0)


def test_multiset_mixed_corpus(rng):
    exact = _vertical_batch(rng, 4, 150)
    smooth = _smooth_batch(rng, 4, 150)
    batch = BlockBatch.concat([exact, smooth], 4)
    lib = fit_multiset(batch, 4, 2, policy=NO_EDGE)
    modes, hevc = classify_blocks(batch, NO_EDGE)
    table = sse_table(batch, modes, hevc, lib, NO_EDGE)
    chosen = select_sets(table)
    total = table[np.arange(len(batch)), chosen].sum()
    assert total < hevc.sum()
    assert np.all(chosen[:150] == 0)
    assert np.mean(chosen[150:] == 1) > 0.3


def test_multiset_nested_monotone(rng):
    batch = _smooth_batch(rng, 4, 200)
    modes, hevc = classify_blocks(batch)
    quick = SearchSpec(a_values=(0.5, 1.0), k_values=(2,), sweeps=1)
    two = fit_multiset(batch, 4, 2, quick)
    four = fit_multiset(batch, 4, 4, quick, base=two)
    for s in (1,):
        for g in range(5):
            assert four.entries[(4, g, s)] == two.entries[(4, g, s)]

    def total(lib):
        t = sse_table(batch, modes, hevc, lib)
        return t[np.arange(len(batch)), select_sets(t)].sum()

    one = total(ParamLibrary(1))
    assert one == hevc.sum()
    assert total(four) <= total(two) <= one
    assert total(four) < one


def test_multiset_rejects_bad_S(rng):
    with pytest.raises(ValueError):
        fit_multiset(_smooth_batch(rng, 4, 5), 4, 3)
