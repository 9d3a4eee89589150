import numpy as np
import pytest

from pdpc_intra.evaluate import collect_blocks, corpus_digest, evaluate, image_blocks
from pdpc_intra.formats import GrayImage
from pdpc_intra.intra import SmoothingPolicy
from pdpc_intra.pdpc import ParamLibrary, PdpcParams
from pdpc_intra.training import SearchSpec, fit_multiset

QUICK = SearchSpec(a_values=(0.5, 1.0), k_values=(2, 4), sweeps=1)


def smooth_image(seed, size=32):
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size]
    img = 128 + 40 * np.sin(x / rng.uniform(3, 9) + rng.uniform(0, 6)) * np.cos(y / rng.uniform(3, 9))
    img = img + rng.normal(scale=3, size=img.shape)
    return GrayImage.from_array(np.clip(np.round(img), 0, 255))


@pytest.fixture(scope="module")
def corpus():
    return [smooth_image(s) for s in range(5)]


def test_image_blocks_grid(corpus):
    b = image_blocks(corpus[0], 8)
    assert len(b) == 16
    assert b.origins[:2] == [(0, 0), (8, 0)]
    assert len(image_blocks(corpus[0], 8, stride=4)) == 49
    assert len(image_blocks(corpus[0], 8, skip_padded=True)) == 4


def test_collect_blocks_thread_independent(corpus):
    a = collect_blocks(corpus, 4, threads=1)
    b = collect_blocks(corpus, 4, threads=3)
    assert np.array_equal(a.V, b.V) and np.array_equal(a.R, b.R) and a.origins == b.origins


def test_identity_only_library(corpus):
    rep = evaluate(corpus, ParamLibrary(1), [4, 8])
    assert rep.reduction_percent == 0.0
    assert rep.selected_sse == rep.hevc_sse
    assert rep.histogram() == [rep.blocks]


def test_identity_params_match_hevc_without_filters(corpus):
    # real-valued identity PDPC rounds to exactly the integer HEVC prediction here
    policy = SmoothingPolicy(False, False)
    lib = ParamLibrary(2)
    for N in (4, 8):
        for g in range(5):
            lib.set(N, g, 1, PdpcParams.identity(N))
    rep = evaluate(corpus, lib, [4, 8], policy)
    for r in rep.rows:
        assert r["set_sse"][0] == r["set_sse"][1]


def test_report_consistency_and_nesting(corpus):
    policy = SmoothingPolicy()
    batch = collect_blocks(corpus, 4)
    two = fit_multiset(batch, 4, 2, QUICK, policy)
    four = fit_multiset(batch, 4, 4, QUICK, policy, base=two)
    r2 = evaluate(corpus, two, [4])
    r4 = evaluate(corpus, four, [4])
    for rep in (r2, r4):
        assert sum(rep.histogram()) == rep.blocks
        assert rep.selected_sse == sum(sum(r["selected_sse"]) for r in rep.rows)
        for r in rep.rows:
            assert sum(r["selected"]) == r["blocks"]
            assert min(r["set_sse"]) >= 0
            assert sum(r["selected_sse"]) <= r["hevc_sse"]
    assert r4.selected_sse <= r2.selected_sse <= r2.hevc_sse
    d = r4.to_dict()
    assert d["selected_sse"] == r4.selected_sse and len(d["rows"]) == len(r4.rows)
    assert "total:" in r4.to_text()


def test_evaluate_deterministic(corpus):
    lib = ParamLibrary(2)
    for g in range(5):
        lib.set(4, g, 1, PdpcParams.for_size(4, 0.25, 0.125, 0.25, 0.125, 0.5, 2))
    a = evaluate(corpus, lib, [4], threads=1).to_json()
    b = evaluate(corpus, lib, [4], threads=4).to_json()
    assert a == b


def test_evaluate_requires_complete_library(corpus):
    with pytest.raises(ValueError):
        evaluate(corpus, ParamLibrary(2), [4])


def test_digest_depends_on_content(corpus):
    assert corpus_digest(corpus) == corpus_digest(list(corpus))
    assert corpus_digest(corpus) != corpus_digest(corpus[::-1])
