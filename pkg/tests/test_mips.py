import math
import tracemalloc

import numpy as np
import pytest

from approxtopk import _backend
from approxtopk.core import AlgoParams, ParameterError, approx_top_k, exact_top_k, measure_recall
from approxtopk.dataset_io import VectorDataset, synth_gaussian
from approxtopk.mips import (
    FusedStats,
    MipsRequest,
    exact_mips,
    mips_fused,
    mips_unfused,
    padded_length,
    real_candidates,
)
from approxtopk.planner import PlanRequest, select_parameters
from approxtopk.recall import exact_expected_recall


def same_bits(a, b):
    np.testing.assert_array_equal(a.values.view(np.uint32), b.values.view(np.uint32))
    np.testing.assert_array_equal(a.indices, b.indices)


def request(rows, dims, nq, b, kp, k, seed=0, lane=1):
    db = synth_gaussian(rows, dims, seed)
    q = synth_gaussian(nq, dims, seed + 1)
    return MipsRequest(db, q, AlgoParams(padded_length(rows, b), b, kp, k, lane))


def test_self_match_ranks_first():
    db = VectorDataset(np.eye(256, 8, dtype=np.float32) * 3 + np.eye(256, 8, k=-8, dtype=np.float32))
    q = VectorDataset(db.data[[2, 5]])
    res = mips_fused(MipsRequest(db, q, AlgoParams(256, 128, 1, 4)), 128)
    assert res.indices[0, 0] == 2 and res.indices[1, 0] == 5


def test_exact_when_bucket_fits(backend):
    req = request(512, 16, 5, 128, 4, 50, lane=128)
    got = mips_unfused(req, backend=backend)
    scores = req.queries.data.astype(np.float64) @ req.database.data.T.astype(np.float64)
    want = np.argsort(-scores, axis=1, kind="stable")[:, :50]
    np.testing.assert_array_equal(got.indices, want)


@pytest.mark.parametrize("backend_name", sorted(_backend.BACKENDS))
@pytest.mark.parametrize(
    "rows,b,kp,k,blocks",
    [
        (1000, 128, 2, 50, [128, 256, 1024, 64, 1, 32]),
        (1024, 256, 3, 100, [256, 512, 1024, 2048, 128, 16]),
        (777, 7, 1, 5, [7, 14, 700, 1]),
        (300, 300, 1, 10, [300, 60, 1]),
    ],
)
def test_fused_equals_unfused(backend_name, rows, b, kp, k, blocks):
    req = request(rows, 24, 6, b, kp, k, seed=rows)
    ref = mips_unfused(req, backend=backend_name)
    for bc in blocks:
        same_bits(mips_fused(req, bc, backend=backend_name), ref)


def test_backends_agree():
    req = request(2000, 33, 9, 128, 3, 40)
    ref = mips_fused(req, 128, backend="python")
    for name in _backend.BACKENDS:
        same_bits(mips_fused(req, 256, backend=name), ref)
        same_bits(mips_unfused(req, backend=name), ref)


def test_query_chunking_does_not_matter():
    req = request(600, 8, 13, 128, 2, 20)
    ref = mips_fused(req, 128)
    same_bits(mips_fused(req, 128, query_chunk=4), ref)
    same_bits(mips_unfused(req, query_chunk=5), ref)


def test_padding_never_returned():
    # 130 rows in 128 buckets of size 2: most buckets hold one real row and padding
    req = request(130, 4, 3, 128, 2, 130, lane=128)
    res = mips_fused(req, 128)
    assert res.indices.max() < 130
    assert np.all(np.isfinite(res.values))
    for r in range(3):
        assert np.unique(res.indices[r]).size == 130


def test_scores_match_float32_reference():
    req = request(257, 19, 4, 257, 1, 257)
    res = mips_unfused(req)
    # sequential float32 accumulation, one rounding per multiply and per add
    q, db = req.queries.data, req.database.data
    ref = np.zeros((4, 257), np.float32)
    for j in range(19):
        ref = (ref + (q[:, j:j + 1] * db[:, j][None, :]).astype(np.float32)).astype(np.float32)
    for r in range(4):
        np.testing.assert_array_equal(res.values[r], ref[r, res.indices[r]])


def test_request_validation():
    db, q = synth_gaussian(100, 4), synth_gaussian(2, 5)
    with pytest.raises(ValueError):
        MipsRequest(db, q, AlgoParams(128, 128, 1, 4))
    q = synth_gaussian(2, 4)
    with pytest.raises(ParameterError):
        MipsRequest(db, q, AlgoParams(64, 64, 1, 4))
    with pytest.raises(ParameterError):
        MipsRequest(db, q, AlgoParams(200, 200, 1, 101, 1))
    # 64 buckets of 2 with K'=1 keep only 64 real rows
    with pytest.raises(ParameterError):
        MipsRequest(db, q, AlgoParams(128, 64, 1, 70, 1))


def test_block_cols_validation():
    req = request(512, 4, 2, 128, 1, 10)
    for bad in (0, 96, 200):
        with pytest.raises(ParameterError):
            mips_fused(req, bad)


def test_real_candidates():
    assert real_candidates(130, AlgoParams(256, 128, 2, 10)) == 130
    assert real_candidates(100, AlgoParams(256, 256, 1, 10, 1)) == 100
    assert real_candidates(1000, AlgoParams(1024, 128, 3, 10)) == 384


def _peak(fn):
    tracemalloc.start()
    try:
        fn()
        return tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()


def test_score_buffer_is_block_sized():
    nq, dims, block = 64, 8, 1024
    peaks = {}
    for rows in (65536, 262144):
        req = request(rows, dims, nq, 1024, 2, 64, lane=128)
        stats = FusedStats()
        mips_fused(req, block, stats=stats, query_chunk=nq)
        assert stats.score_buffer_bytes == nq * block * 4
        assert stats.blocks == rows // block
        fused = _peak(lambda: mips_fused(req, block, query_chunk=nq))
        unfused = _peak(lambda: mips_unfused(req, query_chunk=nq))
        assert unfused >= nq * rows * 4
        peaks[rows] = fused
    # 4x the database, same transient footprint
    assert peaks[262144] <= 1.1 * peaks[65536]
    assert peaks[262144] < nq * 262144 * 4 / 16


def test_exact_mips_oracle():
    db, q = synth_gaussian(300, 6, 1), synth_gaussian(3, 6, 2)
    res = exact_mips(db, q, 7)
    s = q.data.astype(np.float64) @ db.data.T.astype(np.float64)
    np.testing.assert_array_equal(res.indices, np.argsort(-s, axis=1, kind="stable")[:, :7])
    with pytest.raises(ValueError):
        exact_mips(db, q, 301)


def test_large_config_recall():
    rows, dims, nq, k = 15360, 16, 4, 480
    plan = select_parameters(PlanRequest(rows, k, 0.95))
    params = plan.params(rows, k)
    db, q = synth_gaussian(rows, dims, 5), synth_gaussian(nq, dims, 6)
    res = mips_fused(MipsRequest(db, q, params), params.num_buckets)
    rec = measure_recall(res, exact_mips(db, q, k))
    pred = exact_expected_recall(params).value
    # per-query recall spread from the simulated battery at this config
    se = np.std(rec, ddof=1) / math.sqrt(nq) if np.std(rec) > 0 else 0.0
    sigma = max(se, 0.01 / math.sqrt(nq))
    assert abs(rec.mean() - pred) <= 3 * sigma


@pytest.mark.slow
def test_million_row_database():
    rows, dims, nq, k = 1_000_000, 128, 1024, 1024
    n = padded_length(rows, 128)
    assert n == 1_000_064
    plan = select_parameters(PlanRequest(n, k, 0.99))
    params = plan.params(n, k)
    db, q = synth_gaussian(rows, dims, 11), synth_gaussian(nq, dims, 12)
    req = MipsRequest(db, q, params)
    stats = FusedStats()
    res = mips_fused(req, params.num_buckets * 8, stats=stats)
    assert stats.score_buffer_bytes <= 4 * stats.query_chunk * params.num_buckets * 8
    assert res.indices.max() < rows
    rec = measure_recall(res, exact_mips(db, q, k))
    se = np.std(rec, ddof=1) / math.sqrt(nq)
    assert rec.mean() >= 0.99 - 3 * se
