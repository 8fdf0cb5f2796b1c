"""Maximum inner-product search on top of the two-stage top-k.

Both paths compute ``score[q, c] = sum_j query[q, j] * db[c, j]`` in float32
with ``j`` ascending and one rounding per multiply and per add, so the fused
and unfused results are bit-identical.

``params.n`` may exceed the database row count; the extra columns are logical
padding with ``-inf`` scores and padding indices are never returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import (
    AlgoParams,
    ParameterError,
    TopKResult,
    init_state,
    select_top,
    stage1_partial_reduce,
    stream_block,
)
from .dataset_io import VectorDataset

DEFAULT_QUERY_CHUNK = 256


@dataclass(frozen=True)
class MipsRequest:
    database: VectorDataset
    queries: VectorDataset
    params: AlgoParams

    def __post_init__(self):
        if self.database.dims != self.queries.dims:
            raise ValueError(
                f"dimension mismatch: database has {self.database.dims}, "
                f"queries have {self.queries.dims}"
            )
        rows, p = self.database.rows, self.params
        if rows < 1:
            raise ValueError("database is empty")
        if p.n < rows:
            raise ParameterError(f"params.n={p.n} is smaller than the database ({rows} rows)")
        if p.global_k > rows:
            raise ParameterError(f"global_k={p.global_k} exceeds database rows {rows}")
        if real_candidates(rows, p) < p.global_k:
            raise ParameterError("too much padding: stage 1 keeps fewer than K real rows")

    @property
    def padding(self) -> int:
        return self.params.n - self.database.rows


def real_candidates(rows: int, params: AlgoParams) -> int:
    """Stage-1 survivors that are real rows when only ``rows`` of ``params.n`` exist."""
    full, rem = divmod(rows, params.num_buckets)
    per_bucket = np.full(params.num_buckets, full)
    per_bucket[:rem] += 1
    return int(np.minimum(per_bucket, params.local_k).sum())


@dataclass
class FusedStats:
    """Filled in by :func:`mips_fused`: the score buffer it actually allocated."""

    block_cols: int = 0
    query_chunk: int = 0
    score_buffer_bytes: int = 0
    blocks: int = 0


def _finish(candidates: TopKResult, rows: int, k: int) -> TopKResult:
    # padding entries carry -inf; rank them after every real row, then drop
    vals, idxs = candidates.values, candidates.indices
    pad = idxs >= rows
    if pad.any():
        order = np.lexsort((idxs, -vals, pad), axis=-1)[:, :k]
        vals = np.take_along_axis(vals, order, axis=-1)
        idxs = np.take_along_axis(idxs, order, axis=-1)
        return TopKResult(vals, idxs)
    return select_top(candidates, k)


def _chunks(total: int, size: int):
    for a in range(0, total, size):
        yield a, min(a + size, total)


def mips_unfused(
    req: MipsRequest, *, backend=None, threads=None, query_chunk: int = DEFAULT_QUERY_CHUNK
) -> TopKResult:
    """Materialise the ``[b, n]`` score matrix (per query chunk), then run approx top-k."""
    kern = _backend.get(backend)
    q, db, p = req.queries.data, req.database.data, req.params
    rows = req.database.rows
    out_v = np.empty((req.queries.rows, p.global_k), dtype=np.float32)
    out_i = np.empty((req.queries.rows, p.global_k), dtype=np.uint32)
    for a, b in _chunks(req.queries.rows, query_chunk):
        scores = np.full((b - a, p.n), -np.inf, dtype=np.float32)
        kern.dot_block(q[a:b], db, 0, rows, scores[:, :rows])
        cand = stage1_partial_reduce(scores, p, backend=backend, threads=threads)
        res = _finish(cand, rows, p.global_k)
        out_v[a:b], out_i[a:b] = res.values, res.indices
    return TopKResult(out_v, out_i)


def check_block_cols(block_cols: int, params: AlgoParams):
    b = params.num_buckets
    if block_cols < 1:
        raise ParameterError("block_cols must be positive")
    if block_cols % b and b % block_cols:
        raise ParameterError(
            f"block_cols={block_cols} must be a multiple or a divisor of num_buckets={b}"
        )


def mips_fused(
    req: MipsRequest,
    block_cols: int,
    *,
    backend=None,
    threads=None,
    query_chunk: int = DEFAULT_QUERY_CHUNK,
    stats: FusedStats | None = None,
) -> TopKResult:
    """Stream score blocks of ``block_cols`` columns straight into the stage-1 state.

    Only a ``[query_chunk, block_cols]`` score buffer is ever allocated. Blocks
    are visited in ascending column order; the final block is topped up with
    ``-inf`` when it runs past the database.
    """
    check_block_cols(block_cols, req.params)
    kern = _backend.get(backend)
    q, db, p = req.queries.data, req.database.data, req.params
    rows = req.database.rows
    nq = req.queries.rows
    query_chunk = max(1, min(query_chunk, nq))
    block_cols = min(block_cols, p.n)
    buf = np.empty((query_chunk, block_cols), dtype=np.float32)
    if stats is not None:
        stats.block_cols = block_cols
        stats.query_chunk = query_chunk
        stats.score_buffer_bytes = buf.nbytes
        stats.blocks = 0

    out_v = np.empty((nq, p.global_k), dtype=np.float32)
    out_i = np.empty((nq, p.global_k), dtype=np.uint32)
    for a, b in _chunks(nq, query_chunk):
        values, indices = init_state(b - a, p)
        tile = buf[: b - a]
        for c0, c1 in _chunks(p.n, block_cols):
            blk = tile[:, : c1 - c0]
            real = max(0, min(c1, rows) - c0)
            if real:
                kern.dot_block(q[a:b], db, c0, c0 + real, blk[:, :real])
            blk[:, real:] = -np.inf
            stream_block(values, indices, blk, c0, p, backend=backend, threads=threads)
            if stats is not None:
                stats.blocks += 1
        res = _finish(TopKResult(values, indices), rows, p.global_k)
        out_v[a:b], out_i[a:b] = res.values, res.indices
    return TopKResult(out_v, out_i)


def exact_mips(
    database: VectorDataset, queries: VectorDataset, k: int, *, query_chunk: int = 32
) -> TopKResult:
    """Brute-force oracle: float64 BLAS scores and a full ``argsort``.

    Independent of the float32 kernels; ties and near-ties may order
    differently, which only matters at rounding level.
    """
    if database.dims != queries.dims:
        raise ValueError("dimension mismatch")
    if not 1 <= k <= database.rows:
        raise ValueError(f"k={k} outside [1, {database.rows}]")
    db = database.data.astype(np.float64)
    out_v = np.empty((queries.rows, k), dtype=np.float32)
    out_i = np.empty((queries.rows, k), dtype=np.uint32)
    for a, b in _chunks(queries.rows, query_chunk):
        s = queries.data[a:b].astype(np.float64) @ db.T
        top = np.argpartition(-s, k - 1, axis=1)[:, :k]
        sv = np.take_along_axis(s, top, axis=1)
        order = np.lexsort((top, -sv), axis=-1)
        top = np.take_along_axis(top, order, axis=1)
        out_i[a:b] = top
        out_v[a:b] = np.take_along_axis(s, top, axis=1)
    return TopKResult(out_v, out_i)


def padded_length(rows: int, multiple: int) -> int:
    """Smallest multiple of ``multiple`` that is >= ``rows``."""
    return -(-rows // multiple) * multiple
