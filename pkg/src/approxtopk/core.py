"""Two-stage approximate top-k.

Stage 1 splits the input into ``num_buckets`` strided buckets (element ``i``
belongs to bucket ``i % num_buckets``) and keeps the top ``local_k`` of each
bucket with an online bubble-insertion update. Stage 2 sorts the
``num_buckets * local_k`` survivors and returns the first ``global_k``.

Arrays are row-major ``[batch, n]``; a 1-D input is a batch of one and gives
1-D results back.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend

INDEX_DTYPE = np.uint32
MAX_N = 2**32 - 1


class ParameterError(ValueError):
    """Algorithm parameters violate an invariant."""


@dataclass(frozen=True)
class AlgoParams:
    """One configuration of the algorithm.

    ``num_buckets`` must divide ``n`` and be a multiple of ``lane_multiple``
    (or equal ``n``); ``num_buckets * local_k`` must cover ``global_k``.
    """

    n: int
    num_buckets: int
    local_k: int
    global_k: int
    lane_multiple: int = 128

    def __post_init__(self):
        for name in ("n", "num_buckets", "local_k", "global_k", "lane_multiple"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ParameterError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise ParameterError(f"{name} must be >= 1, got {value}")
        if self.n > MAX_N:
            raise ParameterError(f"n={self.n} exceeds the 32-bit index range")
        if self.global_k > self.n:
            raise ParameterError(f"global_k={self.global_k} exceeds n={self.n}")
        if self.n % self.num_buckets:
            raise ParameterError(
                f"num_buckets={self.num_buckets} does not divide n={self.n}"
            )
        if self.num_buckets * self.local_k < self.global_k:
            raise ParameterError(
                f"num_buckets * local_k = {self.num_buckets * self.local_k} "
                f"< global_k = {self.global_k}"
            )
        if self.num_buckets % self.lane_multiple and self.num_buckets != self.n:
            raise ParameterError(
                f"num_buckets={self.num_buckets} is not a multiple of "
                f"lane_multiple={self.lane_multiple}"
            )

    @property
    def bucket_size(self) -> int:
        return self.n // self.num_buckets

    @property
    def num_elements(self) -> int:
        """Stage-1 output size, ``num_buckets * local_k``."""
        return self.num_buckets * self.local_k


@dataclass
class TopKResult:
    """Parallel value/index arrays, ``[k]`` or ``[batch, k]``."""

    values: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.indices = np.asarray(self.indices, dtype=INDEX_DTYPE)
        if self.values.shape != self.indices.shape:
            raise ValueError(
                f"values {self.values.shape} and indices {self.indices.shape} differ in shape"
            )

    def __len__(self) -> int:
        return self.values.shape[-1]

    def row(self, i: int) -> TopKResult:
        if self.values.ndim == 1:
            if i != 0:
                raise IndexError(i)
            return self
        return TopKResult(self.values[i], self.indices[i])


@dataclass
class BucketState:
    """Top-``local_k`` lists of one bucket, values non-increasing."""

    values: list[float]
    indices: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.indices:
            self.indices = [0] * len(self.values)
        if len(self.indices) != len(self.values):
            raise ValueError("values and indices must have the same length")

    @classmethod
    def empty(cls, local_k: int) -> BucketState:
        return cls([-math.inf] * local_k, [0] * local_k)


@dataclass
class OpCounter:
    """Tallies compares and selects performed by :func:`update_bucket`."""

    compares: int = 0
    selects: int = 0

    @property
    def total(self) -> int:
        return self.compares + self.selects


def partition_index(i: int, params: AlgoParams) -> int:
    """Bucket of element ``i``: elements ``num_buckets`` apart share a bucket."""
    if not 0 <= i < params.n:
        raise IndexError(f"element index {i} outside [0, {params.n})")
    return i % params.num_buckets


def update_bucket(
    state: BucketState, value: float, index: int, counter: OpCounter | None = None
) -> BucketState:
    """Offer one element to a bucket's top list (in place; returns ``state``).

    Branch-free form of the kernel: every compare and select is executed for
    every element, so ``counter`` sees ``5 * local_k - 2`` operations per call.
    """
    vals, idxs = state.values, state.indices
    x = float(np.float32(value))
    last = len(vals) - 1

    pred = x >= vals[last]
    vals[last] = x if pred else vals[last]
    idxs[last] = index if pred else idxs[last]
    if counter is not None:
        counter.compares += 1
        counter.selects += 2

    for k in range(last, 0, -1):
        pred = x > vals[k - 1]
        lo_v, hi_v = vals[k], vals[k - 1]
        vals[k] = hi_v if pred else lo_v
        vals[k - 1] = lo_v if pred else hi_v
        lo_i, hi_i = idxs[k], idxs[k - 1]
        idxs[k] = hi_i if pred else lo_i
        idxs[k - 1] = lo_i if pred else hi_i
        if counter is not None:
            counter.compares += 1
            counter.selects += 4
    return state


def _as_rows(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x)
    squeeze = arr.ndim == 1
    if arr.ndim not in (1, 2):
        raise ValueError(f"expected a 1-D or 2-D array, got shape {arr.shape}")
    arr = np.ascontiguousarray(np.atleast_2d(arr), dtype=np.float32)
    if np.isnan(arr).any():
        raise ValueError("input contains NaN")
    return arr, squeeze


def init_state(batch: int, params: AlgoParams) -> tuple[np.ndarray, np.ndarray]:
    """Fresh stage-1 state: values at -inf, indices zero, layout ``[batch, K', B]``."""
    width = params.num_elements
    values = np.full((batch, width), -np.inf, dtype=np.float32)
    indices = np.zeros((batch, width), dtype=INDEX_DTYPE)
    return values, indices


def stream_block(values, indices, block, col_offset, params, *, backend=None, threads=None):
    """Feed columns ``[col_offset, col_offset + block.shape[1])`` into the state.

    Rows are split across ``threads`` workers; buckets within a row are always
    updated in column order, so the result does not depend on the split.
    """
    kern = _backend.get(backend)
    threads = threads or _backend.default_threads()
    rows = block.shape[0]
    if threads <= 1 or rows < 2:
        kern.update_state(values, indices, block, col_offset, params.num_buckets, params.local_k)
        return
    bounds = np.linspace(0, rows, min(threads, rows) + 1).astype(int)
    with ThreadPoolExecutor(max_workers=len(bounds) - 1) as pool:
        futures = [
            pool.submit(
                kern.update_state,
                values[a:b],
                indices[a:b],
                block[a:b],
                col_offset,
                params.num_buckets,
                params.local_k,
            )
            for a, b in zip(bounds[:-1], bounds[1:])
            if b > a
        ]
        for f in futures:
            f.result()


def stage1_partial_reduce(x, params: AlgoParams, *, backend=None, threads=None) -> TopKResult:
    """Per-bucket top-``local_k`` in one streaming pass.

    Output position ``k * num_buckets + b`` holds the ``(k+1)``-th best of
    bucket ``b``.
    """
    rows, squeeze = _as_rows(x)
    if rows.shape[1] != params.n:
        raise ParameterError(f"input length {rows.shape[1]} != params.n {params.n}")
    values, indices = init_state(rows.shape[0], params)
    stream_block(values, indices, rows, 0, params, backend=backend, threads=threads)
    if squeeze:
        return TopKResult(values[0], indices[0])
    return TopKResult(values, indices)


def select_top(candidates: TopKResult, k: int) -> TopKResult:
    """Sort candidates by value (desc), ties by smaller index, and keep ``k``."""
    vals = np.atleast_2d(candidates.values)
    idxs = np.atleast_2d(candidates.indices)
    if not 1 <= k <= vals.shape[1]:
        raise ValueError(f"k={k} outside [1, {vals.shape[1]}]")
    order = np.lexsort((idxs, -vals), axis=-1)[:, :k]
    out_v = np.take_along_axis(vals, order, axis=-1)
    out_i = np.take_along_axis(idxs, order, axis=-1)
    if candidates.values.ndim == 1:
        return TopKResult(out_v[0], out_i[0])
    return TopKResult(out_v, out_i)


def approx_top_k(x, params: AlgoParams, *, backend=None, threads=None) -> TopKResult:
    """Stage 1 followed by an exact sort of the ``B * K'`` survivors."""
    candidates = stage1_partial_reduce(x, params, backend=backend, threads=threads)
    return select_top(candidates, params.global_k)


def exact_top_k(x, k: int) -> TopKResult:
    """Exact top-k; equal values are ordered by smaller index first."""
    rows, squeeze = _as_rows(x)
    n = rows.shape[1]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    out_v = np.empty((rows.shape[0], k), dtype=np.float32)
    out_i = np.empty((rows.shape[0], k), dtype=INDEX_DTYPE)
    for r, row in enumerate(rows):
        if k == n:
            chosen = np.arange(n)
        else:
            threshold = np.partition(row, n - k)[n - k]
            above = np.flatnonzero(row > threshold)
            ties = np.flatnonzero(row == threshold)[: k - above.size]
            chosen = np.concatenate([above, ties])
        order = np.lexsort((chosen, -row[chosen]))
        chosen = chosen[order]
        out_v[r] = row[chosen]
        out_i[r] = chosen
    if squeeze:
        return TopKResult(out_v[0], out_i[0])
    return TopKResult(out_v, out_i)


def measure_recall(approx: TopKResult, exact: TopKResult):
    """Fraction of ``exact`` indices present in ``approx``.

    Returns a float for single results and an array of per-row recalls for
    batched ones.
    """
    a = np.atleast_2d(approx.indices)
    e = np.atleast_2d(exact.indices)
    if a.shape != e.shape:
        raise ValueError(f"result shapes differ: {a.shape} vs {e.shape}")
    k = e.shape[1]
    hits = np.array(
        [np.intersect1d(ar, er, assume_unique=True).size for ar, er in zip(a, e)],
        dtype=np.float64,
    )
    recall = hits / k
    if approx.indices.ndim == 1 and exact.indices.ndim == 1:
        return float(recall[0])
    return recall
