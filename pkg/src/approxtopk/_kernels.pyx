# cython: language_level=3
"""Compiled hot loops: streaming top-K' bucket update and ordered dot products.

Both functions mirror ``approxtopk._fallback`` exactly, including float32
rounding, so either backend produces bit-identical results.
"""

import numpy as np

from libc.stdint cimport uint32_t


cdef extern from "topk_kernels.h" nogil:
    void atk_update_run(float* vals, uint32_t* idx, const float* x,
                        Py_ssize_t length, Py_ssize_t nb, Py_ssize_t kp,
                        uint32_t first)
    void atk_axpy(float* row, const float* trow, float q, Py_ssize_t w)


def update_state(
    float[:, ::1] values,
    uint32_t[:, ::1] indices,
    const float[:, :] block,
    Py_ssize_t col_offset,
    Py_ssize_t num_buckets,
    Py_ssize_t local_k,
):
    """Stream ``block`` (columns ``col_offset...``) into the bucket state in place."""
    cdef Py_ssize_t rows = block.shape[0]
    cdef Py_ssize_t cols = block.shape[1]
    cdef Py_ssize_t r, c, g, s, length
    if values.shape[0] != rows or indices.shape[0] != rows:
        raise ValueError("state and block disagree on batch size")
    if values.shape[1] != num_buckets * local_k or indices.shape[1] != num_buckets * local_k:
        raise ValueError("state width must be num_buckets * local_k")
    if cols == 0 or rows == 0:
        return
    if block.strides[1] != sizeof(float):
        raise ValueError("block rows must be contiguous")
    with nogil:
        for r in range(rows):
            c = 0
            g = col_offset
            while c < cols:
                s = g % num_buckets
                length = num_buckets - s
                if length > cols - c:
                    length = cols - c
                atk_update_run(
                    &values[r, s],
                    &indices[r, s],
                    &block[r, c],
                    length,
                    num_buckets,
                    local_k,
                    <uint32_t>g,
                )
                c += length
                g += length


cdef Py_ssize_t TILE = 4096


def dot_block(
    const float[:, ::1] queries,
    const float[:, ::1] database,
    Py_ssize_t start,
    Py_ssize_t stop,
    float[:, :] out,
):
    """out[q, c] = sum_j queries[q, j] * database[start + c, j], j ascending, float32."""
    cdef Py_ssize_t nq = queries.shape[0]
    cdef Py_ssize_t d = queries.shape[1]
    cdef Py_ssize_t c0, c1, w, q, j, c
    cdef float* row
    if database.shape[1] != d:
        raise ValueError("dimension mismatch")
    if out.shape[0] != nq or out.shape[1] != stop - start:
        raise ValueError("output buffer has the wrong shape")
    if nq == 0 or stop <= start:
        return
    if out.strides[1] != sizeof(float):
        raise ValueError("output rows must be contiguous")
    tmp_arr = np.empty((d, TILE), dtype=np.float32)
    cdef float[:, ::1] tmp = tmp_arr
    with nogil:
        c0 = start
        while c0 < stop:
            c1 = c0 + TILE
            if c1 > stop:
                c1 = stop
            w = c1 - c0
            for c in range(w):
                for j in range(d):
                    tmp[j, c] = database[c0 + c, j]
            for q in range(nq):
                row = &out[q, c0 - start]
                for c in range(w):
                    row[c] = 0.0
                for j in range(d):
                    atk_axpy(row, &tmp[j, 0], queries[q, j], w)
            c0 = c1
