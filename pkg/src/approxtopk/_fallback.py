"""Pure numpy implementation of the hot loops.

Same signatures and bit-for-bit the same results as the compiled
``approxtopk._kernels`` module. Vectorised along the batch and bucket axes;
the loop runs over contiguous runs of buckets, like the SIMD layout.
"""

import numpy as np

_TILE = 4096


def update_state(values, indices, block, col_offset, num_buckets, local_k):
    """Stream ``block`` (columns ``col_offset...``) into the bucket state in place."""
    rows, cols = block.shape
    if values.shape[0] != rows or indices.shape[0] != rows:
        raise ValueError("state and block disagree on batch size")
    width = num_buckets * local_k
    if values.shape[1] != width or indices.shape[1] != width:
        raise ValueError("state width must be num_buckets * local_k")
    if rows == 0 or cols == 0:
        return

    last = (local_k - 1) * num_buckets
    c = 0
    g = col_offset
    while c < cols:
        s = g % num_buckets
        length = min(num_buckets - s, cols - c)
        x = block[:, c:c + length]
        gidx = np.arange(g, g + length, dtype=np.uint32)

        v_last = values[:, last + s:last + s + length]
        i_last = indices[:, last + s:last + s + length]
        pred = x >= v_last
        np.copyto(v_last, x, where=pred)
        np.copyto(i_last, np.broadcast_to(gidx, pred.shape), where=pred)

        for k in range(local_k - 1, 0, -1):
            lo_v = values[:, k * num_buckets + s:k * num_buckets + s + length]
            hi_v = values[:, (k - 1) * num_buckets + s:(k - 1) * num_buckets + s + length]
            lo_i = indices[:, k * num_buckets + s:k * num_buckets + s + length]
            hi_i = indices[:, (k - 1) * num_buckets + s:(k - 1) * num_buckets + s + length]
            pred = x > hi_v
            a = lo_v.copy()
            np.copyto(lo_v, hi_v, where=pred)
            np.copyto(hi_v, a, where=pred)
            ia = lo_i.copy()
            np.copyto(lo_i, hi_i, where=pred)
            np.copyto(hi_i, ia, where=pred)

        c += length
        g += length


def dot_block(queries, database, start, stop, out):
    """out[q, c] = sum_j queries[q, j] * database[start + c, j], j ascending, float32."""
    nq, d = queries.shape
    if database.shape[1] != d:
        raise ValueError("dimension mismatch")
    if out.shape != (nq, stop - start):
        raise ValueError("output buffer has the wrong shape")
    prod = np.empty((nq, min(_TILE, max(stop - start, 0))), dtype=np.float32)
    for c0 in range(start, stop, _TILE):
        c1 = min(c0 + _TILE, stop)
        w = c1 - c0
        tile = np.ascontiguousarray(database[c0:c1].T)
        acc = out[:, c0 - start:c1 - start]
        acc[...] = 0.0
        p = prod[:, :w]
        for j in range(d):
            # separate multiply and add: no fused rounding
            np.multiply(queries[:, j:j + 1], tile[j], out=p)
            acc += p
