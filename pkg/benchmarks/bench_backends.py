"""Compiled kernels versus the numpy fallback.

    python benchmarks/bench_backends.py [--repeats 5] [--format csv]

Times stage 1 (the streaming bucket update) for several K' and the float32
score kernel used by MIPS, on every available backend, and checks that the
backends agree bit for bit while doing so.
"""

import argparse
import sys
import time

import numpy as np

from approxtopk import _backend
from approxtopk.core import AlgoParams, stage1_partial_reduce
from approxtopk.dataset_io import synth_gaussian, write_csv


def median_time(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return float(np.median(times))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--n", type=int, default=262144)
    ap.add_argument("--format", choices=("table", "csv"), default="table")
    args = ap.parse_args(argv)

    backends = sorted(_backend.BACKENDS)
    x = np.random.default_rng(0).standard_normal((args.batch, args.n), dtype=np.float32)
    records = []
    for kp, b in ((1, 8192), (2, 2048), (4, 512), (8, 512), (16, 128)):
        p = AlgoParams(args.n, b, kp, 1024)
        outs = {}
        for name in backends:
            outs[name] = stage1_partial_reduce(x, p, backend=name)
            t = median_time(lambda: stage1_partial_reduce(x, p, backend=name), args.repeats)
            records.append((f"stage1;kprime={kp};b={b};backend={name}", "median_s", t, None))
        ref = outs[backends[0]]
        for o in outs.values():
            assert np.array_equal(o.values.view(np.uint32), ref.values.view(np.uint32))
            assert np.array_equal(o.indices, ref.indices)

    q = synth_gaussian(64, 128, 1).data
    db = synth_gaussian(16384, 128, 2).data
    outs = {}
    for name in backends:
        kern = _backend.get(name)
        out = np.empty((64, 16384), np.float32)
        t = median_time(lambda: kern.dot_block(q, db, 0, 16384, out), args.repeats)
        outs[name] = out.copy()
        records.append((f"dot_block;b=64;d=128;n=16384;backend={name}", "median_s", t, None))
    ref = outs[backends[0]]
    assert all(np.array_equal(o.view(np.uint32), ref.view(np.uint32)) for o in outs.values())

    if args.format == "csv":
        sys.stdout.write(write_csv(records))
    else:
        for cfg, _, t, _ in records:
            print(f"{cfg:<50} {t * 1e3:9.2f} ms")


if __name__ == "__main__":
    main()
