"""Empirical recall of the full pipeline on random permutations of ``1..N``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AlgoParams, approx_top_k, exact_top_k, measure_recall
from .dataset_io import synth_distinct
from .recall import RecallEstimate, exact_expected_recall, mc_expected_recall

DEFAULT_RUNS = 1024
DEFAULT_MC_TRIALS = 262_144


@dataclass(frozen=True)
class SimulationResult:
    params: AlgoParams
    runs: int
    mean: float
    std: float
    exact: RecallEstimate
    mc: RecallEstimate | None

    @property
    def std_error(self) -> float:
        return self.std / math.sqrt(self.runs) if self.runs > 1 else math.inf


def simulate(
    params_list,
    runs: int = DEFAULT_RUNS,
    seed: int = 0,
    *,
    chunk_rows: int = 64,
    mc_trials: int | None = DEFAULT_MC_TRIALS,
    backend=None,
    threads=None,
) -> list[SimulationResult]:
    """Run every config on the same ``runs`` seeded permutations.

    All configs must share ``n`` and ``global_k``. Row ``i`` is
    ``synth_distinct`` row ``i`` for ``seed``, so results do not depend on
    ``chunk_rows``.
    """
    params_list = list(params_list)
    if not params_list:
        raise ValueError("no configurations given")
    n, k = params_list[0].n, params_list[0].global_k
    if any(p.n != n or p.global_k != k for p in params_list):
        raise ValueError("all configurations must share n and global_k")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    recalls = np.empty((len(params_list), runs))
    for a in range(0, runs, chunk_rows):
        b = min(a + chunk_rows, runs)
        rows = synth_distinct(b - a, n, seed, first_row=a).data
        truth = exact_top_k(rows, k)
        for i, p in enumerate(params_list):
            got = approx_top_k(rows, p, backend=backend, threads=threads)
            recalls[i, a:b] = measure_recall(got, truth)
    out = []
    for i, p in enumerate(params_list):
        r = recalls[i]
        std = float(np.std(r, ddof=1)) if runs > 1 else 0.0
        mc = mc_expected_recall(p, mc_trials, seed=(seed, i)) if mc_trials else None
        out.append(SimulationResult(p, runs, float(np.mean(r)), std, exact_expected_recall(p), mc))
    return out
