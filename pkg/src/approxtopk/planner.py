"""Parameter selection: the cheapest (local_k, num_buckets) meeting a recall target."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import MAX_N, AlgoParams
from .recall import RecallEstimate, exact_expected_recall, mc_expected_recall_adaptive

# above this, sampling noise makes the pass/fail decision unreliable
RELIABLE_TARGET_LIMIT = 0.995
# exact re-validation when the tail sum has at most this many terms
EXACT_REVALIDATION_LIMIT = 10_000

DEFAULT_K_FRACTIONS = (0.001, 0.005, 0.01, 0.02, 0.05, 0.10, 0.25)
DEFAULT_N_VALUES = tuple(2**e for e in range(8, 33))


class InfeasibleError(RuntimeError):
    """No legal configuration meets the recall target."""


@dataclass(frozen=True)
class PlanRequest:
    n: int
    k: int
    recall_target: float
    allowed_local_k: tuple[int, ...] = (1, 2, 3, 4)
    lane_multiple: int = 128

    def __post_init__(self):
        if not 0.0 < self.recall_target < 1.0:
            raise ValueError(f"recall_target must lie in (0, 1), got {self.recall_target}")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        ks = tuple(self.allowed_local_k)
        if not ks or any(k < 1 for k in ks) or list(ks) != sorted(set(ks)):
            raise ValueError(f"allowed_local_k must be non-empty, positive and ascending: {ks}")
        object.__setattr__(self, "allowed_local_k", ks)
        if self.lane_multiple < 1:
            raise ValueError("lane_multiple must be >= 1")


@dataclass(frozen=True)
class Candidate:
    local_k: int
    num_buckets: int
    estimated_recall: RecallEstimate

    @property
    def num_elements(self) -> int:
        return self.local_k * self.num_buckets


@dataclass(frozen=True)
class PlanResult:
    local_k: int
    num_buckets: int
    num_elements: int
    estimated_recall: RecallEstimate
    candidates: tuple[Candidate, ...] = field(default=(), compare=False)

    def params(self, n: int, k: int, lane_multiple: int = 128) -> AlgoParams:
        return AlgoParams(n, self.num_buckets, self.local_k, k, lane_multiple)


def legal_bucket_counts(n: int, lane_multiple: int = 128) -> list[int]:
    """Divisors of ``n`` that are multiples of ``lane_multiple``, largest first."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n % lane_multiple:
        return []
    m = n // lane_multiple
    small = [d for d in range(1, math.isqrt(m) + 1) if m % d == 0]
    divisors = set(small) | {m // d for d in small}
    return sorted((lane_multiple * d for d in divisors), reverse=True)


def _estimate(params: AlgoParams, method: str, seed: int) -> RecallEstimate:
    if method == "exact":
        return exact_expected_recall(params)
    if method == "mc":
        return mc_expected_recall_adaptive(
            params, seed=(seed, params.local_k, params.num_buckets)
        )
    raise ValueError(f"method must be 'mc' or 'exact', got {method!r}")


def _exact_is_cheap(params: AlgoParams) -> bool:
    return min(params.global_k, params.bucket_size) <= EXACT_REVALIDATION_LIMIT


def select_parameters(req: PlanRequest, *, seed: int = 0, method: str = "mc") -> PlanResult:
    """Sweep legal configurations and return the one with the fewest stage-1 outputs.

    For each ``local_k`` (ascending) bucket counts are tried from largest to
    smallest; the sweep for that ``local_k`` stops at the first configuration
    that has too few outputs or misses the target. Ties on output count go to
    the smaller ``local_k``. With ``method="mc"`` the winner is re-checked
    with the exact expression when that is cheap.
    """
    if req.recall_target >= RELIABLE_TARGET_LIMIT:
        warnings.warn(
            f"recall_target of {req.recall_target} too high for reliable selection of algorithm.",
            RuntimeWarning,
            stacklevel=2,
        )
    buckets = legal_bucket_counts(req.n, req.lane_multiple)
    passing: list[Candidate] = []
    for local_k in req.allowed_local_k:
        for num_buckets in buckets:
            if num_buckets * local_k < req.k:
                break
            params = AlgoParams(req.n, num_buckets, local_k, req.k, req.lane_multiple)
            est = _estimate(params, method, seed)
            if est.value < req.recall_target:
                break
            passing.append(Candidate(local_k, num_buckets, est))

    # stable sort keeps ascending local_k among equal element counts
    ranked = sorted(passing, key=lambda c: c.num_elements)
    for cand in ranked:
        est = cand.estimated_recall
        if method == "mc":
            params = AlgoParams(req.n, cand.num_buckets, cand.local_k, req.k, req.lane_multiple)
            if _exact_is_cheap(params):
                est = exact_expected_recall(params)
                if est.value < req.recall_target:
                    continue
        return PlanResult(
            cand.local_k, cand.num_buckets, cand.num_elements, est, tuple(passing)
        )
    raise InfeasibleError(
        f"no configuration for n={req.n}, k={req.k} reaches recall {req.recall_target} "
        f"with local_k in {list(req.allowed_local_k)} and lane multiple {req.lane_multiple}"
    )


def lane_compatible_n(n: int, lane_multiple: int = 128) -> int:
    """Largest multiple of ``lane_multiple`` that is <= ``n`` and fits 32-bit indices."""
    n = min(n, MAX_N)
    return n - n % lane_multiple


@dataclass
class ReductionGrid:
    k_fractions: list[float]
    n_values: list[int]
    k_values: np.ndarray
    baseline_elements: np.ndarray
    best_elements: np.ndarray
    best_local_k: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.baseline_elements / self.best_elements

    def median_ratio(self) -> float:
        r = self.ratios
        return float(np.nanmedian(r))


def _best_elements(n, k, target, local_ks, lane, method, seed):
    try:
        res = select_parameters(
            PlanRequest(n, k, target, tuple(local_ks), lane), seed=seed, method=method
        )
    except InfeasibleError:
        return math.nan, 0
    return res.num_elements, res.local_k


def reduction_factor_grid(
    k_fractions=DEFAULT_K_FRACTIONS,
    n_values=DEFAULT_N_VALUES,
    recall_target: float = 0.99,
    kprime_max: int = 4,
    *,
    lane_multiple: int = 128,
    method: str = "exact",
    seed: int = 0,
) -> ReductionGrid:
    """Output-size reduction of ``2 <= local_k <= kprime_max`` over ``local_k = 1``.

    Cell ``[i, j]`` compares the best legal configurations for
    ``k = round(k_fractions[i] * n)`` and ``n_values[j]`` (rounded down to a
    lane multiple). Cells with no feasible configuration are NaN; ratios below
    one happen when lane rounding forces extra buckets.
    """
    if kprime_max < 2:
        raise ValueError("kprime_max must be >= 2")
    if any(not 0.0 < f < 1.0 for f in k_fractions):
        raise ValueError("k fractions must lie in (0, 1)")
    if any(n < 1 for n in n_values):
        raise ValueError("n values must be positive")
    ns = [lane_compatible_n(n, lane_multiple) for n in n_values]
    shape = (len(k_fractions), len(ns))
    k_values = np.zeros(shape, dtype=np.int64)
    base = np.full(shape, math.nan)
    best = np.full(shape, math.nan)
    best_k = np.zeros(shape, dtype=np.int64)
    for i, frac in enumerate(k_fractions):
        for j, n in enumerate(ns):
            if n < lane_multiple:
                continue
            k = max(1, round(frac * n))
            k_values[i, j] = k
            cell_seed = seed * 1_000_003 + i * 1009 + j
            base[i, j], _ = _best_elements(n, k, recall_target, [1], lane_multiple, method, cell_seed)
            best[i, j], best_k[i, j] = _best_elements(
                n, k, recall_target, range(2, kprime_max + 1), lane_multiple, method, cell_seed
            )
    return ReductionGrid(list(k_fractions), ns, k_values, base, best, best_k)
