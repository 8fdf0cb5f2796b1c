"""Expected recall of stage 1 under uniformly random placement of the top-k.

The number of true top-k elements landing in one bucket follows
Hypergeometric(n, k, n / num_buckets). Every element beyond ``local_k`` in a
bucket is lost, so::

    E[recall] = 1 - (B / K) * sum_{r > K'} (r - K') * P(X = r)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import AlgoParams, ParameterError

METHODS = ("exact", "monte_carlo", "bound_improved", "bound_original", "bound_quartic")

# Chernoff-style tail cut: mass outside the window is below exp(-60).
_TAIL_EXPONENT = 60.0

ADAPTIVE_START_TRIALS = 4096
ADAPTIVE_TOLERANCE = 0.005


@dataclass(frozen=True)
class RecallEstimate:
    value: float
    method: str
    std_error: float | None = None
    trials: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"recall {self.value} outside [0, 1]")
        if self.std_error is not None and not self.std_error >= 0:
            raise ValueError(f"negative std_error {self.std_error}")


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


def hypergeom_window(population: int, successes: int, draws: int) -> tuple[int, np.ndarray]:
    """Normalised pmf of Hypergeometric(population, successes, draws) on its bulk.

    Returns ``(r0, pmf)`` with ``pmf[i] = P(X = r0 + i)``. Terms are built from
    the ratio P(r+1)/P(r) in log space, which stays accurate when the
    population is in the billions; the window drops only tails with mass below
    ``exp(-60)``.
    """
    N, K, n = population, successes, draws
    if not (0 <= K <= N and 0 <= n <= N):
        raise ValueError(f"invalid hypergeometric parameters N={N}, K={K}, n={n}")
    lo = max(0, n - (N - K))
    hi = min(K, n)
    mean = n * K / N if N else 0.0
    a, b = lo, hi
    spread = math.sqrt(2.0 * _TAIL_EXPONENT * mean)
    if mean - spread > lo:
        a = max(lo, int(math.floor(mean - spread)))
    up = mean + _TAIL_EXPONENT / 3.0 + math.sqrt((_TAIL_EXPONENT / 3.0) ** 2 + 2.0 * _TAIL_EXPONENT * mean)
    b = min(hi, int(math.ceil(up)) + 1)
    if b < a:
        a, b = lo, hi

    r = np.arange(a, b, dtype=np.float64)
    log_ratio = (
        np.log(K - r) + np.log(n - r) - np.log(r + 1.0) - np.log(N - K - n + r + 1.0)
    )
    logw = np.concatenate([[0.0], np.cumsum(log_ratio)])
    w = np.exp(logw - logw.max())
    return a, w / math.fsum(w)


def hypergeom_pmf_exact(population: int, successes: int, draws: int, r: int) -> Fraction:
    """P(X = r) as an exact fraction (small cases and tests)."""
    num = math.comb(successes, r) * math.comb(population - successes, draws - r)
    return Fraction(num, math.comb(population, draws))


def expected_excess(params: AlgoParams) -> float:
    """E[max(0, X - local_k)] for one bucket."""
    return _excess(params.n, params.global_k, params.bucket_size, params.local_k)


def exact_expected_recall(params: AlgoParams) -> RecallEstimate:
    """Closed-form expected recall (hypergeometric tail sum)."""
    _check_k(params)
    excess = expected_excess(params)
    if excess == 0.0:
        return RecallEstimate(1.0, "exact")
    value = 1.0 - params.num_buckets * excess / params.global_k
    return RecallEstimate(_clamp(value), "exact")


def _excess(population: int, successes: int, draws: int, local_k: int) -> float:
    if local_k >= min(successes, draws):
        return 0.0
    r0, pmf = hypergeom_window(population, successes, draws)
    r = r0 + np.arange(pmf.size)
    mask = r > local_k
    return math.fsum((r[mask] - local_k) * pmf[mask])


def exact_expected_recall_uneven(
    n: int, num_buckets: int, local_k: int, global_k: int
) -> RecallEstimate:
    """Exact expected recall when ``num_buckets`` need not divide ``n``.

    Strided buckets then hold ``ceil(n/B)`` or ``floor(n/B)`` elements; each
    size has its own hypergeometric marginal. Equals
    :func:`exact_expected_recall` whenever ``B | n``.
    """
    if min(n, num_buckets, local_k, global_k) < 1:
        raise ParameterError("all sizes must be >= 1")
    if global_k > n or num_buckets > n:
        raise ParameterError("global_k and num_buckets must not exceed n")
    if num_buckets * local_k < global_k:
        raise ParameterError("num_buckets * local_k < global_k")
    q, extra = divmod(n, num_buckets)
    total = (num_buckets - extra) * _excess(n, global_k, q, local_k)
    if extra:
        total += extra * _excess(n, global_k, q + 1, local_k)
    if total == 0.0:
        return RecallEstimate(1.0, "exact")
    return RecallEstimate(_clamp(1.0 - total / global_k), "exact")


def exact_expected_recall_fraction(params: AlgoParams) -> Fraction:
    """The same expression in exact rational arithmetic. Cost grows with min(K, N/B)."""
    _check_k(params)
    N, K, n, kp = params.n, params.global_k, params.bucket_size, params.local_k
    total = sum(
        ((r - kp) * hypergeom_pmf_exact(N, K, n, r) for r in range(kp + 1, min(K, n) + 1)),
        Fraction(0),
    )
    return 1 - Fraction(params.num_buckets, K) * total


def _check_k(params: AlgoParams):
    if params.global_k > params.n:
        raise ParameterError("global_k exceeds n")


class HypergeometricSampler:
    """Inverse-CDF sampler over :func:`hypergeom_window`, driven by a numpy Generator."""

    def __init__(self, population: int, successes: int, draws: int):
        self.r0, pmf = hypergeom_window(population, successes, draws)
        self.cdf = np.cumsum(pmf)
        self.cdf[-1] = 1.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        pos = np.searchsorted(self.cdf, u, side="right")
        np.minimum(pos, self.cdf.size - 1, out=pos)
        return self.r0 + pos


def _mc_recall_samples(params: AlgoParams, sampler, rng, trials):
    x = sampler.sample(rng, trials)
    excess = np.maximum(x - params.local_k, 0)
    return 1.0 - params.num_buckets * excess / params.global_k


def _summarise(samples: np.ndarray) -> RecallEstimate:
    trials = samples.size
    mean = float(np.mean(samples))
    if trials > 1:
        err = float(np.std(samples, ddof=1) / math.sqrt(trials))
    else:
        err = math.inf
    # a sample can be negative (one bucket with many collisions); the mean of
    # recall cannot be
    return RecallEstimate(_clamp(mean), "monte_carlo", err, trials)


def mc_expected_recall(params: AlgoParams, trials: int, seed: int = 0) -> RecallEstimate:
    """Monte-Carlo estimate: mean of ``1 - B * max(0, X - K') / K`` over samples of X."""
    _check_k(params)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    sampler = HypergeometricSampler(params.n, params.global_k, params.bucket_size)
    return _summarise(_mc_recall_samples(params, sampler, rng, trials))


def mc_expected_recall_adaptive(
    params: AlgoParams,
    seed: int = 0,
    *,
    start_trials: int = ADAPTIVE_START_TRIALS,
    tolerance: float = ADAPTIVE_TOLERANCE,
) -> RecallEstimate:
    """Double the trial count from ``start_trials`` until ``3 * std_error <= tolerance``."""
    _check_k(params)
    rng = np.random.default_rng(seed)
    sampler = HypergeometricSampler(params.n, params.global_k, params.bucket_size)
    trials = start_trials
    est = _summarise(_mc_recall_samples(params, sampler, rng, trials))
    while 3 * est.std_error > tolerance:
        trials *= 2
        est = _summarise(_mc_recall_samples(params, sampler, rng, trials))
    return est


def _require_single(params: AlgoParams):
    if params.local_k != 1:
        raise ParameterError(f"closed-form bounds need local_k == 1, got {params.local_k}")


def recall_bound_improved(params: AlgoParams) -> RecallEstimate:
    """Lower bound ``1 - (K/2)(1/B - 1/N)`` for ``local_k == 1``."""
    _require_single(params)
    K, B, N = params.global_k, params.num_buckets, params.n
    return RecallEstimate(_clamp(1.0 - K / 2.0 * (1.0 / B - 1.0 / N)), "bound_improved")


def recall_bound_quartic(params: AlgoParams) -> RecallEstimate:
    """``local_k == 1`` bound with ``(1 - K/N)^(N/B)`` expanded through the quartic term.

    The even-order truncation of the alternating binomial series is an upper
    bound on the power, so this remains a lower bound on recall.
    """
    _require_single(params)
    K, B, N = params.global_k, params.num_buckets, params.n
    n = N // B
    p = K / N
    # E[max(0, X-1)] = K/B - 1 + P(X=0), with P(X=0) <= (1-p)^n
    #               <= C(n,2)p^2 - C(n,3)p^3 + C(n,4)p^4
    c2 = n * (n - 1) / 2.0
    c3 = c2 * (n - 2) / 3.0
    c4 = c3 * (n - 3) / 4.0
    excess = c2 * p**2 - c3 * p**3 + c4 * p**4
    return RecallEstimate(_clamp(1.0 - B / K * excess), "bound_quartic")


def recall_bound_original(params: AlgoParams) -> RecallEstimate:
    """Birthday-problem estimate ``(1 - 1/B)^(K-1)`` behind :func:`buckets_original`."""
    _require_single(params)
    K, B = params.global_k, params.num_buckets
    value = math.exp((K - 1) * math.log1p(-1.0 / B)) if B > 1 else (1.0 if K == 1 else 0.0)
    return RecallEstimate(_clamp(value), "bound_original")


def _check_target(recall_target: float):
    if not 0.0 < recall_target < 1.0:
        raise ValueError(f"recall_target must lie in (0, 1), got {recall_target}")


def buckets_improved(k: int, n: int, recall_target: float) -> int:
    """Bucket count ``ceil(K / (2 (1 - r + K/2N)))`` meeting ``recall_target`` with one survivor per bucket."""
    _check_target(recall_target)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    r = Fraction(str(recall_target))
    b = Fraction(k) / (2 * (1 - r + Fraction(k, 2 * n)))
    return max(1, math.ceil(b))


def buckets_original(k: int, recall_target: float, *, approximate: bool = False) -> int:
    """Original bucket count ``ceil(1 / (1 - r^(1/(K-1))))``.

    ``approximate=True`` gives the linearised ``ceil((K - 1) / (1 - r))``.
    """
    _check_target(recall_target)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if approximate:
        r = Fraction(str(recall_target))
        return math.ceil((k - 1) / (1 - r))
    return math.ceil(-1.0 / math.expm1(math.log(recall_target) / (k - 1)))
