"""Roofline-style runtime model: runtime = max(M / beta, O_vpu / gamma, O_mxu / pi).

Profiles carry peak memory bandwidth (bytes/s), vector throughput (ops/s) and
matrix throughput (ops/s). The built-in numbers are public peak figures; the
TPUv5e vector rate is itself a timing-based estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType

MEMORY, VECTOR, MATRIX = "memory", "vector", "matrix"

BYTES_PER_ELEMENT = 4
INDEX_BYTES = 4


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    beta: float
    gamma: float
    pi: float

    def __post_init__(self):
        for field in ("beta", "gamma", "pi"):
            v = getattr(self, field)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{field} must be a positive finite number, got {v!r}")

    def to_text(self) -> str:
        return f"name={self.name}\nbeta={self.beta!r}\ngamma={self.gamma!r}\npi={self.pi!r}\n"

    @classmethod
    def from_text(cls, text: str) -> DeviceProfile:
        """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
        fields = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
            fields[key.strip()] = value.strip()
        missing = {"name", "beta", "gamma", "pi"} - fields.keys()
        if missing:
            raise ValueError(f"profile is missing {sorted(missing)}")
        unknown = fields.keys() - {"name", "beta", "gamma", "pi"}
        if unknown:
            raise ValueError(f"unknown profile keys {sorted(unknown)}")
        return cls(
            fields["name"], float(fields["beta"]), float(fields["gamma"]), float(fields["pi"])
        )


PROFILES = MappingProxyType(
    {
        "a100_pcie": DeviceProfile("a100_pcie", 1.935e12, 19.5e12, 312e12),
        "h100_sxm": DeviceProfile("h100_sxm", 3.35e12, 67e12, 1979e12),
        "tpuv4": DeviceProfile("tpuv4", 1.2e12, 4.3e12, 275e12),
        "tpuv5e": DeviceProfile("tpuv5e", 819e9, 6.14e12, 197e12),
    }
)


def get_profile(name: str) -> DeviceProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown device {name!r}; built-ins are {sorted(PROFILES)}") from None


def profiles_to_text(profiles=None) -> str:
    profiles = PROFILES.values() if profiles is None else profiles
    return "\n".join(p.to_text() for p in profiles)


def profiles_from_text(text: str) -> list[DeviceProfile]:
    """Blank-line separated blocks of ``key=value`` lines."""
    blocks, current = [], []
    for line in text.splitlines():
        if line.strip():
            current.append(line)
        elif current:
            blocks.append("\n".join(current))
            current = []
    if current:
        blocks.append("\n".join(current))
    return [DeviceProfile.from_text(b) for b in blocks]


@dataclass(frozen=True)
class KernelFootprint:
    mem_bytes: float
    vpu_ops: float
    mxu_ops: float

    def __post_init__(self):
        vals = (self.mem_bytes, self.vpu_ops, self.mxu_ops)
        if any(v < 0 for v in vals):
            raise ValueError("footprint entries must be >= 0")
        if not any(vals):
            raise ValueError("footprint must not be all zero")

    def scaled(self, c: float) -> KernelFootprint:
        return KernelFootprint(self.mem_bytes * c, self.vpu_ops * c, self.mxu_ops * c)


def estimate_runtime(fp: KernelFootprint, dev: DeviceProfile) -> tuple[float, tuple[str, ...]]:
    """Predicted seconds and every subsystem whose time equals the maximum."""
    times = {
        MEMORY: fp.mem_bytes / dev.beta,
        VECTOR: fp.vpu_ops / dev.gamma,
        MATRIX: fp.mxu_ops / dev.pi,
    }
    runtime = max(times.values())
    bottleneck = tuple(k for k, t in times.items() if math.isclose(t, runtime, rel_tol=1e-12))
    return runtime, bottleneck


def ridge_vector_ops_per_dot(dev: DeviceProfile, d: int = 128) -> float:
    """Vector ops that fit in the time of one d-dimensional dot product on the matrix unit."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return dev.gamma / (dev.pi / (2 * d))


def ridge_vector_ops_per_4bytes(dev: DeviceProfile) -> float:
    """Vector ops that fit in the time of moving 4 bytes to or from memory."""
    return dev.gamma / (dev.beta / 4)


def stage1_ops_per_element(local_k: int) -> int:
    """1 compare + 2 selects to insert, then 1 compare + 4 selects per bubble step."""
    if local_k < 1:
        raise ValueError("local_k must be >= 1")
    return 5 * local_k - 2


@dataclass(frozen=True)
class Boundedness:
    regime: str
    ops_per_element: int
    ridge: float
    crossover_local_k: int


def stage1_boundedness(local_k: int, dev: DeviceProfile) -> Boundedness:
    """Memory- or vector-bound stage 1 on a float32 stream, plus the largest memory-bound local_k."""
    ops = stage1_ops_per_element(local_k)
    ridge = ridge_vector_ops_per_4bytes(dev)
    regime = MEMORY if ops <= ridge else VECTOR
    return Boundedness(regime, ops, ridge, math.floor((ridge + 2) / 5))


def stage1_footprint(n: int, batch: int, local_k: int, num_buckets: int) -> KernelFootprint:
    """Unfused stage 1: read the input, write values and indices."""
    mem = batch * (n * BYTES_PER_ELEMENT + num_buckets * local_k * (BYTES_PER_ELEMENT + INDEX_BYTES))
    return KernelFootprint(mem, batch * n * stage1_ops_per_element(local_k), 0)


def fused_stage1_footprint(
    queries: int, dims: int, n: int, local_k: int, num_buckets: int, bytes_per_elem: int = 4
) -> KernelFootprint:
    """Matmul with stage 1 applied to score tiles: the score matrix never reaches memory."""
    mem = bytes_per_elem * (queries * dims + dims * n) + queries * num_buckets * local_k * (
        BYTES_PER_ELEMENT + INDEX_BYTES
    )
    return KernelFootprint(
        mem, queries * n * stage1_ops_per_element(local_k), 2 * queries * dims * n
    )


@dataclass(frozen=True)
class Intensity:
    flops_per_byte: float
    upper_bound: float


def mips_arithmetic_intensity(
    b: int, d: int, n: int, bytes_per_elem: int = 4, fused: bool = False
) -> Intensity:
    """FLOPs per byte of a [b, d] x [d, n] matmul.

    The unfused kernel also writes the [b, n] output; the fused one does not.
    ``upper_bound`` is ``(2 / E) * min(b, d)`` unfused. Without the output
    term that bound no longer holds, and the fused kernel reports
    ``(2 / E) * min(b, n)`` instead.
    """
    if min(b, d, n, bytes_per_elem) < 1:
        raise ValueError("all sizes must be positive")
    flops = 2 * b * d * n
    elems = b * d + d * n + (0 if fused else b * n)
    bound = 2 / bytes_per_elem * (min(b, n) if fused else min(b, d))
    return Intensity(flops / (bytes_per_elem * elems), bound)
