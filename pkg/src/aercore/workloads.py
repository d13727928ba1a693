"""Seeded spike-event generators.

Four traffic patterns drive the arbitration models: single sparse requests
injected after the fabric drains, full-frame bursts, Poisson traffic, and
bursts confined to one neuron cluster.

All randomness flows through :class:`SplitMix64`, a fixed 64-bit generator
chosen so traces are reproducible bit-for-bit across platforms and can be
re-derived by any other implementation from the algorithm alone.  Test
vectors are frozen in the test suite and listed in the README.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

from .kernel import SUBTICKS_PER_UNIT

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """SplitMix64 pseudo-random generator (Steele, Lea & Flood's mixer).

    Derived draws are specified exactly so other implementations can match
    them:

    * ``uniform_int(n)`` = ``(next_u64() * n) >> 64`` (multiply-high bound;
      bias below n * 2**-64, negligible and fully deterministic),
    * ``random()`` = ``(next_u64() >> 11) * 2**-53``,
    * ``expovariate(rate)`` = ``-log(1 - random()) / rate``.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def uniform_int(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return (self.next_u64() * n) >> 64

    def random(self) -> float:
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def expovariate(self, rate: float) -> float:
        return -math.log(1.0 - self.random()) / rate

    def coin(self) -> int:
        return self.next_u64() >> 63

    def split(self, salt: int) -> "SplitMix64":
        """Derive an independent stream (used to seed per-instance arbiters)."""
        child = SplitMix64(self.state ^ (salt * _GAMMA) & _MASK64)
        child.next_u64()
        return child


# -- workload variants -----------------------------------------------------


@dataclass(frozen=True)
class Sparse:
    """One uniform-random neuron per trial, each injected after full drain.

    The generated ``t`` column is the trial index; the simulator injects
    trial k only once trial k-1 has fully drained.
    """

    trials: int
    seed: int = 0


@dataclass(frozen=True)
class Burst:
    """Every neuron fires once, at a uniform time in [0, window] subticks."""

    window: int = 0
    seed: int = 0


@dataclass(frozen=True)
class Poisson:
    """Exponential inter-arrival times (rate = events per unit), uniform ids."""

    rate: float
    duration: int  # units
    seed: int = 0


@dataclass(frozen=True)
class LocalizedBurst:
    """A burst confined to one cluster of ``size`` consecutive neurons."""

    cluster_id: int
    size: int
    seed: int = 0


Workload = Union[Sparse, Burst, Poisson, LocalizedBurst]


def generate(workload: Workload, n: int) -> list[tuple[int, int]]:
    """Produce the time-ordered (neuron_id, t_subticks) list for ``workload``.

    Deterministic for a fixed seed; ids are always in [0, n); ties in time
    are broken by neuron id.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = SplitMix64(workload.seed)
    if isinstance(workload, Sparse):
        return [(rng.uniform_int(n), k) for k in range(workload.trials)]
    if isinstance(workload, Burst):
        if workload.window < 0:
            raise ValueError("window must be >= 0")
        events = [(i, rng.uniform_int(workload.window + 1)) for i in range(n)]
        events.sort(key=lambda e: (e[1], e[0]))
        return [(i, t) for i, t in events]
    if isinstance(workload, Poisson):
        if workload.rate <= 0:
            raise ValueError("rate must be > 0")
        horizon = workload.duration * SUBTICKS_PER_UNIT
        events = []
        t = 0.0
        while True:
            t += rng.expovariate(workload.rate) * SUBTICKS_PER_UNIT
            ti = int(t)
            if ti > horizon:
                break
            events.append((rng.uniform_int(n), ti))
        return events
    if isinstance(workload, LocalizedBurst):
        base = workload.cluster_id * workload.size
        if workload.size < 1 or base < 0 or base + workload.size > n:
            raise ValueError(f"cluster {workload.cluster_id} of size {workload.size} invalid for n={n}")
        return [(base + i, 0) for i in range(workload.size)]
    raise TypeError(f"unknown workload {workload!r}")


_VARIANT_NAMES = {
    "sparse": Sparse,
    "burst": Burst,
    "poisson": Poisson,
    "localized-burst": LocalizedBurst,
}


def workload_to_json(workload: Workload) -> str:
    name = {Sparse: "sparse", Burst: "burst", Poisson: "poisson", LocalizedBurst: "localized-burst"}[type(workload)]
    payload = {"variant": name, **workload.__dict__}
    return json.dumps(payload, sort_keys=True)


def workload_from_json(text: str) -> Workload:
    payload = json.loads(text)
    variant = payload.pop("variant", None)
    cls = _VARIANT_NAMES.get(variant)
    if cls is None:
        raise ValueError(f"unknown workload variant {variant!r}; expected one of {sorted(_VARIANT_NAMES)}")
    try:
        return cls(**payload)
    except TypeError as exc:
        raise ValueError(f"bad fields for workload variant {variant!r}: {exc}") from exc
