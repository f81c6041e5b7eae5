"""Periodic, mutually asynchronous packet sources.

A flow's period deviates from its nominal value by a fixed drift, expressed
internally in parts per billion so that generation instants stay exact
integers: ``t_n = phase + round(n * nominal * (1 + drift))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import rng

PPB = 1_000_000_000
MAX_PAYLOAD = 127
DEFAULT_DRIFT_PPM = 40


@dataclass(frozen=True)
class Flow:
    id: str
    path: tuple[str, ...]
    nominal_period: int  # microseconds
    drift_ppb: int = 0
    phase: int = 0
    payload_size: int = MAX_PAYLOAD

    def __post_init__(self):
        if len(self.path) < 2:
            raise ValueError(f"flow {self.id}: path needs at least two nodes")
        for a, b in zip(self.path, self.path[1:]):
            if a == b:
                raise ValueError(f"flow {self.id}: repeated consecutive node {a}")
        if self.nominal_period <= 0:
            raise ValueError(f"flow {self.id}: period must be positive")
        if self.nominal_period * (PPB + self.drift_ppb) <= 0:
            raise ValueError(f"flow {self.id}: effective period must be positive")
        if not 0 <= self.phase < self.nominal_period:
            raise ValueError(f"flow {self.id}: phase must lie in [0, period)")
        if not 0 < self.payload_size <= MAX_PAYLOAD:
            raise ValueError(f"flow {self.id}: payload must be 1..{MAX_PAYLOAD} bytes")

    @property
    def source(self):
        return self.path[0]

    @property
    def destination(self):
        return self.path[-1]

    @property
    def drift_ppm(self):
        return Fraction(self.drift_ppb, 1000)

    @property
    def effective_period(self) -> Fraction:
        return Fraction(self.nominal_period * (PPB + self.drift_ppb), PPB)

    @property
    def hops(self):
        return list(zip(self.path, self.path[1:]))

    def generation_time(self, n):
        """Instant of the n-th packet, rounded half-up to the microsecond."""
        return self.phase + (2 * n * self.nominal_period * (PPB + self.drift_ppb) + PPB) // (2 * PPB)


def generation_times(flow: Flow, horizon: int) -> list[int]:
    out = []
    n = 0
    while True:
        t = flow.generation_time(n)
        if t >= horizon:
            return out
        out.append(t)
        n += 1


def generation_index_after(flow: Flow, after: int) -> int:
    """Index of the first generation strictly later than ``after``."""
    if after < flow.phase:
        return 0
    scaled = flow.nominal_period * (PPB + flow.drift_ppb)
    n = max(0, (after - flow.phase) * PPB // scaled)
    while n > 0 and flow.generation_time(n - 1) > after:
        n -= 1
    while flow.generation_time(n) <= after:
        n += 1
    return n


def next_generation(flow: Flow, after: int) -> int:
    return flow.generation_time(generation_index_after(flow, after))


def asynchronous_defaults(seed, flow_index, nominal_period):
    """Seeded (drift_ppb, phase) for a flow that does not pin them."""
    u_drift = rng.uniform(seed, rng.DRIFT, flow_index)
    u_phase = rng.uniform(seed, rng.PHASE, flow_index)
    span = 2 * DEFAULT_DRIFT_PPM * 1000
    drift_ppb = int(u_drift * (span + 1)) - span // 2
    phase = int(u_phase * nominal_period)
    return drift_ppb, phase
