"""Energy accounting and latency statistics.

Energy is kept as integer event counts per node and per bucket; joules only
appear when a report is built, so totals are exact and independent of the
order in which events were charged.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, localcontext
from fractions import Fraction

PERCENTILE_METHOD = "nearest-rank"
PERCENTILES = (("p99", Fraction(99, 100)), ("p99_9", Fraction(999, 1000)), ("p99_99", Fraction(9999, 10000)))

POWER_COLUMNS = ("node", "P_send", "P_rec", "P_listen", "P")
LATENCY_COLUMNS = ("flow", "mu", "sigma", "min", "p99", "p99_9", "p99_99", "max", "n")
ALL = "All"


class Event(enum.Enum):
    SENT = "sent"
    RECEIVED = "received"
    IDLE_LISTENED = "idle_listened"


# bucket indices inside a node's counter list
SEND, SEND_CMD, REC, REC_CMD, LISTEN = range(5)
BUCKETS = ("send", "send_cmd", "rec", "rec_cmd", "listen")


@dataclass(frozen=True)
class EnergyModel:
    """Per-event energies in microjoules (exact rationals)."""

    e_send: Fraction = Fraction("485.7")
    e_rec: Fraction = Fraction("651.0")
    e_listen: Fraction = Fraction("303.3")
    e_send_cmd: Fraction | None = None  # frames carrying a sleep command
    e_rec_cmd: Fraction | None = None

    def __post_init__(self):
        for name in ("e_send", "e_rec", "e_listen", "e_send_cmd", "e_rec_cmd"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")

    def per_bucket(self):
        return (
            self.e_send,
            self.e_send if self.e_send_cmd is None else self.e_send_cmd,
            self.e_rec,
            self.e_rec if self.e_rec_cmd is None else self.e_rec_cmd,
            self.e_listen,
        )


class EnergyAccount:
    def __init__(self, nodes):
        self.counts = {n: [0, 0, 0, 0, 0] for n in nodes}

    def charge(self, node, event: Event, count=1, with_command=False):
        if count < 1:
            raise ValueError("count must be >= 1")
        c = self.counts[node]
        if event is Event.SENT:
            c[SEND_CMD if with_command else SEND] += count
        elif event is Event.RECEIVED:
            c[REC_CMD if with_command else REC] += count
        else:
            c[LISTEN] += count

    def energy(self, node, model: EnergyModel):
        """(send, rec, listen) energy of ``node`` in microjoules."""
        e = model.per_bucket()
        c = self.counts[node]
        return (
            c[SEND] * e[SEND] + c[SEND_CMD] * e[SEND_CMD],
            c[REC] * e[REC] + c[REC_CMD] * e[REC_CMD],
            c[LISTEN] * e[LISTEN],
        )


@dataclass(frozen=True)
class NodePower:
    send: Fraction
    rec: Fraction
    listen: Fraction

    @property
    def total(self):
        return self.send + self.rec + self.listen


@dataclass(frozen=True)
class PowerReport:
    nodes: dict  # node id -> NodePower, microwatts

    @property
    def all(self) -> NodePower:
        return NodePower(
            sum((p.send for p in self.nodes.values()), Fraction(0)),
            sum((p.rec for p in self.nodes.values()), Fraction(0)),
            sum((p.listen for p in self.nodes.values()), Fraction(0)),
        )

    def rows(self):
        yield from self.nodes.items()
        yield ALL, self.all


def power_report(account: EnergyAccount, model: EnergyModel, duration_us) -> PowerReport:
    """Average power per node in microwatts over ``duration_us``.

    A zero-length window yields an all-zero report instead of dividing by zero.
    """
    nodes = {}
    for node in account.counts:
        if duration_us <= 0:
            nodes[node] = NodePower(Fraction(0), Fraction(0), Fraction(0))
            continue
        s, r, l = account.energy(node, model)
        scale = Fraction(1_000_000, duration_us)
        nodes[node] = NodePower(s * scale, r * scale, l * scale)
    return PowerReport(nodes)


@dataclass(frozen=True)
class LatencySummary:
    """End-to-end delay statistics in microseconds; ``n == 0`` marks an empty summary."""

    n: int
    mean: Fraction | None = None
    std: float | None = None
    min: int | None = None
    p99: int | None = None
    p99_9: int | None = None
    p99_99: int | None = None
    max: int | None = None
    total: int = field(default=0, repr=False)  # sum of samples, kept for merging checks

    @property
    def empty(self):
        return self.n == 0

    def order_stats(self):
        return (self.min, self.p99, self.p99_9, self.p99_99, self.max)


def nearest_rank(sorted_samples, p: Fraction):
    n = len(sorted_samples)
    rank = max(1, math.ceil(p * n))
    return sorted_samples[rank - 1]


def latency_summary(samples) -> LatencySummary:
    n = len(samples)
    if n == 0:
        return LatencySummary(0)
    xs = sorted(samples)
    total = sum(xs)
    sq = sum(x * x for x in xs)
    mean = Fraction(total, n)
    var = Fraction(n * sq - total * total, n * n)
    return LatencySummary(
        n=n,
        mean=mean,
        std=math.sqrt(var),
        min=xs[0],
        p99=nearest_rank(xs, PERCENTILES[0][1]),
        p99_9=nearest_rank(xs, PERCENTILES[1][1]),
        p99_99=nearest_rank(xs, PERCENTILES[2][1]),
        max=xs[-1],
        total=total,
    )


# -- presentation ------------------------------------------------------------

def to_decimal(x) -> Decimal:
    if isinstance(x, float):
        return Decimal(repr(x))
    if isinstance(x, Fraction):
        with localcontext() as ctx:
            ctx.prec = 60
            return Decimal(x.numerator) / Decimal(x.denominator)
    return Decimal(x)


def fmt(x, places):
    """Half-up rounding to ``places`` decimals; the only rounding step anywhere."""
    q = Decimal(1).scaleb(-places)
    with localcontext() as ctx:
        ctx.prec = 60
        return str(to_decimal(x).quantize(q, rounding=ROUND_HALF_UP))


def us_to_s(x):
    return None if x is None else Fraction(x) / 1_000_000


def power_csv(report: PowerReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(POWER_COLUMNS)
    for node, p in report.rows():
        w.writerow([node, fmt(p.send, 1), fmt(p.rec, 1), fmt(p.listen, 1), fmt(p.total, 1)])
    return buf.getvalue()


def latency_csv(summaries) -> str:
    """``summaries``: ordered mapping row label -> LatencySummary."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LATENCY_COLUMNS)
    for name, s in summaries.items():
        if s.empty:
            w.writerow([name] + [""] * 7 + [0])
            continue
        values = [us_to_s(s.mean), s.std / 1_000_000] + [us_to_s(v) for v in s.order_stats()]
        w.writerow([name] + [fmt(v, 3) for v in values] + [s.n])
    return buf.getvalue()


def read_power_csv(text):
    """node -> {column: Fraction} from a power CSV."""
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        out[row["node"]] = {k: Fraction(row[k]) for k in POWER_COLUMNS[1:]}
    return out


def read_latency_csv(text):
    """flow row label -> {column: Fraction | None} from a latency CSV (seconds)."""
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        vals = {}
        for k in LATENCY_COLUMNS[1:]:
            v = row[k]
            if k == "n":
                vals[k] = int(v)
            else:
                vals[k] = Fraction(v) if v != "" else None
        out[row["flow"]] = vals
    return out
