"""Proactive reduction of idle listening.

Three techniques share one mechanism: a sleep command carried in a data frame
lets the transmitter of a link switch the receiver off for upcoming cell
instances that would otherwise be idle-listened.

* PRIL-F (first hop): the source knows its own next generation instant and
  disables exactly the cell instances before it.
* PRIL-M (relay hops): the receiver sleeps until ``T_min`` after the arrival
  of the fastest flow's packet at the transmitter, minus the time it took to
  drain the queue.
* PRIL-ML: the same budget is cut into ``r`` windows of ``ceil(budget / r)``
  slots, with one enabled cell instance between consecutive windows, so that
  queued packets of slower flows can leave ``r`` times as often.

PRIL-M is PRIL-ML with ``r = 1``; both run through the same code.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

from .schedule import CellInstances


class Technique(str, enum.Enum):
    NONE = "none"
    PRIL_F = "pril-f"
    PRIL_M = "pril-m"
    PRIL_ML = "pril-ml"


MAX_R = 255


@dataclass(frozen=True)
class PrilConfig:
    technique: Technique = Technique.NONE
    r: int = 1

    def __post_init__(self):
        if not 1 <= self.r <= MAX_R:
            raise ValueError(f"r must be in [1, {MAX_R}], got {self.r}")
        if self.technique is Technique.PRIL_M and self.r != 1:
            raise ValueError("pril-m implies r = 1")

    @property
    def multi_hop(self):
        return self.technique in (Technique.PRIL_M, Technique.PRIL_ML)


class CommandKind(enum.IntEnum):
    FIRST_HOP_COUNT = 1
    MULTI_HOP_DURATION = 2


_WIRE = struct.Struct("<BIB")


@dataclass(frozen=True)
class SleepCommand:
    """A sleep request piggybacked on a data frame.

    ``value`` is a count of cell instances for FIRST_HOP_COUNT and the total
    OFF budget in slots for MULTI_HOP_DURATION; ``r`` is the number of windows
    the budget is split into.
    """

    kind: CommandKind
    value: int
    r: int = 1

    @property
    def window(self):
        """Nominal window length in slots (multi-hop commands)."""
        return -(-self.value // self.r)

    def valid(self):
        if self.value < 0:
            return False
        if self.kind is CommandKind.MULTI_HOP_DURATION:
            return self.value >= 1 and 1 <= self.r <= MAX_R
        return True

    def encode(self) -> bytes:
        r = self.r if self.kind is CommandKind.MULTI_HOP_DURATION else 0
        return _WIRE.pack(int(self.kind), self.value, r)

    @classmethod
    def decode(cls, data: bytes) -> "SleepCommand":
        kind, value, r = _WIRE.unpack(data)
        kind = CommandKind(kind)
        if kind is CommandKind.FIRST_HOP_COUNT:
            r = 1
        return cls(kind, value, r)


def t_min(flows):
    """Fastest nominal period among ``flows`` and the id of the flow achieving it.

    Ties go to the smallest flow id.  Returns None for an empty set, which
    disables PRIL on the link.
    """
    best = min(((f.nominal_period, f.id) for f in flows), default=None)
    return best


def t_act(t_min_us, r, slot_duration):
    """ceil(T_min / r) rounded up to a whole number of slots, in microseconds."""
    if r < 1:
        raise ValueError("r must be >= 1")
    if t_min_us <= 0:
        raise ValueError("T_min must be positive")
    # nested ceilings collapse: ceil(ceil(T/r)/d) == ceil(T/(r*d))
    return -(-t_min_us // (r * slot_duration)) * slot_duration


def first_hop_sleep_count(instances: CellInstances, asn, next_generation_us, slot_duration):
    """Cell instances after ``asn`` that precede the next packet's first chance to go."""
    first_usable = -(-next_generation_us // slot_duration)
    return instances.count(asn + 1, first_usable)


def multi_hop_budget(anchor_us, t_min_us, asn, slot_duration):
    """Whole slots left, counted from the end of slot ``asn``, before ``anchor + T_min``."""
    return (anchor_us + t_min_us - (asn + 1) * slot_duration) // slot_duration


@dataclass
class ReceiverState:
    """Receiver side of one link, in ASN units.

    The receiver is OFF for a cell instance at ``asn`` when ``skip`` > 0 (that
    instance is consumed) or when ``asn < off_until``.  While ``remaining`` > 0
    the first enabled instance is a wake slot after which the next window starts.
    """

    off_until: int = 0
    skip: int = 0
    remaining: int = 0
    window: int = 0
    budget_end: int = 0
    ignored: int = 0

    def is_off(self, asn):
        return self.skip > 0 or asn < self.off_until

    def wake(self, asn):
        """Bookkeeping after an enabled instance at ``asn`` with no new command."""
        if self.remaining:
            end = asn + 1
            if end >= self.budget_end:
                self.remaining = 0
            else:
                self.off_until = min(end + self.window, self.budget_end)
                self.remaining -= 1

    def cell_passed(self, asn):
        """Advance the state over the instance at ``asn`` (no command received)."""
        if self.skip:
            self.skip -= 1
        elif asn >= self.off_until:
            self.wake(asn)

    def apply_sleep_command(self, cmd: SleepCommand, now_asn) -> bool:
        """Install ``cmd`` received in the slot ending at ``now_asn``; a new command supersedes the old one."""
        if not cmd.valid():
            # the frame still used this instance, same as one without a command
            self.ignored += 1
            self.cell_passed(now_asn - 1)
            return False
        if cmd.kind is CommandKind.FIRST_HOP_COUNT:
            self.skip = cmd.value
            self.off_until = 0
            self.remaining = 0
            return True
        self.skip = 0
        self.window = cmd.window
        self.budget_end = now_asn + cmd.value
        self.off_until = min(now_asn + self.window, self.budget_end)
        self.remaining = cmd.r - 1
        return True


@dataclass
class PrilLinkState:
    """Transmitter-side PRIL instance of one outgoing link."""

    link: tuple[str, str]
    config: PrilConfig = field(default_factory=PrilConfig)
    t_min: int = 0
    tau_star: str | None = None
    first_hop_flow: str | None = None
    anchor: int | None = None  # arrival time of the latest fastest-flow packet
    commanded_anchor: int | None = None

    @property
    def technique(self):
        return self.config.technique

    @property
    def r(self):
        return self.config.r

    def t_act(self, slot_duration):
        return t_act(self.t_min, self.r, slot_duration)


def multi_hop_sleep_command(state: PrilLinkState, receiver: ReceiverState, asn, queue_len, slot_duration):
    """Command to attach to the frame sent at ``asn``, or None.

    Only the last frame of the queue carries a command.  The budget runs from
    the end of this slot to ``anchor + T_min``, so the drain time is already
    subtracted.  A repeated command for the same anchor (sent in a wake slot)
    covers only the windows the receiver has not started yet.
    """
    if queue_len != 1 or not state.config.multi_hop or state.anchor is None:
        return None
    budget = multi_hop_budget(state.anchor, state.t_min, asn, slot_duration)
    if budget < 1:
        return None
    if state.anchor != state.commanded_anchor:
        windows = state.r
    else:
        windows = receiver.remaining
        if windows < 1:
            return None
    return SleepCommand(CommandKind.MULTI_HOP_DURATION, budget, windows)
