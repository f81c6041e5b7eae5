"""Slotframe matrix: cells, validation, and slot/channel arithmetic.

Time is integer microseconds; the absolute slot number (ASN) counts slots
since the start of the run.  A cell instance is one repetition of a cell,
i.e. an ASN whose offset within the slotframe equals the cell's slot offset.
"""

from __future__ import annotations

from bisect import bisect_left
from collections import defaultdict
from dataclasses import dataclass, field

DEFAULT_HOP_SEQUENCE = tuple(range(11, 27))


@dataclass(frozen=True)
class Slotframe:
    num_slots: int = 101
    slot_duration: int = 20_000  # microseconds
    num_channel_offsets: int = 16
    hop_sequence: tuple[int, ...] = DEFAULT_HOP_SEQUENCE

    def __post_init__(self):
        if self.num_slots < 1:
            raise ValueError("num_slots must be >= 1")
        if self.slot_duration <= 0:
            raise ValueError("slot_duration must be > 0")
        if not 1 <= self.num_channel_offsets <= 16:
            raise ValueError("num_channel_offsets must be in [1, 16]")
        if len(self.hop_sequence) < self.num_channel_offsets:
            raise ValueError("hop_sequence shorter than num_channel_offsets")
        if len(set(self.hop_sequence)) != len(self.hop_sequence):
            raise ValueError("hop_sequence entries must be distinct")

    @property
    def period(self) -> int:
        """Slotframe repetition period in microseconds."""
        return self.num_slots * self.slot_duration


@dataclass(frozen=True)
class Cell:
    slot_offset: int
    channel_offset: int
    link: tuple[str, str]  # (transmitter, receiver)


@dataclass(frozen=True)
class Violation:
    kind: str
    cells: tuple[Cell, ...]

    def __str__(self):
        where = ", ".join(
            f"(slot {c.slot_offset}, ch {c.channel_offset}: {c.link[0]}->{c.link[1]})"
            for c in self.cells
        )
        return f"{self.kind}: {where}"


def validate_schedule(cells, frame: Slotframe) -> list[Violation]:
    """Return every broken cell invariant; an empty list means the schedule is valid."""
    problems = []
    for c in cells:
        if not 0 <= c.slot_offset < frame.num_slots:
            problems.append(Violation("slot offset out of range", (c,)))
        if not 0 <= c.channel_offset < frame.num_channel_offsets:
            problems.append(Violation("channel offset out of range", (c,)))
        if c.link[0] == c.link[1]:
            problems.append(Violation("self link", (c,)))

    by_coord = defaultdict(list)
    for c in cells:
        by_coord[c.slot_offset, c.channel_offset].append(c)
    for group in by_coord.values():
        if len(group) > 1:
            problems.append(Violation("duplicate coordinate", tuple(group)))

    by_slot = defaultdict(list)
    for c in cells:
        by_slot[c.slot_offset].append(c)
    for slot in sorted(by_slot):
        seen = {}
        clashes = []
        for c in by_slot[slot]:
            for node in c.link:
                other = seen.setdefault(node, c)
                if other is not c and (other, c) not in clashes:
                    clashes.append((other, c))
        problems.extend(Violation("half-duplex", pair) for pair in clashes)
    return problems


def cells_in_slot(cells, frame: Slotframe, asn: int) -> list[Cell]:
    offset = asn % frame.num_slots
    return [c for c in cells if c.slot_offset == offset]


def physical_channel(frame: Slotframe, asn: int, channel_offset: int) -> int:
    seq = frame.hop_sequence
    return seq[(asn + channel_offset) % len(seq)]


class CellInstances:
    """Closed-form enumeration of the repetitions of a set of slot offsets."""

    __slots__ = ("offsets", "num_slots", "per_frame")

    def __init__(self, offsets, num_slots):
        self.offsets = tuple(sorted(set(offsets)))
        if not self.offsets:
            raise ValueError("a link needs at least one cell")
        self.num_slots = num_slots
        self.per_frame = len(self.offsets)

    def _rank(self, asn):
        # number of instances strictly below asn
        q, rem = divmod(asn, self.num_slots)
        return q * self.per_frame + bisect_left(self.offsets, rem)

    def count(self, lo, hi):
        """Instances with lo <= asn < hi."""
        if hi <= lo:
            return 0
        return self._rank(hi) - self._rank(lo)

    def next(self, asn):
        """First instance at or after ``asn``."""
        q, rem = divmod(asn, self.num_slots)
        i = bisect_left(self.offsets, rem)
        if i < self.per_frame:
            return q * self.num_slots + self.offsets[i]
        return (q + 1) * self.num_slots + self.offsets[0]

    def nth(self, asn, k):
        """The k-th instance (k >= 1) at or after ``asn``."""
        idx = self._rank(asn) + k - 1
        q, i = divmod(idx, self.per_frame)
        return q * self.num_slots + self.offsets[i]


@dataclass
class Schedule:
    """Validated cell list with per-slot and per-link lookup tables."""

    frame: Slotframe
    cells: tuple[Cell, ...]
    by_offset: dict = field(init=False, repr=False)
    links: tuple = field(init=False)

    def __post_init__(self):
        self.cells = tuple(self.cells)
        by_offset = defaultdict(list)
        links = []
        for c in self.cells:
            by_offset[c.slot_offset].append(c)
            if c.link not in links:
                links.append(c.link)
        self.by_offset = {k: sorted(v, key=lambda c: c.channel_offset) for k, v in by_offset.items()}
        self.links = tuple(links)

    def cells_at(self, asn):
        return self.by_offset.get(asn % self.frame.num_slots, ())

    def offsets_of(self, link):
        return sorted(c.slot_offset for c in self.cells if c.link == link)

    def channel_offsets_of(self, link):
        return {c.slot_offset: c.channel_offset for c in self.cells if c.link == link}
