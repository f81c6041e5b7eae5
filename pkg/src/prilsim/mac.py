"""Per-node TSCH MAC behaviour: FIFO queues per outgoing link, slot decisions,
lossy transmission attempts, and relay on delivery.

An attempt is acknowledged inside its own slot, so the transmitter always
knows whether a sleep command reached the receiver.  The transmitter's view
of the receiver's OFF state is therefore the receiver state itself, shared
through :class:`LinkState`.
"""

from __future__ import annotations

import enum
from bisect import insort
from dataclasses import dataclass, field

from . import rng
from .pril import PrilLinkState, ReceiverState
from .schedule import CellInstances


class Outcome(enum.Enum):
    DELIVERED = "delivered"
    LOST = "lost"


class SlotAction(enum.Enum):
    TRANSMIT = "transmit"
    LISTEN = "listen"
    OFF = "off"
    IDLE = "idle"


@dataclass(frozen=True)
class ChannelModel:
    loss_probability: float = 0.0
    per_channel: dict = field(default_factory=dict)  # physical channel -> loss probability

    def __post_init__(self):
        for p in (self.loss_probability, *self.per_channel.values()):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"loss probability {p} outside [0, 1]")

    def loss_for(self, channel):
        return self.per_channel.get(channel, self.loss_probability)

    @property
    def lossless(self):
        return self.loss_probability == 0 and not any(self.per_channel.values())


@dataclass(frozen=True)
class MacConfig:
    retry_limit: int | None = None  # retransmissions allowed per hop; None = unbounded
    queue_capacity: int | None = None  # packets per outgoing link; None = unbounded

    def __post_init__(self):
        if self.retry_limit is not None and self.retry_limit < 0:
            raise ValueError("retry_limit must be >= 0")
        if self.queue_capacity is not None and self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")


class Packet:
    __slots__ = ("flow", "flow_index", "path", "seq", "generation_time", "ready_time",
                 "hop", "attempts", "key", "trace")

    def __init__(self, flow, flow_index, seq, generation_time, trace=False):
        self.flow = flow.id
        self.flow_index = flow_index
        self.path = flow.path
        self.seq = seq
        self.generation_time = generation_time
        self.ready_time = generation_time
        self.hop = 0
        self.attempts = 0
        self.key = (generation_time, flow_index, seq)
        # (enqueue time, transmission slot start) per hop
        self.trace = [] if trace else None

    @property
    def next_hop(self):
        return self.path[self.hop + 1]

    def __repr__(self):
        return f"Packet({self.flow}#{self.seq}, hop {self.hop}, ready {self.ready_time})"


class LinkState:
    """One directed link: its FIFO, its cells, and the PRIL state of both ends."""

    __slots__ = ("index", "link", "queue", "pril", "receiver", "instances",
                 "channel_offsets", "loss_key")

    def __init__(self, index, link, offsets, channel_offsets, num_slots, seed,
                 pril: PrilLinkState | None = None):
        self.index = index
        self.link = link
        self.queue = []
        self.pril = pril or PrilLinkState(link)
        self.receiver = ReceiverState()
        self.instances = CellInstances(offsets, num_slots)
        self.channel_offsets = channel_offsets  # slot offset -> channel offset
        self.loss_key = rng.derive_key(seed, rng.LOSS, index)


@dataclass
class NodeState:
    id: str
    tx: dict = field(default_factory=dict)  # receiver id -> LinkState
    rx: dict = field(default_factory=dict)  # transmitter id -> LinkState


def enqueue(link: LinkState, packet: Packet, mac: MacConfig) -> bool:
    """Insert in arrival order; False when the queue is full (the newcomer is dropped)."""
    q = link.queue
    if mac.queue_capacity is not None and len(q) >= mac.queue_capacity:
        return False
    if not q or q[-1].key <= packet.key:
        q.append(packet)
    else:
        insort(q, packet, key=lambda p: p.key)
    if packet.trace is not None:
        packet.trace.append([packet.ready_time, None])
    return True


def slot_action(node: NodeState, asn, schedule):
    """What ``node`` does in slot ``asn``: (SlotAction, LinkState | None)."""
    for cell in schedule.cells_at(asn):
        src, dst = cell.link
        if src == node.id:
            link = node.tx[dst]
            if link.queue and not link.receiver.is_off(asn):
                return SlotAction.TRANSMIT, link
            return SlotAction.IDLE, link
        if dst == node.id:
            link = node.rx[src]
            if link.receiver.is_off(asn):
                return SlotAction.OFF, link
            return SlotAction.LISTEN, link
    return SlotAction.IDLE, None


def attempt_transmission(channel_model: ChannelModel, loss_key, asn, channel) -> Outcome:
    """Bernoulli loss keyed by (seed, link, ASN); no draw is made on a lossless channel."""
    p = channel_model.loss_for(channel)
    if p <= 0.0:
        return Outcome.DELIVERED
    if p >= 1.0:
        return Outcome.LOST
    return Outcome.LOST if rng.draw(loss_key, asn) < p else Outcome.DELIVERED


def on_delivery(node: NodeState, receiver, packet: Packet, command, asn, slot_duration):
    """Hand a successfully received frame to ``node``.

    The attached sleep command (if any) goes to ``receiver``; malformed ones are
    counted there and otherwise ignored.  Returns ``(latency_us, None)`` at the
    destination, ``(None, next_link)`` when the packet must be relayed.
    """
    end = (asn + 1) * slot_duration
    if command is not None:
        receiver.apply_sleep_command(command, asn + 1)
    else:
        receiver.cell_passed(asn)
    if packet.trace is not None:
        packet.trace[-1][1] = asn * slot_duration
    packet.hop += 1
    packet.attempts = 0
    if packet.hop == len(packet.path) - 1:
        return end - packet.generation_time, None
    packet.ready_time = end
    packet.key = (end, packet.flow_index, packet.seq)
    return None, node.tx[packet.next_hop]
