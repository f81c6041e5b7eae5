"""Event-driven simulation loop.

Only two kinds of instants are visited: packet generations and cell instances
in which a link has something to send.  Everything in between (idle-listened
cells, OFF cells, PRIL-ML wake slots without traffic) is accounted for when a
link is next touched, in closed form over the skipped span.

A link's receiver evolves deterministically while its queue is empty, and a
packet joining a non-empty queue never changes when the head leaves.  That is
what makes lazy, per-link catch-up exact.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field

from . import metrics
from .mac import (ChannelModel, LinkState, MacConfig, NodeState, Outcome, Packet,
                  attempt_transmission, enqueue, on_delivery)
from .metrics import LISTEN, REC, REC_CMD, SEND, SEND_CMD, EnergyAccount, EnergyModel
from .pril import (CommandKind, PrilConfig, PrilLinkState, SleepCommand, Technique,
                   first_hop_sleep_count, multi_hop_sleep_command, t_min)
from .schedule import Cell, Schedule, Slotframe, physical_channel, validate_schedule
from .traffic import Flow

GEN, CELL = 0, 1


class ScenarioError(ValueError):
    """Invalid scenario; ``problems`` lists every issue found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class Node:
    id: str
    parent: str | None = None


@dataclass(frozen=True)
class Scenario:
    frame: Slotframe
    nodes: tuple[Node, ...]
    cells: tuple[Cell, ...]
    flows: tuple[Flow, ...]
    pril: dict = field(default_factory=dict)  # (tx, rx) -> PrilConfig
    channel: ChannelModel = field(default_factory=ChannelModel)
    energy: EnergyModel = field(default_factory=EnergyModel)
    duration: int = 0  # microseconds
    seed: int = 1
    warmup: int = 0
    mac: MacConfig = field(default_factory=MacConfig)

    def flows_through(self, link):
        return [f for f in self.flows if link in f.hops]


def first_hop_flow(scenario: Scenario, link):
    """The single flow for which ``link`` is the first hop and the only traffic, else None."""
    flows = scenario.flows_through(link)
    if len(flows) == 1 and flows[0].hops[0] == link:
        return flows[0]
    return None


def scenario_problems(sc: Scenario) -> list[str]:
    problems = [str(v) for v in validate_schedule(sc.cells, sc.frame)]
    ids = [n.id for n in sc.nodes]
    known = set(ids)
    if len(known) != len(ids):
        problems.append("duplicate node id")
    for n in sc.nodes:
        if n.parent is not None and n.parent not in known:
            problems.append(f"node {n.id}: unknown parent {n.parent}")
    for c in sc.cells:
        for end in c.link:
            if end not in known:
                problems.append(f"cell at slot {c.slot_offset}: unknown node {end}")
    scheduled = {c.link for c in sc.cells}
    flow_ids = [f.id for f in sc.flows]
    if len(set(flow_ids)) != len(flow_ids):
        problems.append("duplicate flow id")
    for f in sc.flows:
        for node in f.path:
            if node not in known:
                problems.append(f"flow {f.id}: unknown node {node}")
        for hop in f.hops:
            if hop not in scheduled:
                problems.append(f"flow {f.id}: no cell for link {hop[0]}->{hop[1]}")
    for link, cfg in sc.pril.items():
        if link not in scheduled:
            problems.append(f"pril: link {link[0]}->{link[1]} has no cell")
        if cfg.technique is Technique.PRIL_F and first_hop_flow(sc, link) is None:
            problems.append(f"pril: pril-f on {link[0]}->{link[1]} needs a link that is the first hop "
                            "of exactly one flow and carries nothing else")
    if sc.duration < 0:
        problems.append("run: duration must be >= 0")
    if sc.warmup < 0:
        problems.append("run: warmup must be >= 0")
    return problems


def check_scenario(sc: Scenario):
    problems = scenario_problems(sc)
    if problems:
        raise ScenarioError(problems)


def build_network(sc: Scenario):
    """Node states and link states (indexed by first appearance in the cell list)."""
    schedule = Schedule(sc.frame, sc.cells)
    nodes = {n.id: NodeState(n.id) for n in sc.nodes}
    links = []
    for i, link in enumerate(schedule.links):
        cfg = sc.pril.get(link, PrilConfig())
        flows = sc.flows_through(link)
        fastest = t_min(flows)
        if fastest is None:
            cfg = PrilConfig()
        state = PrilLinkState(link, cfg)
        if fastest is not None:
            state.t_min, state.tau_star = fastest
        if cfg.technique is Technique.PRIL_F:
            state.first_hop_flow = first_hop_flow(sc, link).id
        ls = LinkState(i, link, schedule.offsets_of(link), schedule.channel_offsets_of(link),
                       sc.frame.num_slots, sc.seed, state)
        links.append(ls)
        nodes[link[0]].tx[link[1]] = ls
        nodes[link[1]].rx[link[0]] = ls
    return schedule, nodes, links


@dataclass
class RunReport:
    metadata: dict
    energy_counts: dict
    power: metrics.PowerReport
    latency: dict  # row label -> LatencySummary, merged row last
    packets: dict
    diagnostics: dict

    def power_csv(self):
        return metrics.power_csv(self.power)

    def latency_csv(self):
        return metrics.latency_csv(self.latency)

    def to_dict(self):
        def lat(s):
            if s.empty:
                return {"n": 0}
            return {"n": s.n, "mean_us": float(s.mean), "std_us": s.std, "min_us": s.min,
                    "p99_us": s.p99, "p99_9_us": s.p99_9, "p99_99_us": s.p99_99, "max_us": s.max}

        return {
            "metadata": self.metadata,
            "energy_counts": {n: dict(zip(metrics.BUCKETS, c)) for n, c in self.energy_counts.items()},
            "power_uw": {n: {"send": float(p.send), "rec": float(p.rec), "listen": float(p.listen),
                             "total": float(p.total)} for n, p in self.power.rows()},
            "latency": {k: lat(s) for k, s in self.latency.items()},
            "packets": self.packets,
            "diagnostics": self.diagnostics,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def merged_label(flows):
    return "+".join(f.id for f in flows)


def build_report(sc: Scenario, account: EnergyAccount, samples, packets, diagnostics) -> RunReport:
    window = max(0, sc.duration - sc.warmup)
    latency = {f.id: metrics.latency_summary(samples[i]) for i, f in enumerate(sc.flows)}
    if len(sc.flows) > 1:
        latency[merged_label(sc.flows)] = metrics.latency_summary([x for s in samples for x in s])
    metadata = {
        "seed": sc.seed,
        "duration_us": sc.duration,
        "warmup_us": sc.warmup,
        "slot_duration_us": sc.frame.slot_duration,
        "num_slots": sc.frame.num_slots,
        "percentile_method": metrics.PERCENTILE_METHOD,
        "std": "population",
        "latency_reference": "generation instant to end of delivery slot",
    }
    return RunReport(metadata, {n: list(c) for n, c in account.counts.items()},
                     metrics.power_report(account, sc.energy, window), latency, packets, diagnostics)


class Simulation:
    """One run of a scenario; ``step()`` processes a single event."""

    def __init__(self, scenario: Scenario, trace=False):
        check_scenario(scenario)
        self.sc = sc = scenario
        self.trace = trace
        self.sd = sd = sc.frame.slot_duration
        self.horizon = -(-sc.duration // sd)  # cells with start < duration
        self.warm = -(-sc.warmup // sd)
        self.schedule, self.nodes, self.links = build_network(sc)
        self.account = EnergyAccount([n.id for n in sc.nodes])
        self.counts = self.account.counts
        self.flows = sc.flows
        flow_index = {f.id: i for i, f in enumerate(sc.flows)}
        self.first_link = [self.nodes[f.path[0]].tx[f.path[1]] for f in sc.flows]
        self.tau_star = [flow_index.get(ls.pril.tau_star, -1) for ls in self.links]
        self.first_hop_index = [flow_index.get(ls.pril.first_hop_flow, -1) for ls in self.links]
        self.cursor = [0] * len(self.links)
        self.next_seq = [0] * len(sc.flows)
        self.samples = [[] for _ in sc.flows]
        self.delivered_packets = [] if trace else None
        self.packets = {"generated": 0, "delivered": 0, "dropped_retry": 0, "dropped_overflow": 0}
        self.diag = {"commands_attached": 0, "commands_applied": 0, "ignored_commands": 0,
                     "tx_into_off": 0}
        self.now = 0
        self.heap = []
        for i, f in enumerate(sc.flows):
            t = f.generation_time(0)
            if t < sc.duration:
                self.heap.append((t, GEN, i))
        heapq.heapify(self.heap)
        self.finished = False

    # -- lazy per-link accounting -------------------------------------------

    def _advance(self, L: LinkState, upto):
        """Account every instance of L with ASN in [cursor, upto), assuming no transmission."""
        i = L.index
        cur = self.cursor[i]
        if cur >= upto:
            return
        rx = L.receiver
        inst = L.instances
        if rx.skip:
            n = inst.count(cur, upto)
            if n < rx.skip:
                rx.skip -= n
                self.cursor[i] = upto
                return
            cur = inst.nth(cur, rx.skip) + 1
            rx.skip = 0
        listen = self.counts[L.link[1]]
        warm = self.warm
        while cur < upto:
            if cur < rx.off_until:
                cur = rx.off_until
                continue
            if rx.remaining:
                c = inst.next(cur)
                if c >= upto:
                    break
                if c >= warm:
                    listen[LISTEN] += 1
                rx.wake(c)
                cur = c + 1
            else:
                lo = cur if cur > warm else warm
                if lo < upto:
                    listen[LISTEN] += inst.count(lo, upto)
                break
        self.cursor[i] = upto

    def _schedule(self, L: LinkState, asn):
        cur = self.cursor[L.index]
        if asn < cur:
            asn = cur
        self._advance(L, asn)
        rx = L.receiver
        if rx.skip:
            c = L.instances.nth(asn, rx.skip + 1)
        else:
            c = L.instances.next(asn if asn > rx.off_until else rx.off_until)
        if c < self.horizon:
            heapq.heappush(self.heap, (c * self.sd, CELL, L.index))

    def _arrive(self, L: LinkState, pkt: Packet):
        if not enqueue(L, pkt, self.sc.mac):
            self.packets["dropped_overflow"] += 1
            return
        if pkt.flow_index == self.tau_star[L.index]:
            p = L.pril
            if p.anchor is None or pkt.ready_time > p.anchor:
                p.anchor = pkt.ready_time
        if len(L.queue) == 1:
            self._schedule(L, -(-pkt.ready_time // self.sd))

    # -- events ---------------------------------------------------------------

    def _command(self, L: LinkState, asn):
        p = L.pril
        if p.technique is Technique.PRIL_F:
            fi = self.first_hop_index[L.index]
            # every generation up to this slot start has been processed
            g = self.flows[fi].generation_time(self.next_seq[fi])
            n = first_hop_sleep_count(L.instances, asn, g, self.sd)
            return SleepCommand(CommandKind.FIRST_HOP_COUNT, n) if n >= 1 else None
        return multi_hop_sleep_command(p, L.receiver, asn, 1, self.sd)

    def _cell(self, L: LinkState, asn):
        self._advance(L, asn)
        rx = L.receiver
        if rx.is_off(asn):
            self.diag["tx_into_off"] += 1
        q = L.queue
        pkt = q[0]
        cmd = None
        if len(q) == 1 and L.pril.technique is not Technique.NONE:
            cmd = self._command(L, asn)
            if cmd is not None:
                self.diag["commands_attached"] += 1
        src, dst = L.link
        if asn >= self.warm:
            if cmd is None:
                self.counts[src][SEND] += 1
                self.counts[dst][REC] += 1
            else:
                self.counts[src][SEND_CMD] += 1
                self.counts[dst][REC_CMD] += 1
        sd = self.sd
        channel = physical_channel(self.sc.frame, asn, L.channel_offsets[asn % self.sc.frame.num_slots])
        if attempt_transmission(self.sc.channel, L.loss_key, asn, channel) is Outcome.DELIVERED:
            q.pop(0)
            if cmd is not None:
                self.diag["commands_applied"] += 1
                if cmd.kind is CommandKind.MULTI_HOP_DURATION:
                    L.pril.commanded_anchor = L.pril.anchor
            latency, nxt = on_delivery(self.nodes[dst], rx, pkt, cmd, asn, sd)
            if nxt is None:
                self.packets["delivered"] += 1
                if pkt.generation_time >= self.sc.warmup:
                    self.samples[pkt.flow_index].append(latency)
                if self.delivered_packets is not None:
                    self.delivered_packets.append(pkt)
            else:
                self._arrive(nxt, pkt)
        else:
            rx.cell_passed(asn)
            pkt.attempts += 1
            limit = self.sc.mac.retry_limit
            if limit is not None and pkt.attempts > limit:
                q.pop(0)
                self.packets["dropped_retry"] += 1
        self.cursor[L.index] = asn + 1
        if q:
            self._schedule(L, asn + 1)

    def step_to_next_event(self) -> bool:
        """Process the earliest pending event; False once nothing is left before the horizon."""
        if not self.heap:
            return False
        t, kind, idx = heapq.heappop(self.heap)
        self.now = t
        if kind == GEN:
            flow = self.flows[idx]
            n = self.next_seq[idx]
            self.next_seq[idx] = n + 1
            self.packets["generated"] += 1
            nxt = flow.generation_time(n + 1)
            if nxt < self.sc.duration:
                heapq.heappush(self.heap, (nxt, GEN, idx))
            self._arrive(self.first_link[idx], Packet(flow, idx, n, t, self.trace))
        else:
            self._cell(self.links[idx], t // self.sd)
        return True

    step = step_to_next_event

    def settle(self, asn=None):
        """Bring idle-listen accounting up to ``asn`` (default: the horizon).

        Before the end of the run only links with an empty queue can be settled;
        the others are caught up by their own pending cell event.
        """
        final = asn is None or (asn >= self.horizon and not self.heap)
        asn = self.horizon if asn is None else min(asn, self.horizon)
        for L in self.links:
            if final or not L.queue:
                self._advance(L, asn)

    def run(self) -> RunReport:
        heap = self.heap
        step = self.step_to_next_event
        while heap:
            step()
        self.settle()
        self.finished = True
        return self.report()

    def report(self) -> RunReport:
        packets = dict(self.packets)
        packets["queued"] = sum(len(L.queue) for L in self.links)
        diag = dict(self.diag)
        diag["ignored_commands"] = sum(L.receiver.ignored for L in self.links)
        return build_report(self.sc, self.account, self.samples, packets, diag)


def run(scenario: Scenario) -> RunReport:
    return Simulation(scenario).run()


