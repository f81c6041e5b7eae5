"""Brute-force reference interpreter.

Visits every ASN, asks the MAC what each scheduled node does, and derives
every sleep command by stepping slot by slot.  The receiver keeps the OFF
cell instances as an explicit set instead of the engine's compact state.
It is slow on purpose and refuses long horizons.
"""

from __future__ import annotations

from .engine import Scenario, build_network, build_report, check_scenario
from .mac import Outcome, Packet, SlotAction, attempt_transmission, enqueue, on_delivery, slot_action
from .metrics import Event, EnergyAccount
from .pril import CommandKind, SleepCommand, Technique
from .schedule import physical_channel

DEFAULT_CAP_US = 2 * 3600 * 1_000_000


class ExplicitReceiver:
    """Receiver whose future OFF instances are enumerated when a command arrives."""

    def __init__(self, offsets, num_slots):
        self.offsets = set(offsets)
        self.num_slots = num_slots
        self.off = set()
        self.window_starts = []
        self.windows = 0
        self.end = 0
        self.ignored = 0

    def _is_cell(self, asn):
        return asn % self.num_slots in self.offsets

    def is_off(self, asn):
        return asn in self.off

    def cell_passed(self, asn):
        self.off.discard(asn)

    def windows_left(self, asn):
        """Windows of the last r-cycle not started by ``asn`` (0 once its budget is spent)."""
        if not self.window_starts or asn + 1 >= self.end:
            return 0
        return self.windows - sum(1 for s in self.window_starts if s <= asn)

    def apply_sleep_command(self, cmd: SleepCommand, now):
        if cmd.value < 0 or (cmd.kind is CommandKind.MULTI_HOP_DURATION and (cmd.value < 1 or cmd.r < 1)):
            self.ignored += 1
            return False
        self.off = set()
        self.window_starts = []
        if cmd.kind is CommandKind.FIRST_HOP_COUNT:
            a = now
            left = cmd.value
            while left:
                if self._is_cell(a):
                    self.off.add(a)
                    left -= 1
                a += 1
            return True
        end = now + cmd.value
        self.windows, self.end = cmd.r, end
        width = -(-cmd.value // cmd.r)
        start = now
        for _ in range(cmd.r):
            stop = min(start + width, end)
            self.window_starts.append(start)
            for a in range(start, stop):
                if self._is_cell(a):
                    self.off.add(a)
            if stop >= end:
                break
            wake = stop
            while not self._is_cell(wake):
                wake += 1
            if wake + 1 >= end:
                break
            start = wake + 1
        return True


def _fastest(sc: Scenario, link):
    best = None
    for f in sc.flows:
        for hop in zip(f.path, f.path[1:]):
            if hop == link and (best is None or (f.nominal_period, f.id) < best):
                best = (f.nominal_period, f.id)
    return best


def oracle_run(scenario: Scenario, cap_us=DEFAULT_CAP_US):
    if scenario.duration > cap_us:
        raise ValueError(f"oracle refuses horizons above {cap_us} us (got {scenario.duration})")
    check_scenario(scenario)
    sc = scenario
    sd = sc.frame.slot_duration
    n_slots = sc.frame.num_slots
    schedule, nodes, links = build_network(sc)
    for L in links:
        L.receiver = ExplicitReceiver(schedule.offsets_of(L.link), n_slots)
    by_link = {L.link: L for L in links}
    flow_pos = {f.id: i for i, f in enumerate(sc.flows)}

    fastest = {L.link: _fastest(sc, L.link) for L in links}
    anchor = {L.link: None for L in links}
    commanded = {L.link: None for L in links}

    account = EnergyAccount([n.id for n in sc.nodes])
    samples = [[] for _ in sc.flows]
    packets = {"generated": 0, "delivered": 0, "dropped_retry": 0, "dropped_overflow": 0}
    diag = {"commands_attached": 0, "commands_applied": 0, "ignored_commands": 0, "tx_into_off": 0}
    created = [0] * len(sc.flows)
    warm = -(-sc.warmup // sd)
    horizon = -(-sc.duration // sd)

    def arrive(L, pkt):
        if not enqueue(L, pkt, sc.mac):
            packets["dropped_overflow"] += 1
            return
        fast = fastest[L.link]
        if fast is not None and pkt.flow == fast[1]:
            if anchor[L.link] is None or pkt.ready_time > anchor[L.link]:
                anchor[L.link] = pkt.ready_time

    def command_for(L, asn):
        technique = L.pril.technique
        if technique is Technique.PRIL_F:
            i = flow_pos[L.pril.first_hop_flow]
            flow = sc.flows[i]
            m = created[i]
            while flow.generation_time(m) <= asn * sd:
                m += 1
            nxt = flow.generation_time(m)
            count = 0
            a = asn + 1
            while a * sd < nxt:
                if L.receiver._is_cell(a):
                    count += 1
                a += 1
            return SleepCommand(CommandKind.FIRST_HOP_COUNT, count) if count else None
        if technique in (Technique.PRIL_M, Technique.PRIL_ML):
            a0 = anchor[L.link]
            if a0 is None:
                return None
            limit = a0 + fastest[L.link][0]
            budget = 0
            while (asn + 2 + budget) * sd <= limit:
                budget += 1
            if budget == 0:
                return None
            if a0 != commanded[L.link]:
                windows = L.pril.config.r
            else:
                windows = L.receiver.windows_left(asn)
                if windows == 0:
                    return None
            return SleepCommand(CommandKind.MULTI_HOP_DURATION, budget, windows)
        return None

    def generate(upto):
        due = []
        for i, f in enumerate(sc.flows):
            while True:
                t = f.generation_time(created[i])
                if t > upto or t >= sc.duration:
                    break
                due.append((t, i, created[i]))
                created[i] += 1
        for t, i, seq in sorted(due):
            packets["generated"] += 1
            f = sc.flows[i]
            arrive(by_link[(f.path[0], f.path[1])], Packet(f, i, seq, t))

    for asn in range(horizon):
        generate(asn * sd)

        for cell in schedule.cells_at(asn):
            src, dst = cell.link
            L = by_link[cell.link]
            tx_act, _ = slot_action(nodes[src], asn, schedule)
            rx_act, _ = slot_action(nodes[dst], asn, schedule)
            counted = asn >= warm
            if rx_act is SlotAction.OFF:
                if L.queue:
                    # a frame is waiting but the receiver sleeps: the transmitter defers
                    assert tx_act is SlotAction.IDLE
                L.receiver.cell_passed(asn)
                continue
            if tx_act is not SlotAction.TRANSMIT:
                if counted:
                    account.charge(dst, Event.IDLE_LISTENED)
                L.receiver.cell_passed(asn)
                continue
            pkt = L.queue[0]
            cmd = command_for(L, asn) if len(L.queue) == 1 else None
            if cmd is not None:
                diag["commands_attached"] += 1
            if counted:
                account.charge(src, Event.SENT, with_command=cmd is not None)
                account.charge(dst, Event.RECEIVED, with_command=cmd is not None)
            channel = physical_channel(sc.frame, asn, cell.channel_offset)
            outcome = attempt_transmission(sc.channel, L.loss_key, asn, channel)
            if outcome is Outcome.DELIVERED:
                L.queue.pop(0)
                if cmd is not None:
                    diag["commands_applied"] += 1
                    if cmd.kind is CommandKind.MULTI_HOP_DURATION:
                        commanded[L.link] = anchor[L.link]
                latency, nxt = on_delivery(nodes[dst], L.receiver, pkt, cmd, asn, sd)
                if nxt is None:
                    packets["delivered"] += 1
                    if pkt.generation_time >= sc.warmup:
                        samples[pkt.flow_index].append(latency)
                else:
                    arrive(nxt, pkt)
            else:
                L.receiver.cell_passed(asn)
                pkt.attempts += 1
                if sc.mac.retry_limit is not None and pkt.attempts > sc.mac.retry_limit:
                    L.queue.pop(0)
                    packets["dropped_retry"] += 1

    # generations after the last slot start but before the end of the run
    generate(sc.duration)
    packets["queued"] = sum(len(L.queue) for L in links)
    diag["ignored_commands"] = sum(L.receiver.ignored for L in links)
    return build_report(sc, account, samples, packets, diag)
