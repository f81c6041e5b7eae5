from dataclasses import replace

import pytest

from prilsim import rng
from prilsim.engine import Simulation, build_network, run
from prilsim.mac import (ChannelModel, MacConfig, Outcome, Packet, SlotAction, attempt_transmission, enqueue,
                         on_delivery, slot_action)
from prilsim.pril import CommandKind, SleepCommand
from prilsim.scenario import builtin

from randomized import random_scenario

SD = 20_000


@pytest.fixture
def net():
    sc = builtin("fig1", duration="1h")
    return sc, *build_network(sc)


def _packet(sc, flow_index=0, seq=0, t=0):
    f = sc.flows[flow_index]
    return Packet(f, flow_index, seq, t)


def test_slot_actions(net):
    sc, schedule, nodes, links = net
    to_n0 = nodes["N1"].tx["N0"]
    enqueue(to_n0, _packet(sc), MacConfig())
    assert slot_action(nodes["N1"], 2, schedule) == (SlotAction.TRANSMIT, to_n0)
    assert slot_action(nodes["N1"], 0, schedule) == (SlotAction.LISTEN, nodes["N1"].rx["N2"])
    assert slot_action(nodes["N2"], 1, schedule) == (SlotAction.IDLE, None)
    assert slot_action(nodes["N2"], 0, schedule)[0] is SlotAction.IDLE  # nothing queued


def test_off_receiver(net):
    sc, schedule, nodes, links = net
    link = nodes["N1"].rx["N2"]
    link.receiver.apply_sleep_command(SleepCommand(CommandKind.FIRST_HOP_COUNT, 1), 0)
    enqueue(link, _packet(sc), MacConfig())
    assert slot_action(nodes["N1"], 0, schedule)[0] is SlotAction.OFF
    # the transmitter sees the same state and defers
    assert slot_action(nodes["N2"], 0, schedule)[0] is SlotAction.IDLE


def test_loss_extremes():
    key = rng.derive_key(1, rng.LOSS, 0)
    assert all(attempt_transmission(ChannelModel(0.0), key, a, 11) is Outcome.DELIVERED for a in range(1000))
    assert all(attempt_transmission(ChannelModel(1.0), key, a, 11) is Outcome.LOST for a in range(1000))


def test_loss_frequency():
    key = rng.derive_key(3, rng.LOSS, 2)
    model = ChannelModel(0.1)
    n = 1_000_000
    delivered = sum(attempt_transmission(model, key, a, 11) is Outcome.DELIVERED for a in range(n))
    assert abs(delivered / n - 0.9) <= 0.001


def test_per_channel_loss():
    model = ChannelModel(0.0, {15: 1.0})
    key = rng.derive_key(1, rng.LOSS, 0)
    assert attempt_transmission(model, key, 0, 15) is Outcome.LOST
    assert attempt_transmission(model, key, 0, 16) is Outcome.DELIVERED
    assert not model.lossless


def test_channel_model_validation():
    with pytest.raises(ValueError):
        ChannelModel(1.5)
    with pytest.raises(ValueError):
        ChannelModel(0.1, {11: -0.1})


def test_mac_config_validation():
    with pytest.raises(ValueError):
        MacConfig(retry_limit=-1)
    with pytest.raises(ValueError):
        MacConfig(queue_capacity=0)


def test_delivery_at_destination_records_latency(net):
    sc, schedule, nodes, links = net
    pkt = _packet(sc, 0, 0, 5)
    pkt.hop = 1  # already at N1
    latency, nxt = on_delivery(nodes["N0"], links[2].receiver, pkt, None, 2, SD)
    assert (latency, nxt) == (3 * SD - 5, None)


def test_delivery_at_relay_forwards(net):
    sc, schedule, nodes, links = net
    pkt = _packet(sc, 1, 0, 0)
    latency, nxt = on_delivery(nodes["N1"], nodes["N1"].rx["N3"].receiver, pkt, None, 1, SD)
    assert latency is None
    assert nxt is nodes["N1"].tx["N0"]
    assert pkt.ready_time == 2 * SD and pkt.hop == 1


def test_malformed_command_accepted_and_counted(net):
    sc, schedule, nodes, links = net
    rx = nodes["N1"].rx["N3"].receiver
    pkt = _packet(sc, 1)
    latency, nxt = on_delivery(nodes["N1"], rx, pkt, SleepCommand(CommandKind.MULTI_HOP_DURATION, 10, 0), 1, SD)
    assert nxt is not None
    assert rx.ignored == 1


def test_fifo_and_overflow(net):
    sc, schedule, nodes, links = net
    link = nodes["N1"].tx["N0"]
    mac = MacConfig(queue_capacity=2)
    late, early = _packet(sc, 0, 1, 100), _packet(sc, 1, 0, 50)
    assert enqueue(link, late, mac)
    assert enqueue(link, early, mac)
    assert link.queue == [early, late]
    assert not enqueue(link, _packet(sc, 0, 2, 10), mac)
    assert len(link.queue) == 2


def test_lossy_conservation_and_latency_floor():
    for case in range(30):
        sim = Simulation(random_scenario(case, max_duration=20 * 60 * 1_000_000), trace=True)
        report = sim.run()
        p = report.packets
        assert p["generated"] == p["delivered"] + p["queued"] + p["dropped_retry"] + p["dropped_overflow"]
        for pkt in sim.delivered_packets:
            hops = len(pkt.path) - 1
            assert (pkt.trace[-1][1] + sim.sd) - pkt.generation_time >= hops * sim.sd or hops == 0


def test_no_transmission_into_off_receiver_without_loss():
    for case in range(60):
        sc = random_scenario(case, max_duration=30 * 60 * 1_000_000)
        sc = replace(sc, channel=ChannelModel(0.0))
        assert run(sc).diagnostics["tx_into_off"] == 0


def test_tsch_lossless_fifo_wait_bound():
    """Without loss a packet never waits behind other traffic longer than the queue ahead of it."""
    sc = builtin("fig1", duration="2d")
    sim = Simulation(sc, trace=True)
    sim.run()
    frame = sc.frame.period
    for pkt in sim.delivered_packets:
        for enq, sent in pkt.trace:
            assert sent - enq < 2 * frame
