from dataclasses import dataclass

import pytest

from distheap.sim import (
    ASYNC,
    SYNC,
    Element,
    ProtocolNode,
    SimConfig,
    SimulationFault,
    Simulator,
    nat_bits,
)


@dataclass
class Ping:
    note: str = "ping"

    def size_bits(self, sim):
        return 8


class Recorder(ProtocolNode):
    """Collects everything it receives; optionally replies."""

    def __init__(self, sim, node_id):
        super().__init__(sim, node_id)
        self.got = []
        self.activations = 0

    def on_message(self, src, payload):
        self.got.append((src, payload))

    def on_activate(self):
        self.activations += 1


def make_sim(n=4, mode=SYNC, **kw):
    cfg = SimConfig(n=n, seed=1, mode=mode, **kw)
    sim = Simulator(cfg)
    nodes = [Recorder(sim, i) for i in range(n)]
    for node in nodes:
        sim.add_node(node)
    return sim, nodes


def test_nat_bits_rule():
    assert nat_bits(0) == 2
    assert nat_bits(1) == 2
    assert nat_bits(2) == 2
    assert nat_bits(3) == 2
    assert nat_bits(4) == 3
    assert nat_bits(7) == 3
    assert nat_bits(8) == 4


def test_send_appends_to_channel():
    sim, nodes = make_sim()
    sim.send(0, 1, Ping())
    assert len(sim.channels[1]) == 1
    assert isinstance(sim.channels[1][0].payload, Ping)


def test_self_send_delivered_next_round():
    sim, nodes = make_sim()
    sim.send(0, 0, Ping())
    sim.step_round()
    assert nodes[0].got == [(0, Ping())]


def test_unknown_destination_is_fault():
    sim, _ = make_sim()
    with pytest.raises(SimulationFault):
        sim.send(0, 99, Ping())


def test_quiescent_round_metrics():
    sim, nodes = make_sim(n=4)
    m = sim.step_round()
    assert m.max_congestion == 0
    assert m.delivered == 0
    assert all(node.activations == 1 for node in nodes)


def test_single_message_metrics():
    sim, nodes = make_sim()
    sim.send(0, 1, Ping())
    m = sim.step_round()
    assert m.per_node_messages == {1: 1}
    assert m.max_congestion == 1


def test_k_messages_one_round_congestion():
    sim, nodes = make_sim()
    for _ in range(5):
        sim.send(0, 2, Ping())
    m = sim.step_round()
    assert m.per_node_messages == {2: 5}
    assert m.max_congestion == 5
    assert len(nodes[2].got) == 5


def test_message_sent_during_round_arrives_next_round():
    sim, nodes = make_sim()

    class Replier(Recorder):
        def on_message(self, src, payload):
            super().on_message(src, payload)
            if src == 0:
                self.sim.send(self.id, 0, Ping("reply"))

    sim.nodes[1] = Replier(sim, 1)
    sim.send(0, 1, Ping())
    sim.step_round()
    assert nodes[0].got == []
    sim.step_round()
    assert len(nodes[0].got) == 1


def test_conservation_after_drain():
    sim, nodes = make_sim()
    for i in range(10):
        sim.send(i % 4, (i + 1) % 4, Ping())
    while sim.pending_messages():
        sim.step_round()
    assert sim.sent == sim.delivered == 10


def test_async_determinism():
    def trace_run():
        events = []
        cfg = SimConfig(n=3, seed=42, mode=ASYNC, async_delay_max=5)
        sim = Simulator(cfg, trace=events.append)
        nodes = [Recorder(sim, i) for i in range(3)]
        for node in nodes:
            sim.add_node(node)
        for i in range(20):
            sim.send(i % 3, (i + 1) % 3, Ping())
        sim.run_async(schedule_seed=7)
        return events

    assert trace_run() == trace_run()


def test_async_non_fifo_possible():
    # two messages from 0 to 1 may be delivered in reverse order for some seed
    reordered = False
    for schedule_seed in range(40):
        cfg = SimConfig(n=2, seed=5, mode=ASYNC, async_delay_max=8)
        sim = Simulator(cfg)
        nodes = [Recorder(sim, i) for i in range(2)]
        for node in nodes:
            sim.add_node(node)
        sim.send(0, 1, Ping("first"))
        sim.send(0, 1, Ping("second"))
        sim.run_async(schedule_seed)
        notes = [p.note for _, p in nodes[1].got]
        if notes == ["second", "first"]:
            reordered = True
            break
    assert reordered


def test_async_fairness_bound_and_drain():
    cfg = SimConfig(n=4, seed=9, mode=ASYNC, async_delay_max=6)
    sim = Simulator(cfg)
    nodes = [Recorder(sim, i) for i in range(4)]
    for node in nodes:
        sim.add_node(node)
    for i in range(50):
        sim.send(i % 4, (i * 3 + 1) % 4, Ping())
    sim.run_async(schedule_seed=3)
    assert sim.pending_messages() == 0
    assert sim.sent == sim.delivered == 50
    assert max(sim.delivery_delays()) <= cfg.async_delay_max


def test_async_same_seed_same_delays():
    def delays():
        cfg = SimConfig(n=3, seed=11, mode=ASYNC, async_delay_max=7)
        sim = Simulator(cfg)
        for i in range(3):
            sim.add_node(Recorder(sim, i))
        for i in range(30):
            sim.send(i % 3, (i + 2) % 3, Ping())
        sim.run_async(schedule_seed=1)
        return sim.delivery_delays()

    assert delays() == delays()
