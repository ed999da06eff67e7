"""Data plane: serialization timing, queueing, loss, byte conservation."""

import pytest

from icnsim.fabric import Fabric, FabricParams, FidNode, Packet, trace_delivery
from icnsim.fid import FidConfig, assign_link_ids, encode_path, zero_fid
from icnsim.simkernel import Engine
from icnsim.telemetry import EventLog, Telemetry, conservation_from_events
from icnsim.topology import TopologyGraph


class RecordingSink:
    """Terminal consumer usable as a node handler or as a gateway sink."""

    def __init__(self, consumers=1):
        self.consumers = consumers
        self.arrivals = []

    def consume(self, packet, t):
        self.arrivals.append((t, packet.pid))
        return self.consumers

    def process(self, packet, ttl, in_link, t):
        return [], self.consume(packet, t), None


class StaticForwarder:
    """Forwards every packet on a fixed link list (ignores the FID)."""

    def __init__(self, links):
        self.links = links

    def process(self, packet, ttl, in_link, t):
        up = [l for l in self.links if l.up]
        if not up:
            return [], None, "no_egress"
        return up, None, None


def chain_topology(capacity_bps=8_000_000, latency_us=500):
    topo = TopologyGraph()
    for name in ("a", "b", "c"):
        topo.add_node(name, "fn")
    topo.add_link("ab", "a", "b", capacity_bps, latency_us)
    topo.add_link("bc", "b", "c", capacity_bps, latency_us)
    return topo


def make_fabric(topo, **params):
    engine = Engine(1)
    log = EventLog()
    fabric = Fabric(engine, topo, log, Telemetry(), FabricParams(**params))
    return engine, log, fabric


def wire_exact(topo, fabric, sink_node=None, sink=None):
    lids = assign_link_ids(topo, FidConfig(m=len(topo.links), mode="exact"), 1)
    for name in topo.nodes:
        cb = sink if name == sink_node else None
        fabric.add_handler(name, FidNode(name, topo.egress(name), lids, sink=cb))
    return lids


def fid_for(lids, keys, m):
    return encode_path([lids[k] for k in keys], width=m)


def packet(fabric, fid=None, size=1000, kind="chunk", **kw):
    return Packet(pid=fabric.next_pid(), kind=kind, name="x", size=size,
                  origin="a", fid=fid, **kw)


def test_transmission_time_integer_ceiling():
    # 1000 bytes at 8 Mb/s is exactly 1 ms on the wire
    topo = chain_topology()
    engine, log, fabric = make_fabric(topo)
    sink = RecordingSink()
    lids = wire_exact(topo, fabric, "c", sink.consume)
    fid = fid_for(lids, ["ab:a->b", "bc:b->c"], len(topo.links))
    fabric.inject("a", packet(fabric, fid))
    engine.run_until(10_000_000)
    fwd = [r for r in log.records if r["ev"] == "pkt_fwd"]
    assert [r["link"] for r in fwd] == ["ab:a->b", "bc:b->c"]
    assert fwd[0]["start"] == 0 and fwd[0]["arrive"] == 1500
    assert fwd[1]["start"] == 1500 and fwd[1]["arrive"] == 3000
    assert sink.arrivals == [(3000, 0)]


def test_transmission_time_rounds_up():
    topo = TopologyGraph()
    topo.add_node("a", "fn")
    topo.add_node("b", "fn")
    topo.add_link("ab", "a", "b", 3, 0)  # 3 bit/s: 1 byte is ceil(8e6/3) us
    engine, log, fabric = make_fabric(topo)
    sink = RecordingSink()
    fabric.add_handler("a", StaticForwarder(topo.egress("a")))
    fabric.add_handler("b", sink)
    fabric.inject("a", packet(fabric, size=1))
    engine.run_until(10_000_000)
    assert sink.arrivals[0][0] == (8_000_000 + 2) // 3


def test_serialization_queue_backlog():
    """Back-to-back packets share the link one at a time."""
    topo = chain_topology()
    engine, log, fabric = make_fabric(topo)
    sink = RecordingSink()
    fabric.add_handler("a", StaticForwarder(topo.egress("a")))
    fabric.add_handler("b", sink)
    for _ in range(3):
        fabric.inject("a", packet(fabric))
    engine.run_until(10_000_000)
    fwd = [r for r in log.records if r["ev"] == "pkt_fwd"]
    assert [r["start"] for r in fwd] == [0, 1000, 2000]
    assert [t for t, _ in sink.arrivals] == [1500, 2500, 3500]


def test_queue_cap_drops_excess():
    # the in-service packet counts toward the cap: 2500 bytes admit two
    # 1000-byte packets and reject the third
    topo = chain_topology()
    engine, log, fabric = make_fabric(topo, queue_cap_bytes=2500)
    sink = RecordingSink()
    fabric.add_handler("a", StaticForwarder(topo.egress("a")))
    fabric.add_handler("b", sink)
    for _ in range(3):
        fabric.inject("a", packet(fabric))
    engine.run_until(10_000_000)
    drops = [r for r in log.records if r["ev"] == "pkt_drop"]
    assert len(drops) == 1 and drops[0]["reason"] == "queue_cap"
    assert len(sink.arrivals) == 2
    assert conservation_from_events(log.records)["balanced"]


def test_packet_lost_when_link_fails_mid_flight():
    topo = chain_topology()
    engine, log, fabric = make_fabric(topo)
    sink = RecordingSink()
    fabric.add_handler("a", StaticForwarder(topo.egress("a")))
    fabric.add_handler("b", sink)
    fabric.inject("a", packet(fabric))
    engine.schedule(700, fabric.set_link_state, "ab", False)
    engine.run_until(10_000_000)
    drops = [r for r in log.records if r["ev"] == "pkt_drop"]
    assert len(drops) == 1 and drops[0]["reason"] == "link_down"
    assert sink.arrivals == []
    assert conservation_from_events(log.records)["balanced"]


def test_packet_lost_when_link_bounces_mid_flight():
    """Down-then-up while on the wire still loses the packet."""
    topo = chain_topology()
    engine, log, fabric = make_fabric(topo)
    sink = RecordingSink()
    fabric.add_handler("a", StaticForwarder(topo.egress("a")))
    fabric.add_handler("b", sink)
    fabric.inject("a", packet(fabric))
    engine.schedule(600, fabric.set_link_state, "ab", False)
    engine.schedule(700, fabric.set_link_state, "ab", True)
    engine.run_until(10_000_000)
    assert sink.arrivals == []
    assert [r["reason"] for r in log.records if r["ev"] == "pkt_drop"] == ["link_down"]


def test_ttl_stops_forwarding_loops():
    topo = TopologyGraph()
    topo.add_node("a", "fn")
    topo.add_node("b", "fn")
    topo.add_link("ab", "a", "b", 1_000_000_000, 10)
    engine, log, fabric = make_fabric(topo, default_ttl=8)
    fabric.add_handler("a", StaticForwarder(topo.egress("a")))
    fabric.add_handler("b", StaticForwarder(topo.egress("b")))
    fabric.inject("a", packet(fabric))
    engine.run_until(10_000_000)
    drops = [r for r in log.records if r["ev"] == "pkt_drop"]
    assert [r["reason"] for r in drops] == ["ttl_exceeded"]
    fwd = [r for r in log.records if r["ev"] == "pkt_fwd"]
    assert len(fwd) == 8
    assert conservation_from_events(log.records)["balanced"]


def test_branch_surplus_accounts_every_copy():
    """A fan-out logs surplus copies so conservation stays exact."""
    topo = TopologyGraph()
    for name in ("root", "left", "right"):
        topo.add_node(name, "fn")
    topo.add_link("l1", "root", "left", 1_000_000_000, 10)
    topo.add_link("l2", "root", "right", 1_000_000_000, 10)
    engine, log, fabric = make_fabric(topo)
    left, right = RecordingSink(), RecordingSink()
    lids = assign_link_ids(topo, FidConfig(m=len(topo.links), mode="exact"), 1)
    fabric.add_handler("root", FidNode("root", topo.egress("root"), lids))
    fabric.add_handler("left", FidNode("left", topo.egress("left"), lids,
                                       sink=left.consume))
    fabric.add_handler("right", FidNode("right", topo.egress("right"), lids,
                                        sink=right.consume))
    fid = fid_for(lids, ["l1:root->left", "l2:root->right"], len(topo.links))
    fabric.inject("root", packet(fabric, fid, size=700))
    engine.run_until(1_000_000)
    branches = [r for r in log.records if r["ev"] == "pkt_branch"]
    assert len(branches) == 1 and branches[0]["extra"] == 1
    cons = conservation_from_events(log.records)
    assert cons["balanced"]
    assert cons["injected_bytes"] == 700
    assert cons["branch_extra_bytes"] == 700
    assert cons["delivered_bytes"] == 1400


def test_local_tap_plus_forwarding_counts_both_copies():
    """A gateway that consumes and forwards creates one extra copy."""
    topo = chain_topology()
    engine, log, fabric = make_fabric(topo)
    tap, end = RecordingSink(), RecordingSink()
    lids = assign_link_ids(topo, FidConfig(m=len(topo.links), mode="exact"), 1)
    fabric.add_handler("a", FidNode("a", topo.egress("a"), lids))
    fabric.add_handler("b", FidNode("b", topo.egress("b"), lids,
                                    sink=tap.consume))
    fabric.add_handler("c", FidNode("c", topo.egress("c"), lids,
                                    sink=end.consume))
    fid = fid_for(lids, ["ab:a->b", "bc:b->c"], len(topo.links))
    fabric.inject("a", packet(fabric, fid, size=500))
    engine.run_until(1_000_000)
    assert len(tap.arrivals) == 1 and len(end.arrivals) == 1
    branches = [r for r in log.records if r["ev"] == "pkt_branch"]
    assert [r["extra"] for r in branches] == [1]
    cons = conservation_from_events(log.records)
    assert cons["balanced"]
    assert cons["delivered_pkts"] == 2


def test_zero_fid_dropped_at_source_never_spurious():
    topo = chain_topology()
    engine, log, fabric = make_fabric(topo)
    lids = wire_exact(topo, fabric)
    fabric.inject("a", packet(fabric, zero_fid(len(topo.links))))
    engine.run_until(1_000_000)
    drops = [r for r in log.records if r["ev"] == "pkt_drop"]
    assert [r["reason"] for r in drops] == ["zero_fid"]
    assert not any(r["ev"] == "pkt_deliver" for r in log.records)


def test_spurious_delivery_flagged():
    """A sink that recognizes nobody still terminates the packet."""
    topo = chain_topology()
    engine, log, fabric = make_fabric(topo)
    nobody = RecordingSink(consumers=0)
    lids = wire_exact(topo, fabric, "b", nobody.consume)
    fabric.inject("a", packet(fabric, fid_for(lids, ["ab:a->b"], len(topo.links))))
    engine.run_until(1_000_000)
    deliveries = [r for r in log.records if r["ev"] == "pkt_deliver"]
    assert len(deliveries) == 1
    assert deliveries[0]["spurious"] is True
    assert deliveries[0]["consumers"] == 0


def test_listeners_hear_link_events_after_detection_delay():
    topo = chain_topology()
    engine, log, fabric = make_fabric(topo, detection_delay_us=10_000)
    heard = []
    fabric.add_topology_listener(lambda ev: heard.append((engine.now, ev.physical,
                                                          ev.up)))
    engine.schedule(500, fabric.set_link_state, "ab", False)
    engine.run_until(1_000_000)
    assert heard == [(10_500, "ab", False)]
    assert topo.epoch == 1


def test_flush_counters_match_event_log():
    topo = chain_topology()
    engine, log, fabric = make_fabric(topo)
    sink = RecordingSink()
    fabric.add_handler("a", StaticForwarder(topo.egress("a")))
    fabric.add_handler("b", sink)
    for _ in range(4):
        fabric.inject("a", packet(fabric, size=250))
    engine.run_until(1_000_000)
    fabric.flush_counters()
    samples = {(s["el"], s["metric"]): s["value"]
               for s in fabric.telemetry.samples}
    fwd_bytes = sum(r["size"] for r in log.records if r["ev"] == "pkt_fwd")
    assert samples[("ab:a->b", "tx_bytes")] == fwd_bytes == 1000
    assert samples[("ab:a->b", "tx_pkts")] == 4


def test_trace_delivery_reports_dead_ends():
    topo = chain_topology()
    lids = assign_link_ids(topo, FidConfig(m=len(topo.links), mode="exact"), 1)
    fid = encode_path([lids["ab:a->b"], lids["bc:b->c"]], width=len(topo.links))
    trace = trace_delivery(topo, lids, fid, "a", sinks={"c"})
    assert trace.sink_nodes == {"c"}
    assert trace.dead_ends == set()
    # without c as a recognized sink the same walk is a dead end
    trace2 = trace_delivery(topo, lids, fid, "a", sinks=set())
    assert trace2.dead_ends == {"c"}
