"""Store-and-forward data plane over the shared topology.

Links serialize packets through an unbounded FIFO (optionally capped in
bytes); a packet occupies a link for size/capacity seconds and arrives one
propagation latency later.  Forwarding nodes in the ICN core hold no
per-flow state at all: the forwarding decision tests each egress link's
identifier against the bit vector carried by the packet, so rerouting
never touches them.  Every injected, forwarded, duplicated, delivered and
dropped byte is logged; byte conservation is recomputable from the log.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import _bitops
from .fid import FID, LinkId, pack_link_ids, should_forward
from .simkernel import Engine
from .telemetry import EventLog, Telemetry
from .topology import Link, TopologyEvent, TopologyGraph

DEFAULT_TTL = 64


@dataclass(frozen=True)
class Packet:
    """Immutable packet description; per-copy state (TTL) travels separately.

    kind is the traffic class used by the reducers ("chunk", "playlist",
    "request", "stream", "igmp"); name identifies the content or group.
    ICN packets carry fid; IP packets carry src and dst (dst may be a
    multicast group name).
    """

    pid: int
    kind: str
    name: str
    size: int
    origin: str
    fid: Optional[FID] = None
    src: Optional[str] = None
    dst: Optional[str] = None
    payload: tuple = ()


class FidNode:
    """Stateless forwarding element: routing state lives in the packet.

    The only attributes are the static link attachment (and its packed
    identifier buffer) and an optional local sink callback for gateway
    nodes; there is nothing a topology change could update.
    """

    def __init__(self, name: str, egress_links: list[Link],
                 link_ids: dict[str, LinkId],
                 sink: Optional[Callable] = None):
        self.name = name
        self.egress_links = list(egress_links)
        self.link_ids = [link_ids[l.key] for l in self.egress_links]
        self.width = self.link_ids[0].width if self.link_ids else 0
        self._packed = pack_link_ids(self.link_ids)
        self._wbytes = (self.width + 7) // 8
        self.sink = sink

    def process(self, packet: Packet, ttl: int, in_link, t: int):
        if self.egress_links and packet.fid is not None:
            idx = _bitops.select_covered(
                packet.fid.bits, self._packed, len(self.egress_links), self._wbytes)
            egress = [self.egress_links[i] for i in idx if self.egress_links[i].up]
        else:
            egress = []
        consumers = self.sink(packet, t) if self.sink is not None else None
        reason = None
        if not egress:
            zero = packet.fid is not None and packet.fid.popcount() == 0
            if zero and not consumers:
                # an all-zeros identifier forwards nowhere: dropped at
                # source, never a spurious delivery
                consumers = None
                reason = "zero_fid"
            elif consumers is None:
                reason = "no_egress"
        return egress, consumers, reason

    def routing_digest(self) -> str:
        """Digest of this node's routing state: static link identifiers only."""
        h = hashlib.sha256()
        for link, lid in zip(self.egress_links, self.link_ids):
            h.update(link.key.encode())
            h.update(lid.bits)
        return h.hexdigest()


@dataclass
class FabricParams:
    mtu: int = 1400
    detection_delay_us: int = 10_000
    queue_cap_bytes: Optional[int] = None
    default_ttl: int = DEFAULT_TTL


class Fabric:
    """Event-driven packet transport shared by both data planes."""

    def __init__(self, engine: Engine, topo: TopologyGraph, log: EventLog,
                 telemetry: Telemetry, params: FabricParams = None):
        self.engine = engine
        self.topo = topo
        self.log = log
        self.telemetry = telemetry
        self.params = params or FabricParams()
        self.handlers: dict[str, object] = {}
        self.topology_listeners: list[Callable] = []
        self._next_pid = 0
        # convenience counters; the event log stays authoritative
        self.link_tx_bytes: dict[str, int] = {}
        self.link_tx_pkts: dict[str, int] = {}
        self.link_queue_peak: dict[str, int] = {}
        self.node_drops: dict[str, int] = {}

    def next_pid(self) -> int:
        pid = self._next_pid
        self._next_pid += 1
        return pid

    def add_handler(self, node: str, handler) -> None:
        self.handlers[node] = handler

    def add_topology_listener(self, listener: Callable) -> None:
        self.topology_listeners.append(listener)

    # -- data path ----------------------------------------------------------

    def inject(self, node: str, packet: Packet, ttl: Optional[int] = None) -> None:
        t = self.engine.now
        self.log.append(t, node, "pkt_inject", pid=packet.pid, kind=packet.kind,
                        name=packet.name, size=packet.size)
        self._process(node, packet,
                      self.params.default_ttl if ttl is None else ttl, None)

    def _process(self, node: str, packet: Packet, ttl: int, in_link) -> None:
        t = self.engine.now
        if ttl <= 0:
            self._drop(node, packet, "ttl_exceeded")
            return
        handler = self.handlers[node]
        egress, consumers, reason = handler.process(packet, ttl, in_link, t)
        if egress:
            # one incoming copy fans out to len(egress) forwarded copies,
            # plus one delivered locally when the handler also consumed it
            tapped = consumers is not None and consumers > 0
            surplus = len(egress) - 1 + (1 if tapped else 0)
            if surplus > 0:
                self.log.append(t, node, "pkt_branch", pid=packet.pid,
                                size=packet.size, extra=surplus)
            for link in egress:
                self._send(node, link, packet, ttl - 1)
            if tapped:
                self.log.append(t, node, "pkt_deliver", pid=packet.pid,
                                kind=packet.kind, size=packet.size,
                                consumers=consumers, spurious=False)
        elif consumers is not None:
            self.log.append(t, node, "pkt_deliver", pid=packet.pid,
                            kind=packet.kind, size=packet.size,
                            consumers=consumers, spurious=consumers == 0)
        else:
            self._drop(node, packet, reason or "no_egress")

    def _send(self, node: str, link: Link, packet: Packet, ttl: int) -> None:
        t = self.engine.now
        backlog_us = max(0, link.busy_until - t)
        if self.params.queue_cap_bytes is not None:
            backlog_bytes = backlog_us * link.capacity_bps // 8_000_000
            if backlog_bytes + packet.size > self.params.queue_cap_bytes:
                self._drop(node, packet, "queue_cap")
                return
        start = max(t, link.busy_until)
        tx_us = (packet.size * 8_000_000 + link.capacity_bps - 1) // link.capacity_bps
        link.busy_until = start + tx_us
        arrive = start + tx_us + link.latency_us
        self.log.append(t, node, "pkt_fwd", pid=packet.pid, kind=packet.kind,
                        link=link.key, size=packet.size, start=start,
                        arrive=arrive)
        self.link_tx_bytes[link.key] = self.link_tx_bytes.get(link.key, 0) + packet.size
        self.link_tx_pkts[link.key] = self.link_tx_pkts.get(link.key, 0) + 1
        peak = self.link_queue_peak.get(link.key, 0)
        if backlog_us > peak:
            self.link_queue_peak[link.key] = backlog_us
        self.engine.schedule(arrive - t, self._arrive, link, packet, ttl, start)

    def _arrive(self, link: Link, packet: Packet, ttl: int, start: int) -> None:
        # a link that went down (or bounced) while the packet was on the
        # wire loses the packet
        if not link.up or link.up_since > start:
            self._drop(link.dst, packet, "link_down", link=link.key)
            return
        self._process(link.dst, packet, ttl, link)

    def _drop(self, node: str, packet: Packet, reason: str, **extra) -> None:
        self.log.append(self.engine.now, node, "pkt_drop", pid=packet.pid,
                        kind=packet.kind, size=packet.size, reason=reason,
                        **extra)
        self.node_drops[node] = self.node_drops.get(node, 0) + 1

    # -- control path -------------------------------------------------------

    def set_link_state(self, physical: str, up: bool) -> TopologyEvent:
        """Fail or restore a physical link; listeners hear about it after
        the failure-detection delay."""
        t = self.engine.now
        event = self.topo.set_link_state(physical, up, t)
        self.log.append(t, physical, "link_state", up=up, epoch=self.topo.epoch)
        for listener in self.topology_listeners:
            self.engine.schedule(self.params.detection_delay_us, listener, event)
        return event

    def flush_counters(self) -> None:
        """Dump the convenience counters as telemetry samples."""
        t = self.engine.now
        for key in sorted(self.link_tx_bytes):
            self.telemetry.record(t, key, "tx_bytes", self.link_tx_bytes[key])
            self.telemetry.record(t, key, "tx_pkts", self.link_tx_pkts[key])
        for key in sorted(self.link_queue_peak):
            self.telemetry.record(t, key, "queue_peak_us", self.link_queue_peak[key])
        for node in sorted(self.node_drops):
            self.telemetry.record(t, node, "drops", self.node_drops[node])


# ---------------------------------------------------------------------------
# pure traversal (no event loop): used by invariant checks and tests

@dataclass
class DeliveryTrace:
    links_used: set = field(default_factory=set)
    sink_nodes: set = field(default_factory=set)
    dead_ends: set = field(default_factory=set)
    hops: int = 0


def trace_delivery(topo: TopologyGraph, link_ids: dict[str, LinkId],
                   fid: FID, origin: str, ttl: int = DEFAULT_TTL,
                   sinks: Optional[set] = None) -> DeliveryTrace:
    """Walk a FID through the topology without the event loop.

    Follows every up link whose identifier is covered by the FID, exactly
    like the per-packet forwarding decision, and reports the links used
    and the nodes where copies terminated.  sinks, when given, marks
    which terminating nodes count as deliveries rather than dead ends.
    """
    trace = DeliveryTrace()
    frontier = [(origin, ttl)]
    while frontier:
        node, hops_left = frontier.pop()
        egress = []
        if hops_left > 0:
            for link in topo.egress(node):
                if link.up and should_forward(fid, link_ids[link.key]):
                    egress.append(link)
        if not egress:
            if sinks is not None and node in sinks:
                trace.sink_nodes.add(node)
            elif sinks is None:
                trace.sink_nodes.add(node)
            else:
                trace.dead_ends.add(node)
            continue
        for link in egress:
            trace.links_used.add(link.key)
            trace.hops += 1
            frontier.append((link.dst, hops_left - 1))
    return trace
