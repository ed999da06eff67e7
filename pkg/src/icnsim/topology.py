"""Directed multigraph of forwarding elements.

A physical link between two nodes is modelled as two independent directed
links that fail together.  Parallel physical links between the same node
pair are allowed (e.g. a primary and a backup trunk); deterministic
tie-breaks therefore order links by insertion index, and nodes by their
insertion index as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

ROLE_FN = "fn"
ROLE_NAP = "nap"
ROLE_PCE = "pce"
ROLES = (ROLE_FN, ROLE_NAP, ROLE_PCE)


@dataclass
class Node:
    name: str
    role: str
    index: int


@dataclass
class Link:
    """One direction of a physical link."""

    key: str
    physical: str
    src: str
    dst: str
    capacity_bps: int
    latency_us: int
    index: int
    up: bool = True
    # time the link last transitioned to up; packets whose transmission
    # started before this are treated as lost in flight
    up_since: int = 0
    # serialization queue tail (absolute virtual time)
    busy_until: int = 0


@dataclass
class TopologyEvent:
    """State change of a physical link, as reported to control planes."""

    physical: str
    up: bool
    at_us: int
    directed_keys: tuple = field(default_factory=tuple)


class TopologyGraph:
    """Mutable topology with an epoch counter bumped on every link event."""

    def __init__(self):
        self.nodes: dict[str, Node] = {}
        self.links: dict[str, Link] = {}
        self.physical: dict[str, tuple[str, str]] = {}
        self._egress: dict[str, list[str]] = {}
        self.epoch: int = 0

    def add_node(self, name: str, role: str) -> Node:
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        if name in self.nodes:
            raise ValueError(f"duplicate node {name!r}")
        node = Node(name, role, len(self.nodes))
        self.nodes[name] = node
        self._egress[name] = []
        return node

    def add_link(self, physical: str, a: str, b: str,
                 capacity_bps: int, latency_us: int) -> tuple[str, str]:
        """Add a bidirectional physical link as two directed links."""
        if physical in self.physical:
            raise ValueError(f"duplicate link {physical!r}")
        for end in (a, b):
            if end not in self.nodes:
                raise ValueError(f"link {physical!r} references unknown node {end!r}")
        if capacity_bps <= 0 or latency_us < 0:
            raise ValueError(f"link {physical!r} has invalid capacity/latency")
        key_ab = f"{physical}:{a}->{b}"
        key_ba = f"{physical}:{b}->{a}"
        for key, src, dst in ((key_ab, a, b), (key_ba, b, a)):
            link = Link(key, physical, src, dst, capacity_bps, latency_us,
                        index=len(self.links))
            self.links[key] = link
            self._egress[src].append(key)
        self.physical[physical] = (key_ab, key_ba)
        return key_ab, key_ba

    def egress(self, node: str) -> list[Link]:
        """Egress links of a node, in insertion order."""
        return [self.links[k] for k in self._egress[node]]

    def set_link_state(self, physical: str, up: bool, at_us: int = 0) -> TopologyEvent:
        """Flip both directions of a physical link; bumps the epoch."""
        keys = self.physical.get(physical)
        if keys is None:
            raise KeyError(f"unknown physical link {physical!r}")
        for k in keys:
            link = self.links[k]
            if up and not link.up:
                link.up_since = at_us
            link.up = up
        self.epoch += 1
        return TopologyEvent(physical, up, at_us, keys)

    def sorted_link_keys(self) -> list[str]:
        """Directed link keys in insertion order (stable across runs)."""
        return sorted(self.links, key=lambda k: self.links[k].index)

    def node_list(self) -> list[Node]:
        return sorted(self.nodes.values(), key=lambda n: n.index)
