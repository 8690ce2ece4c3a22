"""Electrical model of the tube network.

A ConductiveNetwork is a labelled multigraph of plasmodial tubes (parallel
tubes stay distinct edges so they can be counted). Effective two-terminal
resistance comes from nodal analysis on the conductance Laplacian, with
each terminal's agar blob added in series; the output circuit is a plain
voltage divider against the load resistor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .scene import Scene

OPEN = math.inf


@dataclass(frozen=True)
class NetworkEdge:
    a: str
    b: str
    length_mm: float
    conductance_s: float
    mean_trail: float = 0.0


@dataclass
class ConductiveNetwork:
    nodes: dict  # label -> (x, y) mm
    edges: list  # of NetworkEdge; parallel tubes appear as distinct entries

    def has_node(self, label: str) -> bool:
        return label in self.nodes

    def adjacency(self) -> dict:
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for e in self.edges:
            adj.setdefault(e.a, set()).add(e.b)
            adj.setdefault(e.b, set()).add(e.a)
        return adj

    def connected(self, a: str, b: str) -> bool:
        if a not in self.nodes or b not in self.nodes:
            return False
        adj = self.adjacency()
        seen = {a}
        stack = [a]
        while stack:
            u = stack.pop()
            if u == b:
                return True
            for v in adj.get(u, ()):
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return False


@dataclass(frozen=True)
class OutputReading:
    resistance_ohm: float  # math.inf when open
    output_voltage: float
    logic_level: int
    tubule_count: int = 0

    @property
    def is_open(self) -> bool:
        return math.isinf(self.resistance_ohm)


def network_resistance(network: ConductiveNetwork, a: str, b: str) -> float:
    """Effective resistance between two nodes of the tube graph alone, by
    direct linear solve on the grounded conductance Laplacian. OPEN when the
    nodes are not connected."""
    if a == b:
        return 0.0
    if not network.connected(a, b):
        return OPEN
    # Restrict to the component containing the terminals: floating
    # subgraphs elsewhere would make the grounded Laplacian singular.
    adj = network.adjacency()
    comp = {a}
    stack = [a]
    while stack:
        u = stack.pop()
        for v in adj.get(u, ()):
            if v not in comp:
                comp.add(v)
                stack.append(v)
    names = sorted(comp)
    idx = {n: i for i, n in enumerate(names)}
    n = len(names)
    lap = np.zeros((n, n))
    for e in network.edges:
        if e.a not in comp or e.b not in comp:
            continue
        i, j = idx[e.a], idx[e.b]
        g = e.conductance_s
        if i == j:
            continue  # self-loops carry no two-terminal current
        lap[i, i] += g
        lap[j, j] += g
        lap[i, j] -= g
        lap[j, i] -= g
    ia, ib = idx[a], idx[b]
    keep = [i for i in range(n) if i != ib]
    reduced = lap[np.ix_(keep, keep)]
    rhs = np.zeros(n - 1)
    rhs[keep.index(ia)] = 1.0
    v = np.linalg.solve(reduced, rhs)
    return float(v[keep.index(ia)])


def path_resistance(
    network: ConductiveNetwork,
    scene: Scene,
    frm: str,
    to: str,
) -> float:
    """Two-terminal resistance seen by the output circuit: tube network
    between the electrodes plus each terminal's agar blob in series. OPEN
    when no tube path exists."""
    scene.electrode(frm)
    scene.electrode(to)
    core = network_resistance(network, frm, to)
    if math.isinf(core):
        return OPEN
    total = core
    for terminal in (frm, to):
        blob = scene.blob_on(terminal)
        if blob is not None:
            total += blob.resistance_ohm
    return total


def read_output(
    resistance_ohm: float,
    supply_voltage: float = 9.0,
    load_ohm: float = 10_000.0,
    logic_threshold: float = 0.5,
) -> OutputReading:
    """Voltage divider: V_out = V * load / (load + R); an open path reads
    0 V. Logic 1 iff the output clears the threshold."""
    if supply_voltage <= 0:
        raise ValueError("supply_voltage must be positive")
    if load_ohm <= 0:
        raise ValueError("load must be positive")
    if math.isinf(resistance_ohm):
        v = 0.0
    else:
        v = supply_voltage * load_ohm / (load_ohm + resistance_ohm)
    return OutputReading(resistance_ohm, v, 1 if v >= logic_threshold else 0)


def with_tubules(reading: OutputReading, count: int) -> OutputReading:
    return replace(reading, tubule_count=count)


def count_tubules(network: ConductiveNetwork, frm: str, to: str) -> int:
    """Number of edge-disjoint tube paths between the electrodes: max flow
    with unit capacity per physical tube edge."""
    if frm not in network.nodes or to not in network.nodes or frm == to:
        return 0
    import networkx as nx

    g = nx.DiGraph()
    g.add_nodes_from(network.nodes)
    for e in network.edges:
        if e.a == e.b:
            continue
        for u, v in ((e.a, e.b), (e.b, e.a)):
            if g.has_edge(u, v):
                g[u][v]["capacity"] += 1
            else:
                g.add_edge(u, v, capacity=1)
    return int(nx.maximum_flow_value(g, frm, to))
