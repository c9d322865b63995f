"""Static UAV topology and per-link physical-layer math.

Free-space path loss, single-link SNR, Shannon rate, per-hop energy and
per-hop link delay. Everything here is immutable once built; residual
energy is tracked by the environment.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .kernels import pairwise_distances

LIGHTSPEED = 299_792_458.0
# 20*log10(4*pi/c) for f in Hz and d in meters
FSPL_CONSTANT_DB = -147.55


class TopologyError(RuntimeError):
    """No connected scenario could be generated within the retry bound."""


class NotAdjacentError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelParams:
    frequency: float = 2.4e9
    bandwidth: float = 1e6
    tx_power: float = 0.1
    noise_power: float = 1e-13
    snr_min_db: float = 5.0
    circuit_energy: float = 5e-8
    lightspeed: float = LIGHTSPEED

    def __post_init__(self):
        for name in ("frequency", "bandwidth", "tx_power", "noise_power", "circuit_energy", "lightspeed"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)!r}")


@dataclass(frozen=True)
class UavNode:
    id: int
    x: float
    y: float
    residual_energy: float = 500.0
    proc_time: float = 0.01
    compute_load: float = 1e6

    @property
    def pos(self):
        return (self.x, self.y)


@dataclass(frozen=True)
class LinkMetrics:
    distance: float
    path_loss_db: float
    snr_linear: float
    snr_db: float
    rate: float
    tx_energy: float
    rx_energy: float
    hop_delay: float
    feasible: bool


@dataclass(frozen=True, eq=False)
class NetworkGraph:
    """Undirected range graph over the UAVs plus the destination node.

    ``nodes[destination]`` is the rescue center. ``source`` is the UAV that
    detects the event and starts the delivery.
    """

    nodes: tuple
    destination: int
    source: int
    o_max: float
    area: float
    dist: np.ndarray = field(repr=False)
    adjacency: np.ndarray = field(repr=False)
    neighbors: tuple = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_uav(self) -> int:
        return len(self.nodes) - 1

    @property
    def positions(self) -> np.ndarray:
        return np.array([n.pos for n in self.nodes], dtype=float)

    def edges(self):
        """Undirected edges as ``(i, j)`` with ``i < j``."""
        ii, jj = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(ii.tolist(), jj.tolist()))

    def is_adjacent(self, i: int, j: int) -> bool:
        return bool(self.adjacency[i, j])


def distance(a: UavNode, b: UavNode) -> float:
    dx = a.x - b.x
    dy = a.y - b.y
    return math.sqrt(dx * dx + dy * dy)


def path_loss_db(d: float, f: float) -> float:
    if d <= 0:
        raise ValueError(f"path loss is singular for non-positive distance {d!r}")
    if f <= 0:
        raise ValueError(f"frequency must be positive, got {f!r}")
    return 20.0 * math.log10(d) + 20.0 * math.log10(f) + FSPL_CONSTANT_DB


def snr(params: ChannelParams, pl_db: float):
    """Return ``(snr_linear, snr_db)`` for a link with the given path loss."""
    lin = params.tx_power * 10.0 ** (-pl_db / 10.0) / params.noise_power
    return lin, 10.0 * math.log10(lin) if lin > 0 else -math.inf


def shannon_rate(bandwidth: float, snr_linear: float) -> float:
    if snr_linear < 0:
        raise ValueError("snr_linear must be non-negative")
    return bandwidth * math.log2(1.0 + snr_linear)


def hop_energy(l_data: float, params: ChannelParams):
    """Return ``(tx_energy, rx_energy)`` in joules for one hop of ``l_data`` bits.

    Transmit airtime is ``l_data / bandwidth``, not ``l_data / rate``.
    """
    rx = l_data * params.circuit_energy
    tx = rx + params.tx_power * (l_data / params.bandwidth)
    return tx, rx


def hop_delay(l_data: float, rate: float, d: float, proc_time: float, lightspeed: float = LIGHTSPEED) -> float:
    if rate <= 0:
        raise ValueError("zero-rate link is infeasible")
    return proc_time + l_data / rate + d / lightspeed


def destination_delay(l_data: float, rate: float, d: float, lightspeed: float = LIGHTSPEED) -> float:
    """Last hop into the rescue center: no self-authentication term."""
    if rate <= 0:
        raise ValueError("zero-rate link is infeasible")
    return l_data / rate + d / lightspeed


def link_metrics(graph: NetworkGraph, params: ChannelParams, i: int, j: int, l_data: float) -> LinkMetrics:
    if not graph.is_adjacent(i, j):
        raise NotAdjacentError(f"nodes {i} and {j} are not within range")
    a, b = graph.nodes[i], graph.nodes[j]
    d = distance(a, b)
    pl = path_loss_db(d, params.frequency)
    lin, db = snr(params, pl)
    rate = shannon_rate(params.bandwidth, lin)
    tx, rx = hop_energy(l_data, params)
    delay = hop_delay(l_data, rate, d, a.proc_time, params.lightspeed)
    return LinkMetrics(d, pl, lin, db, rate, tx, rx, delay, db >= params.snr_min_db)


@dataclass(frozen=True, eq=False)
class LinkTable:
    """Dense per-arc tables for one packet size. Non-edges hold ``nan``.

    ``delay[i, j]`` is the charged delay of hop i->j: the full per-hop delay
    for relays, the destination delay when ``j`` is the destination.
    """

    l_data: float
    snr_db: np.ndarray
    rate: np.ndarray
    delay: np.ndarray
    tx_energy: float
    rx_energy: float
    feasible: np.ndarray

    @property
    def hop_energy(self) -> float:
        return self.tx_energy + self.rx_energy


def link_table(graph: NetworkGraph, params: ChannelParams, l_data: float) -> LinkTable:
    adj = graph.adjacency
    d = np.where(adj, graph.dist, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        pl = 20.0 * np.log10(d) + 20.0 * math.log10(params.frequency) + FSPL_CONSTANT_DB
        lin = params.tx_power * 10.0 ** (-pl / 10.0) / params.noise_power
        snr_db = 10.0 * np.log10(lin)
        rate = params.bandwidth * np.log2(1.0 + lin)
        proc = np.array([n.proc_time for n in graph.nodes])[:, None]
        airtime = l_data / rate + d / params.lightspeed
        delay = proc + airtime
    delay[:, graph.destination] = airtime[:, graph.destination]
    tx, rx = hop_energy(l_data, params)
    feasible = adj & (snr_db >= params.snr_min_db)
    for arr in (snr_db, rate, delay, feasible):
        arr.setflags(write=False)
    return LinkTable(l_data, snr_db, rate, delay, tx, rx, feasible)


def pick_source(dist: np.ndarray, destination: int, source_distance: Optional[float] = None) -> int:
    """UAV whose distance to the destination is closest to ``source_distance``.

    ``None`` picks the UAV farthest from the destination. Ties go to the lower id.
    """
    uav = [i for i in range(dist.shape[0]) if i != destination]
    if source_distance is None:
        return max(uav, key=lambda i: (dist[i, destination], -i))
    return min(uav, key=lambda i: (abs(dist[i, destination] - source_distance), i))


def build_graph(nodes: Sequence[UavNode], destination: int, o_max: float, area: float,
                source: Optional[int] = None, source_distance: Optional[float] = None) -> NetworkGraph:
    pos = np.array([n.pos for n in nodes], dtype=float)
    dist = pairwise_distances(pos)
    adj = dist <= o_max
    np.fill_diagonal(adj, False)
    if source is None:
        source = pick_source(dist, destination, source_distance)
    neighbors = tuple(tuple(np.flatnonzero(adj[i]).tolist()) for i in range(len(nodes)))
    dist.setflags(write=False)
    adj.setflags(write=False)
    return NetworkGraph(tuple(nodes), destination, source, float(o_max), float(area), dist, adj, neighbors)


def reachable(graph: NetworkGraph, src: int, dst: int) -> bool:
    seen = {src}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            return True
        for v in graph.neighbors[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return False


def generate_topology(seed, n: int = 40, m: float = 1200.0, o_max: float = 200.0,
                      dest_pos=None, *, source_distance: Optional[float] = None, min_separation: float = 1.0, max_retries: int = 100,
                      residual_energy: float = 500.0, proc_time: float = 0.01,
                      compute_load: float = 1e6) -> NetworkGraph:
    """Place ``n`` UAVs uniformly in ``[0, m]^2`` plus a fixed destination.

    ``seed`` is an int or a sequence of ints. Attempt ``k`` draws from
    ``default_rng([*seed, k])``; the first attempt whose
    source reaches the destination wins. See :func:`pick_source` for the
    source rule.
    """
    if n < 2:
        raise ValueError("need at least two UAVs")
    if dest_pos is None:
        dest_pos = (m, m / 2.0)
    dest = np.asarray(dest_pos, dtype=float)
    entropy = [int(s) for s in np.atleast_1d(seed)]
    for attempt in range(max_retries):
        rng = np.random.default_rng(entropy + [attempt])
        pos = np.empty((n, 2))
        for i in range(n):
            while True:
                p = rng.uniform(0.0, m, size=2)
                others = np.vstack([pos[:i], dest[None, :]])
                if np.all(np.hypot(*(others - p).T) >= min_separation):
                    pos[i] = p
                    break
        nodes = [UavNode(i, float(pos[i, 0]), float(pos[i, 1]), residual_energy, proc_time, compute_load)
                 for i in range(n)]
        nodes.append(UavNode(n, float(dest[0]), float(dest[1]), residual_energy, 0.0, 0.0))
        graph = build_graph(nodes, n, o_max, m, source_distance=source_distance)
        if reachable(graph, graph.source, graph.destination):
            return graph
    raise TopologyError(f"no connected topology after {max_retries} attempts (seed={seed})")


def write_topology_csv(graph: NetworkGraph, path) -> None:
    """Rows: ``meta,<key>,<value>``, ``node,<id>,<x>,<y>``, ``edge,<i>,<j>``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["meta", "o_max", repr(graph.o_max)])
        w.writerow(["meta", "area", repr(graph.area)])
        w.writerow(["meta", "destination", graph.destination])
        w.writerow(["meta", "source", graph.source])
        for node in graph.nodes:
            w.writerow(["node", node.id, repr(node.x), repr(node.y)])
        for i, j in graph.edges():
            w.writerow(["edge", i, j])


def read_topology_csv(path, **node_defaults) -> NetworkGraph:
    meta, coords, edges = {}, [], set()
    with open(Path(path), newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            kind = row[0]
            if kind == "meta":
                meta[row[1]] = row[2]
            elif kind == "node":
                coords.append((int(row[1]), float(row[2]), float(row[3])))
            elif kind == "edge":
                edges.add((int(row[1]), int(row[2])))
            else:
                raise ValueError(f"unknown row type {kind!r}")
    dest = int(meta["destination"])
    nodes = [UavNode(i, x, y, **node_defaults) for i, x, y in sorted(coords)]
    graph = build_graph(nodes, dest, float(meta["o_max"]), float(meta["area"]), int(meta["source"]))
    if set(graph.edges()) != edges:
        raise ValueError("edge list does not match node geometry and o_max")
    return graph
