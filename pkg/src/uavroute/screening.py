"""Beam-search pre-selection of high-security candidate paths.

Paths grow hop by hop from the source. An extension is admissible only if
the new node passes the node constraints (security degree, residual energy,
not excluded), the link passes the SNR and range constraints, the node is
strictly closer to the destination than the current head, and the
destination is still reachable from it within the remaining hop budget.
Candidates are ranked by mean security degree; ties go to fewer hops, then
to the lexicographically smaller node sequence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .netmodel import LinkTable, NetworkGraph
from .trust import TrustState, security_degrees


class NoFeasiblePathError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScreeningParams:
    beam_width: int = 60
    max_hops: int = 15
    theta_sd: float = 0.5
    energy_threshold: float = 1.0

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.max_hops < 1:
            raise ValueError("max_hops must be >= 1")


@dataclass(frozen=True)
class CandidatePath:
    nodes: Tuple[int, ...]
    avg_sd: float
    complete: bool

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    def sort_key(self):
        return (-self.avg_sd, len(self.nodes), self.nodes)


@dataclass(frozen=True)
class ScreenedSubgraph:
    """Union of the screened paths. ``e_opt`` holds directed arcs in path order."""

    v_opt: frozenset
    e_opt: frozenset
    paths: Tuple[CandidatePath, ...]
    source: int
    destination: int

    @classmethod
    def from_paths(cls, paths: Iterable[CandidatePath], source: int, destination: int) -> "ScreenedSubgraph":
        paths = tuple(sorted(paths, key=CandidatePath.sort_key))
        v = frozenset(n for p in paths for n in p.nodes)
        e = frozenset(a for p in paths for a in zip(p.nodes[:-1], p.nodes[1:]))
        return cls(v, e, paths, source, destination)

    @property
    def empty(self) -> bool:
        return not self.paths

    def successors(self, node: int) -> List[int]:
        return sorted(j for i, j in self.e_opt if i == node)

    def max_out_degree(self) -> int:
        counts = {}
        for i, _ in self.e_opt:
            counts[i] = counts.get(i, 0) + 1
        return max(counts.values(), default=0)


@dataclass(frozen=True, eq=False)
class Feasibility:
    """Per-node and per-link admissibility for one screening run."""

    graph: NetworkGraph
    sd: np.ndarray
    node_ok: np.ndarray
    link_ok: np.ndarray

    def hops_to(self, destination: int) -> np.ndarray:
        """Fewest admissible hops from each node to ``destination`` (``inf`` if none).

        Admissible arcs form a DAG ordered by distance to the destination, so
        one pass in that order is exact.
        """
        n = self.graph.n_nodes
        dist_d = self.graph.dist[:, destination]
        hops = np.full(n, np.inf)
        hops[destination] = 0.0
        for v in np.argsort(dist_d, kind="stable"):
            if v == destination or not self.node_ok[v]:
                continue
            for w in self.graph.neighbors[v]:
                if hops[w] + 1 < hops[v] and self.link_ok[v, w] and directional_filter(self.graph, v, w, destination):
                    hops[v] = hops[w] + 1
        return hops


def feasibility(graph: NetworkGraph, trust: TrustState, links: LinkTable, params: ScreeningParams,
                residual: Optional[np.ndarray] = None, excluded: Iterable[int] = ()) -> Feasibility:
    sd = security_degrees(trust, graph)
    if residual is None:
        residual = np.array([n.residual_energy for n in graph.nodes])
    node_ok = (np.nan_to_num(sd, nan=-1.0) >= params.theta_sd) & (residual >= params.energy_threshold)
    for v in excluded:
        node_ok[v] = False
    link_ok = links.feasible & (graph.dist <= graph.o_max)
    return Feasibility(graph, sd, node_ok, link_ok)


def score_path(path: Sequence[int], sd) -> float:
    if len(path) == 0:
        raise ValueError("cannot score an empty path")
    return math.fsum(float(sd[v]) for v in path) / len(path)


def directional_filter(graph: NetworkGraph, current: int, candidate: int, destination: int) -> bool:
    if candidate == destination:
        return True
    return bool(graph.dist[candidate, destination] < graph.dist[current, destination])


def extensions(path: CandidatePath, feas: Feasibility, destination: int, hops_left: int,
               hops_to_dest: Optional[np.ndarray] = None) -> List[CandidatePath]:
    """All admissible one-hop extensions of ``path`` with ``hops_left`` hops remaining after it."""
    head = path.nodes[-1]
    out = []
    for w in feas.graph.neighbors[head]:
        if w in path.nodes or not feas.node_ok[w] or not feas.link_ok[head, w]:
            continue
        if not directional_filter(feas.graph, head, w, destination):
            continue
        if hops_to_dest is not None and hops_to_dest[w] > hops_left:
            continue
        nodes = path.nodes + (w,)
        out.append(CandidatePath(nodes, score_path(nodes, feas.sd), w == destination))
    return out


def expand_beam(beam: Sequence[CandidatePath], feas: Feasibility, destination: int, beam_width: int,
                hops_left: int = 10**9, hops_to_dest: Optional[np.ndarray] = None) -> List[CandidatePath]:
    """Extend every partial path by one hop and keep the best ``beam_width`` extensions."""
    cands = []
    for p in beam:
        cands.extend(extensions(p, feas, destination, hops_left, hops_to_dest))
    cands.sort(key=CandidatePath.sort_key)
    return cands[:beam_width]


def beam_search(feas: Feasibility, source: int, destination: int, beam_width: int = 60,
                max_hops: int = 15) -> ScreenedSubgraph:
    if source == destination:
        raise ValueError("source and destination must differ")
    if not feas.node_ok[source]:
        raise NoFeasiblePathError(f"source {source} violates the node constraints")
    hops_to_dest = feas.hops_to(destination)
    start = CandidatePath((source,), score_path((source,), feas.sd), False)
    beam = [start]
    found = []
    for h in range(1, max_hops + 1):
        if not beam:
            break
        beam = expand_beam(beam, feas, destination, beam_width, max_hops - h, hops_to_dest)
        found.extend(p for p in beam if p.complete)
        beam = [p for p in beam if not p.complete]
    if not found:
        raise NoFeasiblePathError(f"no feasible path from {source} to {destination} within {max_hops} hops")
    return ScreenedSubgraph.from_paths(found, source, destination)


def screen(graph: NetworkGraph, trust: TrustState, links: LinkTable, params: ScreeningParams,
           source: Optional[int] = None, residual=None, excluded: Iterable[int] = ()) -> ScreenedSubgraph:
    feas = feasibility(graph, trust, links, params, residual, excluded)
    src = graph.source if source is None else source
    return beam_search(feas, src, graph.destination, params.beam_width, params.max_hops)


def prune_subgraph(sub: ScreenedSubgraph, attacked: Iterable[int]) -> ScreenedSubgraph:
    attacked = set(attacked)
    if not attacked & sub.v_opt:
        return sub
    keep = [p for p in sub.paths if not attacked.intersection(p.nodes)]
    return ScreenedSubgraph.from_paths(keep, sub.source, sub.destination)
