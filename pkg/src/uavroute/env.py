"""Episodic next-hop routing environment.

One episode delivers one packet from the source UAV to the rescue center.
The agent picks a neighbour slot at every hop. Hidden attacked UAVs are
detected when the packet reaches them; the detection is written to the
ledger, the packet rolls back to the previous (cached) UAV, and the SDN
controller recomputes the route. Delay and energy are booked per hop and
per controller interaction so an :class:`EpisodeTrace` can be replayed into
the same totals.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .ledger import Ledger
from .netmodel import ChannelParams, LinkTable, NetworkGraph, link_table
from .screening import (NoFeasiblePathError, ScreenedSubgraph, ScreeningParams, beam_search,
                        feasibility, prune_subgraph)
from .trust import TrustParams, TrustState, record_authentication, security_degrees, seed_history

# features per neighbour slot: SD, normalised delay, normalised energy, distance to destination
SLOT_FEATURES = 4
GLOBAL_FEATURES = 5


class ContractViolation(RuntimeError):
    """The caller broke the environment protocol (e.g. picked a masked slot)."""


class InvalidSubgraphError(ValueError):
    pass


@dataclass(frozen=True)
class SdnConfig:
    controller_positions: Optional[Tuple[Tuple[float, float], ...]] = None
    clock_freq: float = 1e9
    query_time: float = 0.005
    routing_packet_size: float = 1e4
    ctrl_bandwidth: float = 1e6
    event_packet_size: float = 1e3

    def __post_init__(self):
        if self.clock_freq <= 0 or self.ctrl_bandwidth <= 0:
            raise ValueError("clock_freq and ctrl_bandwidth must be positive")
        if self.controller_positions is not None and len(self.controller_positions) != 3:
            raise ValueError("exactly three SDN controllers are modelled")

    def controllers(self, area: float):
        if self.controller_positions is not None:
            return np.asarray(self.controller_positions, dtype=float)
        return np.array([(0.0, 0.0), (area, 0.0), (0.0, area)])


@dataclass(frozen=True)
class AttackConfig:
    n_attacked: int = 0
    reroute_limit: int = 2
    weighting: str = "uniform"

    def __post_init__(self):
        if self.n_attacked < 0 or self.reroute_limit < 0:
            raise ValueError("n_attacked and reroute_limit must be non-negative")
        if self.weighting not in ("risk", "uniform"):
            raise ValueError("weighting must be 'risk' or 'uniform'")


@dataclass(frozen=True)
class EnvConfig:
    packet_bits: float = 1e6
    lambda_r: float = 0.5
    max_hops: int = 15
    max_slots: Optional[int] = None

    def __post_init__(self):
        if self.packet_bits <= 0:
            raise ValueError("packet_bits must be positive")
        if not 0.0 <= self.lambda_r <= 1.0:
            raise ValueError("lambda_r must lie in [0, 1]")


# -- SDN delay components ----------------------------------------------------

def processing_time(graph: NetworkGraph, sdn: SdnConfig) -> float:
    """Controller time to compute SD for every UAV: sum of C_n / f_SDN."""
    return math.fsum(n.compute_load / sdn.clock_freq for n in graph.nodes if n.id != graph.destination)


def process_delay(graph: NetworkGraph, sdn: SdnConfig) -> float:
    return sdn.query_time + processing_time(graph, sdn)


def response_delay(sdn: SdnConfig) -> float:
    return sdn.routing_packet_size / sdn.ctrl_bandwidth


def request_delay(graph: NetworkGraph, sdn: SdnConfig, node: int, lightspeed: float) -> float:
    ctrl = sdn.controllers(graph.area)
    p = np.array(graph.nodes[node].pos)
    d = float(np.min(np.hypot(*(ctrl - p).T)))
    return sdn.event_packet_size / sdn.ctrl_bandwidth + d / lightspeed


# -- scenario ----------------------------------------------------------------

@dataclass(eq=False)
class Scenario:
    """A topology with its channel, hidden per-node risk and authentication history."""

    graph: NetworkGraph
    channel: ChannelParams
    trust: TrustState
    ledger: Ledger
    risks: np.ndarray


def build_scenario(graph: NetworkGraph, channel: ChannelParams = ChannelParams(),
                   trust_params: TrustParams = TrustParams(), seed: int = 0,
                   history_events: int = 10, risk_shape=(0.5, 3.0)) -> Scenario:
    """Draw per-UAV compromise risk and replay a prior authentication history.

    Risk is Beta-distributed; the source and destination carry zero risk.
    """
    rng = np.random.default_rng(seed)
    risks = rng.beta(risk_shape[0], risk_shape[1], size=graph.n_nodes)
    risks[graph.source] = 0.0
    risks[graph.destination] = 0.0
    trust = TrustState.initial(graph.n_nodes, trust_params)
    ledger = Ledger()
    seed_history(ledger, trust, risks, history_events, rng)
    return Scenario(graph, channel, trust, ledger, risks)


def sample_attacked(scenario: Scenario, n_attacked: int, rng, weighting: str = "uniform") -> frozenset:
    """Attacked UAVs drawn without replacement, uniformly or weighted by hidden risk.

    Exponential keys are used for both; the draw consumes a fixed number of variates, so for one seed the sets
    are nested in ``n_attacked``.
    """
    g = scenario.graph
    cand = np.array([i for i in range(g.n_nodes) if i not in (g.source, g.destination)])
    u = rng.random(len(cand))
    if n_attacked == 0:
        return frozenset()
    if n_attacked > len(cand):
        raise ValueError("more attacked nodes requested than eligible UAVs")
    if weighting == "risk":
        w = scenario.risks[cand] + 1e-3
    else:
        w = np.ones(len(cand))
    keys = np.log(u) / w
    order = np.lexsort((cand, -keys))
    return frozenset(cand[order[:n_attacked]].tolist())


# -- trace -------------------------------------------------------------------

@dataclass(frozen=True)
class HopRecord:
    index: int
    src: int
    dst: int
    delay: float
    tx_energy: float
    rx_energy: float
    segment: int
    to_destination: bool
    attacked: bool

    @property
    def energy(self) -> float:
        return self.tx_energy + self.rx_energy


@dataclass(frozen=True)
class RerouteEvent:
    hop_index: int
    attacked_node: int
    rollback_node: int
    t_proc: float
    t_resp: float
    recomputed: bool


@dataclass
class EpisodeTrace:
    t_req: float
    t_proc: float
    t_resp: float
    hops: List[HopRecord] = field(default_factory=list)
    reroutes: List[RerouteEvent] = field(default_factory=list)
    success: bool = False
    failure: Optional[str] = None
    detections: int = 0
    reward_sum: float = 0.0
    total_delay_s: float = 0.0
    total_energy_J: float = 0.0

    @property
    def n_reroutes(self) -> int:
        return len(self.reroutes)

    @property
    def path(self) -> List[int]:
        return [h.src for h in self.hops] + ([self.hops[-1].dst] if self.hops else [])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["hop", "from", "to", "delay_s", "energy_J", "segment", "to_destination", "attacked"])
        for h in self.hops:
            w.writerow([h.index, h.src, h.dst, repr(h.delay), repr(h.energy), h.segment,
                        int(h.to_destination), int(h.attacked)])
        for e in self.reroutes:
            w.writerow(["reroute", e.hop_index, e.attacked_node, e.rollback_node, repr(e.t_proc),
                        repr(e.t_resp), int(e.recomputed)])
        w.writerow(["summary", int(self.success), repr(self.total_delay_s), repr(self.total_energy_J),
                    self.n_reroutes, self.failure or ""])
        return buf.getvalue()


def delay_components(trace: EpisodeTrace) -> dict:
    """Split a trace into the controller terms, per-segment relay delay and the final hop."""
    n_seg = trace.n_reroutes + 1
    eted = [math.fsum(h.delay for h in trace.hops if h.segment == s and not h.to_destination)
            for s in range(n_seg)]
    t_des = math.fsum(h.delay for h in trace.hops if h.to_destination)
    return {
        "t_req": trace.t_req,
        "t_proc": trace.t_proc,
        "t_resp": trace.t_resp,
        "t_eted": eted[0],
        "t_des": t_des,
        "rerouting": [(e.t_proc, e.t_resp, eted[k + 1]) for k, e in enumerate(trace.reroutes)],
    }


def total_delay(trace: EpisodeTrace) -> float:
    c = delay_components(trace)
    terms = [c["t_req"], c["t_proc"], c["t_resp"], c["t_eted"], c["t_des"]]
    for t_proc, t_resp, t_eted in c["rerouting"]:
        terms.extend((t_proc, t_resp, t_eted))
    return math.fsum(terms)


def total_energy(trace: EpisodeTrace) -> float:
    return math.fsum(h.energy for h in trace.hops)


def hop_reward(delay: float, energy: float, delay_scale: float, energy_scale: float, lambda_r: float) -> float:
    """Negative weighted hop cost with delay and energy scaled by their largest arc values."""
    return -(lambda_r * delay / delay_scale + (1.0 - lambda_r) * energy / energy_scale)


# -- environment -------------------------------------------------------------

@dataclass
class EnvState:
    features: np.ndarray
    mask: np.ndarray
    slots: Tuple[int, ...]


class RoutingEnv:
    """Next-hop routing MDP on a screened subgraph or, with ``sub=None``, the full graph."""

    def __init__(self, scenario: Scenario, sub: Optional[ScreenedSubgraph] = None,
                 env_cfg: EnvConfig = EnvConfig(), attack: AttackConfig = AttackConfig(),
                 sdn: SdnConfig = SdnConfig(), screening: ScreeningParams = ScreeningParams()):
        g = scenario.graph
        if sub is not None:
            if sub.empty or sub.source != g.source or sub.destination != g.destination:
                raise InvalidSubgraphError("subgraph must hold at least one source-to-destination path")
        self.scenario = scenario
        self.graph = g
        self.base_sub = sub
        self.screened = sub is not None
        self.cfg = env_cfg
        self.attack = attack
        self.sdn = sdn
        self.screening = screening
        self.links: LinkTable = link_table(g, scenario.channel, env_cfg.packet_bits)
        self._init_energy = np.array([n.residual_energy for n in g.nodes], dtype=float)
        self.t_proc = process_delay(g, sdn)
        self.t_resp = response_delay(sdn)
        self.t_req = request_delay(g, sdn, g.source, scenario.channel.lightspeed)

        if self.screened:
            arcs = list(sub.e_opt)
            degree = sub.max_out_degree()
        else:
            arcs = [(i, j) for i in range(g.n_nodes) if i != g.destination
                    for j in g.neighbors[i] if self.links.feasible[i, j]]
            degree = int(g.adjacency.sum(axis=1).max())
        self.delay_scale = max(float(self.links.delay[i, j]) for i, j in arcs)
        self.energy_scale = self.links.hop_energy
        self.n_slots = env_cfg.max_slots or max(degree, 1)
        self.obs_dim = GLOBAL_FEATURES + SLOT_FEATURES * self.n_slots
        self._dist_d = g.dist[:, g.destination] / g.area
        self.rng = np.random.default_rng()
        self.done = True

    # -- protocol --------------------------------------------------------

    def reset(self, seed=None) -> EnvState:
        g = self.graph
        self.rng = np.random.default_rng(seed)
        self.trust = self.scenario.trust.copy()
        self.ledger = self.scenario.ledger.copy()
        self._sd = None
        self.residual = self._init_energy.copy()
        self.attacked = sample_attacked(self.scenario, self.attack.n_attacked, self.rng, self.attack.weighting)
        self.detected = set()
        self.sub = self.base_sub
        self.current = g.source
        self.walk = [g.source]
        self.hops = 0
        self.segment = 0
        self.trace = EpisodeTrace(self.t_req, self.t_proc, self.t_resp)
        self._delay_terms = [self.t_req, self.t_proc, self.t_resp]
        self._energy_terms = []
        self.clock = math.fsum(self._delay_terms)
        self.done = False
        self.state = self._observe()
        if not self.state.mask.any():
            self._finish(False, "no_path")
        return self.state

    def step(self, action: int):
        if self.done:
            raise ContractViolation("step() called on a finished episode")
        if not (0 <= action < self.n_slots) or not self.state.mask[action]:
            raise ContractViolation(f"slot {action} is masked out")
        g = self.graph
        i = self.current
        j = self.state.slots[action]
        if not self._arc_admissible(i, j):
            raise ContractViolation(f"arc {i}->{j} no longer satisfies the routing constraints")
        to_dest = j == g.destination
        delay = float(self.links.delay[i, j])
        tx, rx = self.links.tx_energy, self.links.rx_energy
        self.residual[i] -= tx
        self.residual[j] -= rx
        self.hops += 1
        is_attacked = j in self.attacked
        rec = HopRecord(self.hops, i, j, delay, tx, rx, self.segment, to_dest, is_attacked)
        self.trace.hops.append(rec)
        self._delay_terms.append(delay)
        self._energy_terms.append(tx + rx)
        self.clock += delay
        reward = hop_reward(delay, tx + rx, self.delay_scale, self.energy_scale, self.cfg.lambda_r)
        self.trace.reward_sum += reward
        info = {"from": i, "to": j, "delay": delay, "energy": tx + rx}

        if to_dest:
            self.current = j
            self._finish(True, None)
            return self.state, reward, True, info

        record_authentication(self.ledger, self.trust, j, self.hops, int(is_attacked), self.clock)
        self._sd = None
        if is_attacked:
            info["reroute"] = self._reroute(i, j)
        else:
            self.current = j
            self.walk.append(j)

        if not self.done:
            if self.hops >= self.cfg.max_hops:
                self._finish(False, "hop_budget")
            else:
                self.state = self._observe()
                if not self.state.mask.any():
                    self._finish(False, "no_path")
        if self.done:
            info["failure"] = self.trace.failure
        return self.state, reward, self.done, info

    # -- internals -------------------------------------------------------

    def _reroute(self, prev: int, attacked: int) -> dict:
        self.detected.add(attacked)
        self.current = prev
        self.trace.detections += 1
        if self.trace.detections > self.attack.reroute_limit:
            self._finish(False, "reroute_limit")
            return {"attacked": attacked, "rollback": prev, "terminated": True}
        recomputed = False
        rollback = prev
        if self.screened:
            self.sub = prune_subgraph(self.sub, self.detected)
            if not self.candidates(prev):
                recomputed = True
                self.sub = None
                feas = feasibility(self.graph, self.trust, self.links, self.screening, self.residual, self.detected)
                budget = min(self.cfg.max_hops - self.hops, self.screening.max_hops)
                # every UAV already on the walk holds the data cache; retry from the latest one
                for k in range(len(self.walk) - 1, -1, -1) if budget >= 1 else ():
                    try:
                        self.sub = beam_search(feas, self.walk[k], self.graph.destination,
                                               self.screening.beam_width, budget)
                    except NoFeasiblePathError:
                        continue
                    rollback = self.walk[k]
                    del self.walk[k + 1:]
                    break
        self.current = rollback
        event = RerouteEvent(self.hops, attacked, rollback, self.t_proc, self.t_resp, recomputed)
        self.trace.reroutes.append(event)
        self.segment += 1
        self._delay_terms.extend((self.t_proc, self.t_resp))
        self.clock += self.t_proc + self.t_resp
        if self.screened and self.sub is None:
            self._finish(False, "no_path")
        return {"attacked": attacked, "rollback": rollback, "recomputed": recomputed}

    def _finish(self, success: bool, failure: Optional[str]) -> None:
        self.done = True
        self.trace.success = success
        self.trace.failure = failure
        self.trace.total_delay_s = math.fsum(self._delay_terms)
        self.trace.total_energy_J = math.fsum(self._energy_terms)
        self.state = EnvState(np.zeros(self.obs_dim), np.zeros(self.n_slots, dtype=bool), ())

    @property
    def security_degrees(self) -> np.ndarray:
        if self._sd is None:
            self._sd = security_degrees(self.trust, self.graph)
        return self._sd

    def _arc_admissible(self, i: int, j: int) -> bool:
        s = self.screening
        links = self.links
        if j in self.detected or not links.feasible[i, j]:
            return False
        if self.residual[i] < max(s.energy_threshold, links.tx_energy):
            return False
        if self.residual[j] < max(s.energy_threshold, links.rx_energy):
            return False
        if self.screened and j != self.graph.destination and not self.security_degrees[j] >= s.theta_sd:
            return False
        return True

    def candidates(self, node: int) -> List[int]:
        if self.screened:
            nbrs = self.sub.successors(node)
        else:
            nbrs = self.graph.neighbors[node]
        ok = [j for j in nbrs if self._arc_admissible(node, j)]
        ok.sort(key=lambda j: (self._dist_d[j], j))
        return ok[:self.n_slots]

    def _observe(self) -> EnvState:
        g = self.graph
        i = self.current
        sd = self.security_degrees
        slots = tuple(self.candidates(i))
        feats = np.zeros(self.obs_dim)
        area = g.area
        node, dest = g.nodes[i], g.nodes[g.destination]
        feats[0:5] = (node.x / area, node.y / area, dest.x / area, dest.y / area, np.nan_to_num(sd[i]))
        mask = np.zeros(self.n_slots, dtype=bool)
        for k, j in enumerate(slots):
            base = GLOBAL_FEATURES + SLOT_FEATURES * k
            feats[base] = np.nan_to_num(sd[j])
            feats[base + 1] = self.links.delay[i, j] / self.delay_scale
            feats[base + 2] = self.links.hop_energy / self.energy_scale
            feats[base + 3] = self._dist_d[j]
            mask[k] = True
        return EnvState(feats, mask, slots)
