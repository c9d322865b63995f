"""Trust model: historical credibility, neighbour reliability, security degree.

Per-node counters live in flat numpy arrays indexed by node id. The
destination node carries trust state like any UAV but is never attacked.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ledger import Ledger, TamperedLedgerError


class DegenerateTopologyError(ValueError):
    """Raised when a neighbour average is requested for an isolated node."""


@dataclass(frozen=True)
class TrustParams:
    alpha: float = 0.5
    beta: float = 0.2
    prior_successes: int = 1
    prior_failures: int = 0
    initial_reliability: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if not 0.0 <= self.initial_reliability <= 1.0:
            raise ValueError("initial_reliability must lie in [0, 1]")
        if self.prior_successes < 0 or self.prior_failures < 0:
            raise ValueError("prior counts must be non-negative")


@dataclass(eq=False)
class TrustState:
    successes: np.ndarray
    failures: np.ndarray
    reliability: np.ndarray
    params: TrustParams

    @classmethod
    def initial(cls, n_nodes: int, params: TrustParams = TrustParams()) -> "TrustState":
        return cls(np.full(n_nodes, params.prior_successes, dtype=np.int64),
                   np.full(n_nodes, params.prior_failures, dtype=np.int64),
                   np.full(n_nodes, params.initial_reliability, dtype=float),
                   params)

    def copy(self) -> "TrustState":
        return TrustState(self.successes.copy(), self.failures.copy(), self.reliability.copy(), self.params)

    def __eq__(self, other):
        if not isinstance(other, TrustState):
            return NotImplemented
        return (self.params == other.params
                and np.array_equal(self.successes, other.successes)
                and np.array_equal(self.failures, other.failures)
                and np.array_equal(self.reliability, other.reliability))

    def credibility(self, uav_id: int) -> float:
        s, f = self.successes[uav_id], self.failures[uav_id]
        total = s + f
        # no observations yet: treat as fully credible
        return float(s / total) if total > 0 else 1.0

    def credibilities(self) -> np.ndarray:
        total = self.successes + self.failures
        out = np.ones(len(total))
        np.divide(self.successes, total, out=out, where=total > 0)
        return out


def update_credibility(state: TrustState, uav_id: int, delta_data: int) -> float:
    if delta_data:
        state.failures[uav_id] += 1
    else:
        state.successes[uav_id] += 1
    return state.credibility(uav_id)


def update_reliability(state: TrustState, uav_id: int, delta_data: int) -> float:
    if delta_data:
        state.reliability[uav_id] = min(1.0, max(0.0, state.reliability[uav_id] - state.params.beta))
    return float(state.reliability[uav_id])


def apply_event(state: TrustState, uav_id: int, delta_data: int) -> None:
    update_credibility(state, uav_id, delta_data)
    update_reliability(state, uav_id, delta_data)


def neighbor_reliability(state: TrustState, graph, uav_id: int) -> float:
    nbrs = graph.neighbors[uav_id]
    if not nbrs:
        raise DegenerateTopologyError(f"node {uav_id} has no neighbours")
    return float(np.mean(state.reliability[list(nbrs)]))


def security_degree(state: TrustState, graph, uav_id: int) -> float:
    alpha = state.params.alpha
    return alpha * neighbor_reliability(state, graph, uav_id) + (1.0 - alpha) * state.credibility(uav_id)


def security_degrees(state: TrustState, graph) -> np.ndarray:
    """Security degree of every node; isolated nodes get ``nan``."""
    adj = graph.adjacency
    deg = adj.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        re_avg = (adj @ state.reliability) / deg
    alpha = state.params.alpha
    return np.where(deg > 0, alpha * re_avg + (1.0 - alpha) * state.credibilities(), np.nan)


def record_authentication(ledger: Ledger, state: TrustState, uav_id: int, hop: int,
                          delta_data: int, timestamp: float):
    """Append one authentication outcome and apply it to ``state``."""
    rec = ledger.append(uav_id, hop, delta_data, timestamp)
    apply_event(state, uav_id, delta_data)
    return rec


def rebuild_trust_from_ledger(ledger: Ledger, n_nodes: int, params: TrustParams = TrustParams()) -> TrustState:
    if not ledger.verify():
        raise TamperedLedgerError("ledger hash chain does not verify")
    state = TrustState.initial(n_nodes, params)
    for rec in ledger:
        apply_event(state, rec.uav_id, rec.delta_data)
    return state


def seed_history(ledger: Ledger, state: TrustState, risks: np.ndarray, n_events: int, rng) -> None:
    """Record ``n_events`` past authentications per node, failing with probability ``risks[i]``.

    Events are interleaved round by round in node order and stamped with
    negative times so that they precede every simulated delivery.
    """
    n = len(risks)
    for k in range(n_events):
        draws = rng.random(n)
        for i in range(n):
            record_authentication(ledger, state, i, k, int(draws[i] < risks[i]), float(k - n_events))
