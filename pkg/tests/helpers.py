"""Shared oracles, episode drivers and invariant checks."""
import math

import numpy as np

from uavroute.env import EnvState
from uavroute.learn.nets import Mlp
from uavroute.learn.ppo import PolicyNet
from uavroute.trust import TrustParams, TrustState, apply_event, security_degree


def offered_arc_ok(env, i, j):
    """Independent re-check of the routing constraints for an offered slot."""
    g = env.graph
    s = env.screening
    if j in env.detected or not g.adjacency[i, j] or env.links.snr_db[i, j] < env.scenario.channel.snr_min_db:
        return False
    if env.residual[i] < max(s.energy_threshold, env.links.tx_energy):
        return False
    if env.residual[j] < max(s.energy_threshold, env.links.rx_energy):
        return False
    if env.screened:
        if (i, j) not in env.sub.e_opt:
            return False
        if j != g.destination and security_degree(env.trust, g, j) < s.theta_sd:
            return False
    return True


def random_episode(env, seed, actions=None, check=True):
    """Play one episode with a seeded uniform policy (or replay ``actions``).

    Returns ``(trace, actions, ledger_bytes)``; with ``check`` every offered
    slot is validated before the step.
    """
    rng = np.random.default_rng([seed, 99])
    state = env.reset(seed)
    played = []
    while not env.done:
        valid = np.flatnonzero(state.mask)
        if check:
            for k in valid:
                assert offered_arc_ok(env, env.current, state.slots[k]), (env.current, state.slots[k])
            assert not state.mask[len(state.slots):].any()
        a = int(actions[len(played)]) if actions is not None else int(rng.choice(valid))
        played.append(a)
        state, _, _, _ = env.step(a)
    return env.trace, played, env.ledger.to_bytes()


def check_no_reuse(trace):
    banned = set()
    for h in trace.hops:
        assert h.src not in banned and h.dst not in banned
        if h.attacked:
            banned.add(h.dst)


def energy_drained(env):
    return math.fsum(env._init_energy) - math.fsum(env.residual)


def ten_node_case(seed=23):
    """Fixed attack-free 10-UAV scenario with many screened paths."""
    from uavroute.env import RoutingEnv, build_scenario
    from uavroute.netmodel import link_table
    from uavroute.screening import ScreeningParams, screen

    from .conftest import random_small_graph

    g = random_small_graph(np.random.default_rng(seed), 10, area=520.0, o_max=200.0)
    sc = build_scenario(g, seed=seed)
    sub = screen(g, sc.trust, link_table(g, sc.channel, 1e6), ScreeningParams())
    return sc, sub, RoutingEnv(sc, sub)


def dijkstra_cost(env, weight):
    """Shortest source-to-destination cost over the screened arcs, via networkx."""
    import networkx as nx

    G = nx.DiGraph()
    for i, j in env.base_sub.e_opt:
        G.add_edge(i, j, weight=weight(i, j))
    return nx.dijkstra_path_length(G, env.graph.source, env.graph.destination)


def random_trust(rng, n, events=25):
    s = TrustState.initial(n, TrustParams())
    for _ in range(events):
        apply_event(s, int(rng.integers(0, n)), int(rng.random() < 0.35))
    return s


def oracle_paths(graph, trust, channel, params):
    """All simple source-to-destination paths passing the screening filters, by DFS."""
    n = graph.n_nodes
    dest = graph.destination
    sd = [security_degree(trust, graph, v) if graph.neighbors[v] else -1.0 for v in range(n)]
    residual = [node.residual_energy for node in graph.nodes]
    node_ok = [sd[v] >= params.theta_sd and residual[v] >= params.energy_threshold for v in range(n)]

    def link_ok(i, j):
        d = math.hypot(graph.nodes[i].x - graph.nodes[j].x, graph.nodes[i].y - graph.nodes[j].y)
        if d > graph.o_max:
            return False
        pl = 20 * math.log10(4 * math.pi * d * channel.frequency / channel.lightspeed)
        return 10 * math.log10(channel.tx_power / channel.noise_power) - pl >= channel.snr_min_db - 0.02

    def d_to_dest(v):
        return math.hypot(graph.nodes[v].x - graph.nodes[dest].x, graph.nodes[v].y - graph.nodes[dest].y)

    out = []

    def dfs(path):
        head = path[-1]
        if head == dest:
            out.append(tuple(path))
            return
        if len(path) - 1 == params.max_hops:
            return
        for w in range(n):
            if w in path or w == head or not node_ok[w] or not link_ok(head, w):
                continue
            if w != dest and not d_to_dest(w) < d_to_dest(head):
                continue
            dfs(path + [w])

    if node_ok[graph.source]:
        dfs([graph.source])
    return {p: math.fsum(sd[v] for v in p) / len(p) for p in out}


def gae_oracle(r, v, done, last_value, gamma, lam):
    n = len(r)
    nxt = [v[t + 1] if t + 1 < n else last_value for t in range(n)]
    delta = [r[t] + gamma * nxt[t] * (1 - done[t]) - v[t] for t in range(n)]
    out = []
    for t in range(n):
        total, coef = 0.0, 1.0
        for k in range(t, n):
            total += coef * delta[k]
            if done[k]:
                break
            coef *= gamma * lam
        out.append(total)
    return np.array(out)


def toy_batch(seed):
    rng = np.random.default_rng(seed)
    actor = Mlp.init(3, 2, (1, 1), rng)
    critic = Mlp.init(3, 1, (1, 1), rng)
    assert actor.n_params == 10
    pol = PolicyNet(actor, critic)
    obs = rng.normal(size=(6, 3))
    masks = np.ones((6, 2), dtype=bool)
    actions = rng.integers(0, 2, 6)
    logp = pol.log_probs(obs, masks)[np.arange(6), actions]
    logp_old = logp + rng.normal(scale=0.3, size=6)
    return pol, (obs, masks, actions, logp_old, rng.normal(size=6), rng.normal(size=6))


class BanditEnv:
    """One state, two actions, rewards 0 and 1."""

    obs_dim = 2
    n_slots = 2

    def reset(self, seed=None):
        self.done = False
        return EnvState(np.array([1.0, 0.0]), np.ones(2, dtype=bool), (0, 1))

    def step(self, action):
        self.done = True
        return EnvState(np.zeros(2), np.zeros(2, dtype=bool), ()), float(action), True, {}


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = []
