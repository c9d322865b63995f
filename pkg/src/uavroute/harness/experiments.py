"""Seeded experiment cells, sweeps and CSV output.

A cell is one (algorithm, seed, attack count, packet size, reroute limit)
combination: build the scenario, screen it, train, then roll out the greedy
policy on ``n_eval_episodes`` fresh attack draws. Evaluation episode seeds
depend only on the experiment seed and the episode index, so every
algorithm in a cell faces the same attack sets.
"""
from __future__ import annotations

import csv
import dataclasses
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..env import RoutingEnv, Scenario, build_scenario, hop_reward
from ..learn.ppo import Trainer, train_bsa2c
from ..learn.qlearn import train_bsql
from ..netmodel import TopologyError, generate_topology, link_table
from ..screening import NoFeasiblePathError, ScreenedSubgraph, screen
from .config import ALGORITHMS, ExperimentConfig

COUNTING_RULE = ("# mean_delay_s and mean_energy_J average successful episodes only; "
                 "n_episodes = successes + fail_hop_budget + fail_reroute_limit + fail_no_path")

EVAL_STREAM = 7


class InfeasibleScenarioError(RuntimeError):
    """No scenario with a screenable source-to-destination path was found."""


@dataclass(eq=False)
class Cell:
    scenario: Scenario
    sub: ScreenedSubgraph
    attempts: int


def build_cell_scenario(cfg: ExperimentConfig, seed: int) -> Cell:
    """Topology, trust history and screened subgraph for one experiment seed.

    Attempts whose base screening finds no path are discarded and the next
    derived seed is tried.
    """
    t = cfg.topology
    for attempt in range(t.max_scenario_attempts):
        topo_seed = (t.seed, seed, attempt)
        try:
            graph = generate_topology(topo_seed, t.n, t.m, t.o_max, source_distance=t.source_distance,
                                      max_retries=t.max_retries, residual_energy=t.residual_energy,
                                      proc_time=t.proc_time, compute_load=t.compute_load)
        except TopologyError as exc:
            raise InfeasibleScenarioError(str(exc)) from None
        scenario = build_scenario(graph, cfg.channel_params(), cfg.trust_params(), list(topo_seed),
                                  cfg.trust.history_events, (cfg.trust.risk_a, cfg.trust.risk_b))
        links = link_table(graph, scenario.channel, cfg.env.packet_bits)
        try:
            sub = screen(graph, scenario.trust, links, cfg.screening_params())
        except NoFeasiblePathError:
            continue
        return Cell(scenario, sub, attempt + 1)
    raise InfeasibleScenarioError(
        f"no screenable scenario for seed {seed} after {t.max_scenario_attempts} attempts")


def make_env(cfg: ExperimentConfig, cell: Cell, algorithm: str, n_attacked=None, packet_bits=None,
             reroute_limit=None) -> RoutingEnv:
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    sub = None if algorithm == "ppo" else cell.sub
    return RoutingEnv(cell.scenario, sub, cfg.env_config(packet_bits), cfg.attack_config(n_attacked, reroute_limit),
                      cfg.sdn_config(), cfg.screening_params())


def train_algorithm(algorithm: str, env: RoutingEnv, cfg: ExperimentConfig, seed: int):
    """Return ``(policy, curve)``; the policy exposes ``act_greedy(state, node)``."""
    tcfg = cfg.train_config(seed)
    if algorithm == "bsql":
        return train_bsql(env, tcfg)
    if algorithm == "bsa2c":
        return train_bsa2c(env, tcfg)
    return Trainer(env, tcfg, "clip").train()


def eval_seed(cfg: ExperimentConfig, seed: int, episode: int):
    return [cfg.topology.seed, seed, EVAL_STREAM, episode]


def rollout_greedy(env: RoutingEnv, policy, episode_seed):
    state = env.reset(episode_seed)
    while not env.done:
        state, _, _, _ = env.step(policy.act_greedy(state, env.current))
    return env.trace


def evaluate(env: RoutingEnv, policy, cfg: ExperimentConfig, seed: int, n_episodes: Optional[int] = None):
    n = cfg.sweep.n_eval_episodes if n_episodes is None else n_episodes
    return [rollout_greedy(env, policy, eval_seed(cfg, seed, k)) for k in range(n)]


def episodes_to_converge(rewards: Sequence[float], window: int = 20, tol: float = 0.05,
                         min_tail: int = 0, reference: Optional[float] = None) -> Optional[int]:
    """First episode after which the trailing mean stays within ``tol`` of its final value.

    With ``reference`` (the best achievable return) a curve whose final
    trailing mean is not also within ``tol`` of it has not converged, however
    flat it is. Returns ``None`` for a curve that has not converged, or
    whose stable stretch is shorter than ``min_tail`` episodes.
    """
    r = np.asarray(rewards, dtype=float)
    if len(r) < window:
        return None
    trailing = np.convolve(r, np.ones(window) / window, mode="valid")
    final = trailing[-1]
    if reference is not None and abs(final - reference) > tol * abs(reference):
        return None
    inside = np.abs(trailing - final) <= tol * abs(final)
    outside = np.flatnonzero(~inside)
    first = 0 if len(outside) == 0 else int(outside[-1]) + 1
    episode = first + window - 1
    if len(r) - 1 - episode < min_tail:
        return None
    return episode


def optimal_return(env: RoutingEnv) -> float:
    """Best attack-free episode return over the arcs ``env`` can offer from the source.

    Hop-limited Bellman-Ford on the per-hop cost, so loops and the hop
    budget are handled exactly.
    """
    g = env.graph
    if env.screened:
        arcs = sorted(env.base_sub.e_opt)
    else:
        arcs = [(i, j) for i in range(g.n_nodes) if i != g.destination
                for j in g.neighbors[i] if env.links.feasible[i, j]]
    e = env.links.hop_energy
    cost = {(i, j): -hop_reward(float(env.links.delay[i, j]), e, env.delay_scale, env.energy_scale,
                                env.cfg.lambda_r) for i, j in arcs}
    best = np.full(g.n_nodes, np.inf)
    best[g.source] = 0.0
    reach = np.inf
    for _ in range(env.cfg.max_hops):
        nxt = np.full(g.n_nodes, np.inf)
        for (i, j), c in cost.items():
            if i != g.destination and best[i] + c < nxt[j]:
                nxt[j] = best[i] + c
        reach = min(reach, nxt[g.destination])
        best = nxt
    return -float(reach)


# -- metrics -------------------------------------------------------------

@dataclass(frozen=True)
class MetricsRow:
    algorithm: str
    seed: int
    n_attacked: int
    packet_bits: float
    reroute_limit: int
    train_attacked: int
    n_episodes: int
    successes: int
    fail_hop_budget: int
    fail_reroute_limit: int
    fail_no_path: int
    success_rate: float
    mean_delay_s: float
    mean_energy_J: float
    episodes_to_converge: Optional[int]
    scenario_attempts: int
    status: str = "ok"

    def sort_key(self):
        return (self.algorithm, self.n_attacked, self.packet_bits, self.reroute_limit, self.train_attacked, self.seed)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


FIELDS = [f.name for f in dataclasses.fields(MetricsRow)]


def summarize(traces) -> dict:
    succ = [t for t in traces if t.success]
    fails = {"hop_budget": 0, "reroute_limit": 0, "no_path": 0}
    for t in traces:
        if not t.success:
            fails[t.failure] += 1
    return {
        "n_episodes": len(traces),
        "successes": len(succ),
        "fail_hop_budget": fails["hop_budget"],
        "fail_reroute_limit": fails["reroute_limit"],
        "fail_no_path": fails["no_path"],
        "success_rate": len(succ) / len(traces) if traces else math.nan,
        "mean_delay_s": math.fsum(t.total_delay_s for t in succ) / len(succ) if succ else math.nan,
        "mean_energy_J": math.fsum(t.total_energy_J for t in succ) / len(succ) if succ else math.nan,
    }


def failed_row(algorithm, seed, n_attacked, packet_bits, reroute_limit, train_attacked, status) -> MetricsRow:
    return MetricsRow(algorithm, seed, n_attacked, float(packet_bits), reroute_limit, train_attacked,
                      0, 0, 0, 0, 0, math.nan, math.nan, math.nan, None, 0, status)


def run_cell(cfg: ExperimentConfig, algorithm: str, seed: int, n_attacked: Optional[int] = None,
             packet_bits: Optional[float] = None, reroute_limit: Optional[int] = None,
             eval_attacks: Optional[Sequence[int]] = None, cell: Optional[Cell] = None) -> List[MetricsRow]:
    """Train one algorithm at ``n_attacked`` and evaluate it at each count in ``eval_attacks``."""
    n_attacked = cfg.attack.n_attacked if n_attacked is None else n_attacked
    packet_bits = cfg.env.packet_bits if packet_bits is None else packet_bits
    reroute_limit = cfg.attack.reroute_limit if reroute_limit is None else reroute_limit
    eval_attacks = (n_attacked,) if eval_attacks is None else tuple(eval_attacks)
    cell = cell or build_cell_scenario(cfg, seed)
    env = make_env(cfg, cell, algorithm, n_attacked, packet_bits, reroute_limit)
    policy, curve = train_algorithm(algorithm, env, cfg, seed)
    s = cfg.sweep
    reference = optimal_return(env) if n_attacked == 0 else None
    conv = episodes_to_converge([c[1] for c in curve], s.converge_window, s.converge_tol, s.converge_min_tail,
                                reference)
    rows = []
    for k in eval_attacks:
        eval_env = make_env(cfg, cell, algorithm, k, packet_bits, reroute_limit)
        stats = summarize(evaluate(eval_env, policy, cfg, seed))
        rows.append(MetricsRow(algorithm, seed, k, float(packet_bits), reroute_limit, n_attacked,
                               episodes_to_converge=conv, scenario_attempts=cell.attempts, **stats))
    return rows


def _guarded(fn, fail):
    try:
        return fn()
    except Exception as exc:  # a failed cell must not stop the sweep
        return [fail(f"failed: {type(exc).__name__}: {exc}")]


def run_sweep(cfg: ExperimentConfig, kind: str = "attack",
              on_row: Optional[Callable[[MetricsRow], None]] = None) -> List[MetricsRow]:
    """Run every (algorithm, sweep point, seed) cell in deterministic order.

    ``kind="attack"`` trains and evaluates at each attack count.
    ``kind="packet"`` trains at the configured attack count for each packet
    size and evaluates both attack-free and attack-present.
    """
    s = cfg.sweep
    a = cfg.attack
    if kind == "attack":
        points = [(n, cfg.env.packet_bits, r, (n,)) for n in s.attack_counts for r in s.reroute_limits]
    elif kind == "packet":
        evals = tuple(sorted({0, a.n_attacked}))
        points = [(a.n_attacked, p, r, evals) for p in s.packet_sizes for r in s.reroute_limits]
    else:
        raise ValueError(f"unknown sweep kind {kind!r}")
    cells: Dict[int, object] = {}
    rows = []
    for algorithm in s.algorithms:
        for n, p, r, evals in points:
            for seed in range(s.n_seeds):
                if seed not in cells:
                    try:
                        cells[seed] = build_cell_scenario(cfg, seed)
                    except Exception as exc:
                        cells[seed] = exc
                cell = cells[seed]

                def fail(status, evals=evals):
                    return [failed_row(algorithm, seed, k, p, r, n, status) for k in evals]

                if isinstance(cell, Exception):
                    out = fail(f"failed: {type(cell).__name__}: {cell}")
                else:
                    out = _guarded(lambda: run_cell(cfg, algorithm, seed, n, p, r, evals, cell), fail)
                    if len(out) == 1 and len(evals) > 1:
                        out = fail(out[0].status)
                for row in out:
                    rows.append(row)
                    if on_row is not None:
                        on_row(row)
    return rows


# -- rerouting comparison ------------------------------------------------

@dataclass(frozen=True)
class RerouteRow:
    algorithm: str
    seed: int
    reroutes: int
    n_episodes: int
    mean_delay_s: float
    mean_energy_J: float


def bucket_reroutes(algorithm, seed, traces, buckets=(0, 1, 2)) -> List[RerouteRow]:
    """Per reroute count, mean delay and energy of successful episodes; empty buckets are omitted."""
    rows = []
    for b in buckets:
        sel = [t for t in traces if t.success and t.n_reroutes == b]
        if sel:
            rows.append(RerouteRow(algorithm, seed, b, len(sel),
                                   math.fsum(t.total_delay_s for t in sel) / len(sel),
                                   math.fsum(t.total_energy_J for t in sel) / len(sel)))
    return rows


def compare_reroutes(cfg: ExperimentConfig, n_attacked: Optional[int] = None,
                     n_eval_episodes: Optional[int] = None) -> List[RerouteRow]:
    if cfg.attack.reroute_limit < 2:
        raise ValueError("reroute comparison needs reroute_limit >= 2")
    n_attacked = cfg.attack.n_attacked if n_attacked is None else n_attacked
    rows = []
    for seed in range(cfg.sweep.n_seeds):
        try:
            cell = build_cell_scenario(cfg, seed)
        except InfeasibleScenarioError:
            continue
        for algorithm in cfg.sweep.algorithms:
            env = make_env(cfg, cell, algorithm, n_attacked)
            policy, _ = train_algorithm(algorithm, env, cfg, seed)
            traces = evaluate(env, policy, cfg, seed, n_eval_episodes)
            rows.extend(bucket_reroutes(algorithm, seed, traces))
    rows.sort(key=lambda r: (r.algorithm, r.reroutes, r.seed))
    return rows


# -- aggregation ---------------------------------------------------------

def median_by(rows: Iterable, key: Callable, value: Callable) -> dict:
    """Median of ``value(row)`` per ``key(row)``, skipping nan values."""
    groups: Dict[object, list] = {}
    for row in rows:
        v = value(row)
        if v is None or (isinstance(v, float) and math.isnan(v)):
            continue
        groups.setdefault(key(row), []).append(v)
    return {k: statistics.median(v) for k, v in sorted(groups.items())}


# -- CSV -----------------------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(rows: Iterable, path, counting_rule: str = COUNTING_RULE) -> Path:
    rows = list(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if rows and isinstance(rows[0], MetricsRow):
        rows.sort(key=MetricsRow.sort_key)
    names = FIELDS if not rows else [f.name for f in dataclasses.fields(rows[0])]
    with open(path, "w", newline="") as fh:
        fh.write(counting_rule + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([_cell(getattr(row, n)) for n in names])
    return path


def _read_value(text: str, typ):
    if typ in ("Optional[int]", Optional[int]):
        return None if text == "" else int(text)
    if typ in (int, "int"):
        return int(text)
    if typ in (float, "float"):
        return float(text)
    return text


def read_csv(path, row_type=MetricsRow) -> list:
    types = {f.name: f.type for f in dataclasses.fields(row_type)}
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(lines)
    return [row_type(**{k: _read_value(v, types[k]) for k, v in rec.items()}) for rec in reader]
