"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 infeasible scenario,
3 contract violation (including a ledger that fails verification).
"""
from __future__ import annotations

import argparse
import csv
import struct
import sys
from pathlib import Path

from ..env import ContractViolation
from ..ledger import Ledger
from ..netmodel import write_topology_csv
from ..screening import NoFeasiblePathError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ALGORITHMS, ConfigError, ExperimentConfig, load_config, write_config_echo
from .experiments import (COUNTING_RULE, FIELDS, InfeasibleScenarioError, MetricsRow, build_cell_scenario,
                          compare_reroutes, emit_csv, evaluate, make_env, run_sweep, summarize, train_algorithm)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_CONTRACT = 0, 1, 2, 3


def _config(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else ExperimentConfig()


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_screen(args) -> int:
    cfg = _config(args)
    out = _out(args)
    write_config_echo(cfg, out)
    cell = build_cell_scenario(cfg, args.seed)
    write_topology_csv(cell.scenario.graph, out / "topology.csv")
    cell.scenario.ledger.write_csv(out / "ledger.csv")
    with open(out / "paths.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "avg_sd", "hops", "nodes"])
        for k, p in enumerate(cell.sub.paths):
            w.writerow([k, repr(p.avg_sd), p.hops, " ".join(map(str, p.nodes))])
    with open(out / "subgraph.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from", "to"])
        w.writerows(sorted(cell.sub.e_opt))
    print(f"{len(cell.sub.paths)} candidate paths, {len(cell.sub.v_opt)} nodes, "
          f"{len(cell.sub.e_opt)} arcs -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out(args)
    write_config_echo(cfg, out)
    cell = build_cell_scenario(cfg, args.seed)
    env = make_env(cfg, cell, args.algo)
    policy, curve = train_algorithm(args.algo, env, cfg, args.seed)
    with open(out / "curve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "reward", "success", "delay_s", "energy_J"])
        for ep, reward, success, delay, energy in curve:
            w.writerow([ep, repr(float(reward)), int(success), repr(float(delay)), repr(float(energy))])
    save_checkpoint(out / "checkpoint.json", args.algo, policy, cfg.train_config(args.seed),
                    {"seed": args.seed, "obs_dim": env.obs_dim, "n_slots": env.n_slots})
    print(f"trained {args.algo} for {len(curve)} episodes -> {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = _out(args)
    write_config_echo(cfg, out)
    algorithm, policy, _, extra = load_checkpoint(args.checkpoint)
    seed = extra.get("seed", args.seed) if args.seed is None else args.seed
    cell = build_cell_scenario(cfg, seed)
    env = make_env(cfg, cell, algorithm)
    if algorithm != "bsql" and (policy.obs_dim != env.obs_dim or policy.n_actions != env.n_slots):
        raise ContractViolation("checkpoint does not match the scenario's observation layout")
    stats = summarize(evaluate(env, policy, cfg, seed))
    row = MetricsRow(algorithm, seed, cfg.attack.n_attacked, float(cfg.env.packet_bits), cfg.attack.reroute_limit,
                     cfg.attack.n_attacked, episodes_to_converge=None, scenario_attempts=cell.attempts, **stats)
    emit_csv([row], out / "metrics.csv")
    print(f"{algorithm}: success {row.success_rate:.3f}, delay {row.mean_delay_s:.4f} s, "
          f"energy {row.mean_energy_J:.4f} J")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.algo:
        cfg = cfg.replace(sweep__algorithms=(args.algo,))
    out = _out(args)
    write_config_echo(cfg, out)
    kinds = ("attack", "packet", "reroute") if args.kind == "all" else (args.kind,)
    for kind in kinds:
        if kind == "reroute":
            rows = compare_reroutes(cfg)
            emit_csv(rows, out / "reroutes.csv", "# per-bucket means over successful episodes; empty buckets omitted")
            print(f"reroute comparison: {len(rows)} rows")
            continue
        path = out / f"sweep_{kind}.csv"
        # rows are appended as cells finish so an interrupted sweep still leaves usable output
        with open(path, "w", newline="") as fh:
            fh.write(COUNTING_RULE + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(FIELDS)

            def on_row(row):
                w.writerow(["" if getattr(row, n) is None else
                            repr(getattr(row, n)) if isinstance(getattr(row, n), float) else getattr(row, n)
                            for n in FIELDS])
                fh.flush()

            rows = run_sweep(cfg, kind, on_row)
        emit_csv(rows, path)
        failed = sum(not r.ok for r in rows)
        print(f"{kind} sweep: {len(rows)} rows ({failed} failed) -> {path}")
    return EXIT_OK


def cmd_verify_ledger(args) -> int:
    try:
        ledger = Ledger.read_csv(args.path)
    except (ValueError, KeyError, OverflowError, struct.error) as exc:
        print(f"TAMPERED: {args.path}: {exc}")
        return EXIT_CONTRACT
    if ledger.verify():
        print(f"OK: {len(ledger)} records, tail {ledger.tail_hash.hex()}")
        return EXIT_OK
    print(f"TAMPERED: {args.path}")
    return EXIT_CONTRACT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavroute", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, algo=False, seed_default=0):
        p.add_argument("--config", help="experiment configuration file (defaults when omitted)")
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--out", default="out")
        if algo:
            p.add_argument("--algo", choices=ALGORITHMS, default="bsppo")

    p = sub.add_parser("screen", help="write the topology, ledger and screened paths")
    common(p)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("train", help="train one algorithm on one scenario")
    common(p, algo=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint with greedy rollouts")
    common(p, seed_default=None)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run the seeded experiment sweeps")
    common(p)
    p.add_argument("--algo", choices=ALGORITHMS, help="restrict the sweep to one algorithm")
    p.add_argument("--kind", choices=("attack", "packet", "reroute", "all"), default="all")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-ledger", help="audit an exported ledger CSV")
    p.add_argument("path")
    p.set_defaults(func=cmd_verify_ledger)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleScenarioError, NoFeasiblePathError) as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
