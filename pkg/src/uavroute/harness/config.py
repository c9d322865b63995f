"""Experiment configuration: flat ``section.key = value`` text files.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Every key has a default, so an empty file is a complete configuration.
:func:`dump_config` writes the fully resolved configuration in the same
format; feeding it back through :func:`parse_config` gives an equal object.
"""
from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from ..env import AttackConfig, EnvConfig, SdnConfig
from ..learn.ppo import TrainConfig
from ..netmodel import ChannelParams
from ..screening import ScreeningParams
from ..trust import TrustParams

ALGORITHMS = ("bsppo", "ppo", "bsql", "bsa2c")


class ConfigError(Exception):
    """Base class for configuration problems."""


class ConfigFileNotFound(ConfigError, FileNotFoundError):
    pass


class UnknownKeyError(ConfigError, KeyError):
    def __str__(self):
        return self.args[0]


class ConfigRangeError(ConfigError, ValueError):
    pass


class ConfigSyntaxError(ConfigError, ValueError):
    pass


def _in(lo=-math.inf, hi=math.inf, lo_open=False, hi_open=False):
    def check(v):
        if lo_open and not v > lo or not lo_open and not v >= lo:
            return False
        if hi_open and not v < hi or not hi_open and not v <= hi:
            return False
        return True
    return check


POS = _in(0.0, lo_open=True)
NONNEG = _in(0.0)
UNIT = _in(0.0, 1.0)


@dataclass(frozen=True)
class TopologySection:
    n: int = 40
    m: float = 1200.0
    o_max: float = 200.0
    seed: int = 0
    source_distance: Optional[float] = 720.0
    residual_energy: float = 500.0
    proc_time: float = 0.01
    compute_load: float = 1e6
    max_retries: int = 100
    max_scenario_attempts: int = 50

    _ranges = {"n": _in(2), "m": POS, "o_max": POS, "seed": NONNEG, "source_distance": NONNEG,
               "residual_energy": NONNEG, "proc_time": NONNEG, "compute_load": NONNEG,
               "max_retries": _in(1), "max_scenario_attempts": _in(1)}


@dataclass(frozen=True)
class ChannelSection:
    frequency: float = 2.4e9
    bandwidth: float = 1e6
    tx_power: float = 0.1
    noise_power: float = 1e-13
    snr_min_db: float = 5.0
    circuit_energy: float = 5e-8

    _ranges = {"frequency": POS, "bandwidth": POS, "tx_power": POS, "noise_power": POS,
               "circuit_energy": POS}


@dataclass(frozen=True)
class TrustSection:
    alpha: float = 0.5
    beta: float = 0.2
    prior_successes: int = 1
    prior_failures: int = 0
    initial_reliability: float = 0.9
    history_events: int = 10
    risk_a: float = 0.5
    risk_b: float = 3.0

    _ranges = {"alpha": UNIT, "beta": _in(0.0, 1.0, True, True), "prior_successes": NONNEG,
               "prior_failures": NONNEG, "initial_reliability": UNIT, "history_events": NONNEG,
               "risk_a": POS, "risk_b": POS}


@dataclass(frozen=True)
class ScreeningSection:
    beam_width: int = 60
    max_hops: int = 15
    theta_sd: float = 0.5
    energy_threshold: float = 1.0

    _ranges = {"beam_width": _in(1), "max_hops": _in(1), "theta_sd": UNIT, "energy_threshold": NONNEG}


@dataclass(frozen=True)
class SdnSection:
    clock_freq: float = 1e9
    query_time: float = 0.005
    routing_packet_size: float = 1e4
    ctrl_bandwidth: float = 1e6
    event_packet_size: float = 1e3

    _ranges = {"clock_freq": POS, "query_time": NONNEG, "routing_packet_size": NONNEG,
               "ctrl_bandwidth": POS, "event_packet_size": NONNEG}


@dataclass(frozen=True)
class AttackSection:
    n_attacked: int = 4
    reroute_limit: int = 2
    weighting: str = "uniform"

    _ranges = {"n_attacked": NONNEG, "reroute_limit": NONNEG,
               "weighting": lambda v: v in ("risk", "uniform")}


@dataclass(frozen=True)
class EnvSection:
    packet_bits: float = 1e6
    lambda_r: float = 0.5
    max_slots: Optional[int] = None

    _ranges = {"packet_bits": POS, "lambda_r": UNIT, "max_slots": _in(1)}


@dataclass(frozen=True)
class TrainSection:
    learning_rate: float = 5e-4
    clip_eps: float = 0.1
    max_grad_norm: float = 0.15
    rollout_steps: int = 2048
    minibatch_size: int = 64
    epochs: int = 4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    episodes: int = 600
    vf_coef: float = 0.5
    ent_coef: float = 0.01
    hidden: int = 64
    q_epsilon: float = 0.1

    _ranges = {"learning_rate": POS, "clip_eps": POS, "max_grad_norm": POS, "rollout_steps": _in(1),
               "minibatch_size": _in(1), "epochs": _in(1), "gamma": _in(0.0, 1.0, lo_open=True),
               "gae_lambda": UNIT, "episodes": _in(1), "vf_coef": NONNEG, "ent_coef": NONNEG,
               "hidden": _in(1), "q_epsilon": UNIT}


@dataclass(frozen=True)
class SweepSection:
    algorithms: Tuple[str, ...] = ALGORITHMS
    attack_counts: Tuple[int, ...] = (0, 2, 4, 6, 8)
    packet_sizes: Tuple[float, ...] = (1e6, 2e6, 4e6, 8e6)
    reroute_limits: Tuple[int, ...] = (2,)
    n_seeds: int = 10
    n_eval_episodes: int = 100
    converge_window: int = 20
    converge_tol: float = 0.05
    converge_min_tail: int = 0

    _ranges = {"algorithms": lambda v: len(v) > 0 and all(a in ALGORITHMS for a in v),
               "attack_counts": lambda v: all(a >= 0 for a in v),
               "packet_sizes": lambda v: all(p > 0 for p in v),
               "reroute_limits": lambda v: all(r >= 0 for r in v),
               "n_seeds": _in(1), "n_eval_episodes": _in(1), "converge_window": _in(1),
               "converge_tol": POS, "converge_min_tail": NONNEG}


SECTIONS = {
    "topology": TopologySection,
    "channel": ChannelSection,
    "trust": TrustSection,
    "screening": ScreeningSection,
    "sdn": SdnSection,
    "attack": AttackSection,
    "env": EnvSection,
    "train": TrainSection,
    "sweep": SweepSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopologySection = field(default_factory=TopologySection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    trust: TrustSection = field(default_factory=TrustSection)
    screening: ScreeningSection = field(default_factory=ScreeningSection)
    sdn: SdnSection = field(default_factory=SdnSection)
    attack: AttackSection = field(default_factory=AttackSection)
    env: EnvSection = field(default_factory=EnvSection)
    train: TrainSection = field(default_factory=TrainSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    # -- conversion into the domain objects ------------------------------

    def channel_params(self) -> ChannelParams:
        return ChannelParams(**dataclasses.asdict(self.channel))

    def trust_params(self) -> TrustParams:
        t = self.trust
        return TrustParams(t.alpha, t.beta, t.prior_successes, t.prior_failures, t.initial_reliability)

    def screening_params(self) -> ScreeningParams:
        return ScreeningParams(**dataclasses.asdict(self.screening))

    def sdn_config(self) -> SdnConfig:
        return SdnConfig(None, **dataclasses.asdict(self.sdn))

    def attack_config(self, n_attacked=None, reroute_limit=None) -> AttackConfig:
        a = self.attack
        return AttackConfig(a.n_attacked if n_attacked is None else n_attacked,
                            a.reroute_limit if reroute_limit is None else reroute_limit, a.weighting)

    def env_config(self, packet_bits=None) -> EnvConfig:
        e = self.env
        return EnvConfig(e.packet_bits if packet_bits is None else packet_bits, e.lambda_r,
                         self.screening.max_hops, e.max_slots)

    def train_config(self, seed: int = 0) -> TrainConfig:
        return TrainConfig(seed=seed, **dataclasses.asdict(self.train))

    def replace(self, **dotted) -> "ExperimentConfig":
        """Copy with ``section__key=value`` overrides, validated like file input."""
        items = {k.replace("__", "."): v for k, v in dotted.items()}
        return _build(items, base=self)


def _fields(section_cls):
    hints = typing.get_type_hints(section_cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(section_cls)}


def _parse_scalar(text: str, typ, key: str):
    origin = typing.get_origin(typ)
    if origin is typing.Union:
        if text.lower() in ("none", ""):
            return None
        typ = next(a for a in typing.get_args(typ) if a is not type(None))
        return _parse_scalar(text, typ, key)
    if origin is tuple:
        inner = typing.get_args(typ)[0]
        parts = [p.strip() for p in text.split(",") if p.strip()]
        return tuple(_parse_scalar(p, inner, key) for p in parts)
    try:
        if typ is bool:
            return {"true": True, "false": False}[text.lower()]
        if typ is int:
            value = float(text)
            if value != int(value):
                raise ValueError
            return int(value)
        if typ is float:
            return float(text)
        return text
    except (ValueError, KeyError):
        raise ConfigSyntaxError(f"{key}: cannot read {text!r} as {typ.__name__}") from None


def _coerce(value, typ, key):
    if isinstance(value, str):
        return _parse_scalar(value, typ, key)
    origin = typing.get_origin(typ)
    if origin is tuple and value is not None:
        return tuple(value)
    if typ is float and isinstance(value, int):
        return float(value)
    return value


def _build(items: dict, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    updates = {name: {} for name in SECTIONS}
    for key, raw in items.items():
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise UnknownKeyError(f"unknown configuration key {key!r}")
        types = _fields(SECTIONS[section])
        if name not in types:
            raise UnknownKeyError(f"unknown configuration key {key!r}")
        value = _coerce(raw, types[name], key)
        check = SECTIONS[section]._ranges.get(name)
        if value is not None and check is not None and not check(value):
            raise ConfigRangeError(f"{key} = {raw!r} is out of range")
        updates[section][name] = value
    sections = {name: dataclasses.replace(getattr(base, name), **upd) for name, upd in updates.items()}
    cfg = ExperimentConfig(**sections)
    try:
        cfg.trust_params(), cfg.screening_params(), cfg.channel_params(), cfg.train_config()
    except ValueError as exc:
        raise ConfigRangeError(str(exc)) from None
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    items = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigSyntaxError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        if key in items:
            raise ConfigSyntaxError(f"line {lineno}: duplicate key {key!r}")
        items[key] = value.strip()
    return _build(items)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigFileNotFound(f"configuration file not found: {p}")
    return parse_config(p.read_text())


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = ["# fully resolved configuration"]
    for section in SECTIONS:
        obj = getattr(cfg, section)
        for name in _fields(SECTIONS[section]):
            lines.append(f"{section}.{name} = {_format(getattr(obj, name))}")
    return "\n".join(lines) + "\n"


def write_config_echo(cfg: ExperimentConfig, out_dir) -> Path:
    path = Path(out_dir) / "config.resolved.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(cfg))
    return path
