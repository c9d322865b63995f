from .config import (ALGORITHMS, ConfigError, ConfigFileNotFound, ConfigRangeError, ConfigSyntaxError,
                     ExperimentConfig, UnknownKeyError, dump_config, load_config, parse_config)
from .experiments import (MetricsRow, RerouteRow, build_cell_scenario, compare_reroutes, emit_csv,
                          episodes_to_converge, read_csv, run_cell, run_sweep)

__all__ = [
    "ALGORITHMS", "ConfigError", "ConfigFileNotFound", "ConfigRangeError", "ConfigSyntaxError",
    "ExperimentConfig", "UnknownKeyError", "dump_config", "load_config", "parse_config",
    "MetricsRow", "RerouteRow", "build_cell_scenario", "compare_reroutes", "emit_csv",
    "episodes_to_converge", "read_csv", "run_cell", "run_sweep",
]
