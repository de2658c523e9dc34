"""Cache-enabled opportunistic CoMP video streaming: control and simulation."""

from .cache import CacheVector, Urp, comp_probability, occupancy_bits, q_min, sample_cache_state, update_load_bps
from .cache_control import c_hat, noisy_subgradient, run_cache_optimization
from .config import BaselineConfig, SystemConfig, reference_config, parse_config
from .power import build_policy_tables, lambda_tilde, solve_f_tilde, theta_tilde
from .queue import q_circ, stage_cost, validate_assumptions
from .sim import run_episode, sweep
from .special import exp_integral_e1, find_root

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig",
    "CacheVector",
    "SystemConfig",
    "Urp",
    "build_policy_tables",
    "c_hat",
    "comp_probability",
    "exp_integral_e1",
    "find_root",
    "lambda_tilde",
    "noisy_subgradient",
    "occupancy_bits",
    "reference_config",
    "parse_config",
    "q_circ",
    "q_min",
    "run_cache_optimization",
    "run_episode",
    "sample_cache_state",
    "solve_f_tilde",
    "stage_cost",
    "sweep",
    "theta_tilde",
    "update_load_bps",
    "validate_assumptions",
]
