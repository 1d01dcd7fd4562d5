"""Curiosity- and empowerment-style intrinsic rewards for A2C on sparse gridworlds."""
from .agent import AgentKind, HyperParams, run_training
from .grid_env import Action, EnvKind, GridEnv, encode_binary, reset, step
from .harness import RunConfig, run_suite, time_to_success, window_mean
from .stats import analyze, one_sided_t, one_sided_t_from_summary
from .variational import PredictorKind, VariationalModel

__all__ = [
    "Action", "AgentKind", "EnvKind", "GridEnv", "HyperParams", "PredictorKind", "RunConfig",
    "VariationalModel", "analyze", "encode_binary", "one_sided_t", "one_sided_t_from_summary",
    "reset", "run_suite", "run_training", "step", "time_to_success", "window_mean",
]
