"""Synergistic formulaic alpha mining with risk-seeking Monte Carlo tree search."""
from .backtest import EquityCurve, StrategyConfig, cumulative_return, run_backtest
from .env import MdpState, MiningEnv, Trajectory, Transition, intermediate_reward
from .expr import Expression, Vocabulary, evaluate, parse, token_vocabulary
from .mcts import ReplayBuffer, SearchTree, rollout, search_cycle
from .panel import (
    MetricReport,
    Panel,
    SplitSpec,
    compute_ic,
    compute_mut_ic,
    load_csv,
    standardize_daily,
    synth_panel,
)
from .pipeline import RunConfig, RunResult, quantile_sweep, resume, run
from .policy import Policy, QuantileTracker, risk_gradient, train_epoch
from .pool import AlphaPool, FitConfig

__version__ = "0.1.0"

__all__ = [
    "EquityCurve",
    "StrategyConfig",
    "cumulative_return",
    "run_backtest",
    "MdpState",
    "MiningEnv",
    "Trajectory",
    "Transition",
    "intermediate_reward",
    "Expression",
    "Vocabulary",
    "evaluate",
    "parse",
    "token_vocabulary",
    "ReplayBuffer",
    "SearchTree",
    "rollout",
    "search_cycle",
    "MetricReport",
    "Panel",
    "SplitSpec",
    "compute_ic",
    "compute_mut_ic",
    "load_csv",
    "standardize_daily",
    "synth_panel",
    "RunConfig",
    "RunResult",
    "quantile_sweep",
    "resume",
    "run",
    "Policy",
    "QuantileTracker",
    "risk_gradient",
    "train_epoch",
    "AlphaPool",
    "FitConfig",
    "__version__",
]
