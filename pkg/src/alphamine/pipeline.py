"""Alternating mining pipeline: tree search sampling, then policy ascent.

Each outer iteration rebuilds the search tree from a bare BEG root, empties
the replay buffer, runs a fixed number of search cycles (every END performs
the pool update), and then makes one training pass over the buffer with the
quantile tracker warm-started from the previous iteration. All randomness
flows from the config seed through two generator streams (network init and
the main sampling stream), so a repeated run is byte-identical, and per-
iteration checkpoints capture enough state to resume one bit-exactly.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .env import MiningEnv
from .errors import ConfigError
from .expr import Vocabulary
from .mcts import ReplayBuffer, SearchTree, search_cycle
from .panel import Panel, SplitSpec, compute_ic, load_csv, synth_panel
from .policy import Policy, QuantileTracker, train_epoch
from .pool import AlphaPool, FitConfig
from .errors import EmptyOverlap, EmptyPool


@dataclass(frozen=True)
class RunConfig:
    """Everything a mining run needs; defaults follow the reference setup."""

    seed: int = 0
    iterations: int = 50
    cycles_per_iteration: int = 200
    pool_size: int = 100
    lam: float = 0.1
    max_episode_len: int = 30
    quantile_level: float = 0.85
    beta: float = 0.01
    policy_lr: float = 0.001
    discount: float = 1.0
    horizon: int = 5
    c_puct: float = 1.0
    tokens: tuple[str, ...] = ()  # empty = full vocabulary
    # data source: CSV path, or synthetic generation parameters
    csv: str = ""
    synthetic: bool = True
    n_stocks: int = 20
    n_days: int = 250
    data_seed: int = 1
    planted: str = ""
    planted_weight: float = 0.8
    # splits: ISO date pairs, or fractions of the calendar when empty
    split_train: tuple[str, str] = ()
    split_valid: tuple[str, str] = ()
    split_test: tuple[str, str] = ()
    train_frac: float = 0.7
    valid_frac: float = 0.15
    # policy architecture
    embed_dim: int = 32
    hidden_dim: int = 64
    gru_layers: int = 4
    head_dims: tuple[int, ...] = (32, 32)
    # pool weight fitting
    fit_lr: float = 0.01
    fit_max_iters: int = 1000
    fit_tol: float = 1e-6
    # backtest defaults
    backtest_k: int = 40
    rebalance_every: int = 5
    cost_bps: float = 0.0
    # checkpointing
    checkpoint_dir: str = ""

    def __post_init__(self):
        if not 0.0 < self.quantile_level < 1.0:
            raise ConfigError("quantile_level must lie in (0, 1)")
        if self.max_episode_len < 3 or self.max_episode_len > 30:
            raise ConfigError("max_episode_len must lie in 3..30")
        for name in ("iterations", "cycles_per_iteration", "pool_size", "horizon"):
            if getattr(self, name) < 0 or (name != "iterations" and getattr(self, name) < 1):
                raise ConfigError(f"{name} must be positive")
        if self.horizon not in (5, 10):
            raise ConfigError("horizon must be 5 or 10")

    def vocabulary(self) -> Vocabulary:
        return Vocabulary.subset(self.tokens) if self.tokens else Vocabulary.full()

    def fit_config(self) -> FitConfig:
        return FitConfig(self.fit_lr, self.fit_max_iters, self.fit_tol)


@dataclass
class IterationRow:
    iteration: int
    train_ic: float
    valid_ic: float
    pool_size: int
    tracked_q: float
    mean_return: float


@dataclass
class RunResult:
    pool: AlphaPool
    policy: Policy
    tracker: QuantileTracker
    report: list[IterationRow]
    best_train_ic: float

    def report_csv(self) -> str:
        lines = ["iteration,train_ic,valid_ic,pool_size,tracked_q,mean_return"]
        for r in self.report:
            lines.append(
                f"{r.iteration},{r.train_ic!r},{r.valid_ic!r},{r.pool_size},"
                f"{r.tracked_q!r},{r.mean_return!r}"
            )
        return "\n".join(lines) + "\n"


def build_panel(config: RunConfig) -> Panel:
    if config.csv:
        return load_csv(config.csv)
    if not config.synthetic:
        raise ConfigError("no data source: set csv or synthetic=true")
    return synth_panel(
        config.n_stocks,
        config.n_days,
        config.data_seed,
        planted=config.planted or None,
        planted_weight=config.planted_weight,
    )


def build_split(config: RunConfig, panel: Panel) -> SplitSpec:
    if config.split_train and config.split_valid and config.split_test:
        return SplitSpec.from_strings(config.split_train, config.split_valid, config.split_test)
    return SplitSpec.from_fractions(panel.dates, config.train_frac, config.valid_frac)


@dataclass
class _RunState:
    """Mutable pipeline state shared across iterations, checkpointable."""

    pool: AlphaPool
    policy: Policy
    tracker: QuantileTracker
    env: MiningEnv
    rng: np.random.Generator
    report: list[IterationRow] = field(default_factory=list)
    next_iteration: int = 0
    best_train_ic: float = float("-inf")


def _init_state(config: RunConfig, panel: Panel) -> tuple[_RunState, SplitSpec]:
    split = build_split(config, panel)
    train_mask = split.mask(panel.dates, "train")
    target = panel.forward_returns(config.horizon)
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    net_rng = np.random.default_rng(seeds[0])
    main_rng = np.random.default_rng(seeds[1])
    vocab = config.vocabulary()
    pool = AlphaPool(
        panel, target, train_mask, config.pool_size, rng=main_rng, fit_config=config.fit_config()
    )
    policy = Policy(
        vocab,
        net_rng,
        embed_dim=config.embed_dim,
        hidden_dim=config.hidden_dim,
        gru_layers=config.gru_layers,
        head_dims=config.head_dims,
        max_episode_len=config.max_episode_len,
    )
    tracker = QuantileTracker(level=config.quantile_level, beta=config.beta)
    env = MiningEnv(
        panel, target, train_mask, pool, vocab,
        lam=config.lam, max_episode_len=config.max_episode_len,
    )
    return _RunState(pool, policy, tracker, env, main_rng), split


def _split_ic(pool: AlphaPool, panel: Panel, target, mask) -> float:
    try:
        return compute_ic(pool.composite(), target, panel.tradable, mask).ic
    except (EmptyOverlap, EmptyPool):
        return float("nan")


def run(config: RunConfig, panel: Panel | None = None, on_iteration=None) -> RunResult:
    """Execute the full mining loop; see the module docstring for the shape.

    ``on_iteration(state, tree, buffer)`` runs after each iteration's
    training pass (test/diagnostic hook).
    """
    if panel is None:
        panel = build_panel(config)
    state, split = _init_state(config, panel)
    return _run_loop(config, panel, split, state, on_iteration)


def _run_loop(config, panel, split, state: _RunState, on_iteration=None) -> RunResult:
    target = panel.forward_returns(config.horizon)
    train_mask = split.mask(panel.dates, "train")
    valid_mask = split.mask(panel.dates, "valid")

    for iteration in range(state.next_iteration, config.iterations):
        tree = SearchTree(state.env, state.policy, c_puct=config.c_puct)
        buffer = ReplayBuffer(config.cycles_per_iteration)
        returns = []
        for _ in range(config.cycles_per_iteration):
            traj = search_cycle(tree, buffer, state.rng)
            returns.append(traj.cumulative_reward)
        train_epoch(state.policy, buffer, state.tracker, config.policy_lr)
        train_ic = _split_ic(state.pool, panel, target, train_mask)
        valid_ic = _split_ic(state.pool, panel, target, valid_mask)
        if np.isfinite(train_ic):
            state.best_train_ic = max(state.best_train_ic, train_ic)
        state.report.append(
            IterationRow(
                iteration,
                train_ic,
                valid_ic,
                state.pool.size,
                state.tracker.q,
                float(np.mean(returns)) if returns else float("nan"),
            )
        )
        state.next_iteration = iteration + 1
        if config.checkpoint_dir:
            save_checkpoint(config, state)
        if on_iteration is not None:
            on_iteration(state, tree, buffer)
    return RunResult(state.pool, state.policy, state.tracker, state.report, state.best_train_ic)


# ---------------------------------------------------------------------------
# Checkpointing


def save_checkpoint(config: RunConfig, state: _RunState) -> None:
    out = config.checkpoint_dir
    os.makedirs(out, exist_ok=True)
    state.pool.save(os.path.join(out, "pool.json"))
    state.policy.save(os.path.join(out, "policy.npz"))
    blob = {
        "version": 1,
        "next_iteration": state.next_iteration,
        "best_train_ic": state.best_train_ic,
        "tracker": {"level": state.tracker.level, "beta": state.tracker.beta, "q": state.tracker.q},
        "rng_state": _jsonable(state.rng.bit_generator.state),
        "report": [vars(r) for r in state.report],
    }
    path = os.path.join(out, "state.json")
    with open(path + ".tmp", "w") as fh:
        json.dump(blob, fh, indent=1)
        fh.write("\n")
    os.replace(path + ".tmp", path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def resume(config: RunConfig, panel: Panel | None = None, on_iteration=None) -> RunResult:
    """Continue an interrupted run from its checkpoint directory."""
    if not config.checkpoint_dir:
        raise ConfigError("resume requires checkpoint_dir")
    if panel is None:
        panel = build_panel(config)
    state, split = _init_state(config, panel)
    out = config.checkpoint_dir
    with open(os.path.join(out, "state.json")) as fh:
        blob = json.load(fh)
    train_mask = split.mask(panel.dates, "train")
    target = panel.forward_returns(config.horizon)
    state.pool = AlphaPool.load(
        os.path.join(out, "pool.json"), panel, target, train_mask,
        rng=state.rng, fit_config=config.fit_config(),
    )
    state.env.pool = state.pool
    theta = np.load(os.path.join(out, "policy.npz"))["theta"]
    state.policy.set_theta(theta)
    t = blob["tracker"]
    state.tracker = QuantileTracker(level=t["level"], beta=t["beta"], q=t["q"])
    state.rng.bit_generator.state = blob["rng_state"]
    state.report = [IterationRow(**row) for row in blob["report"]]
    state.next_iteration = blob["next_iteration"]
    state.best_train_ic = blob["best_train_ic"]
    return _run_loop(config, panel, split, state, on_iteration)


# ---------------------------------------------------------------------------
# Quantile sweep (level vs achieved IC)


def quantile_sweep(config: RunConfig, levels, panel: Panel | None = None) -> list[dict]:
    """Run the pipeline once per quantile level with shared seeds."""
    if panel is None:
        panel = build_panel(config)
    rows = []
    for level in levels:
        cfg = replace(config, quantile_level=float(level), checkpoint_dir="")
        result = run(cfg, panel=panel)
        valid_ics = [r.valid_ic for r in result.report if np.isfinite(r.valid_ic)]
        rows.append(
            {
                "level": float(level),
                "best_valid_ic": max(valid_ics) if valid_ics else float("nan"),
                "best_train_ic": result.best_train_ic,
            }
        )
    return rows


def sweep_csv(rows: list[dict]) -> str:
    lines = ["level,best_valid_ic,best_train_ic"]
    for r in rows:
        lines.append(f"{r['level']!r},{r['best_valid_ic']!r},{r['best_train_ic']!r}")
    return "\n".join(lines) + "\n"
