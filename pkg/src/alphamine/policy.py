"""Risk-seeking policy: masked action distributions and quantile ascent.

The policy wraps the recurrent network with grammar-based legality masks. Its
training signal is the quantile policy gradient: a running estimate q of the
target quantile of episode returns is tracked by

    q <- q + beta * (level - 1{R <= q})

and each trajectory whose return falls at or below q contributes the ascent
direction -sum_t grad log pi(a_t | s_{t-1}); trajectories above the quantile
contribute nothing. Stepping the parameters along that direction pushes the
return distribution's upper tail upward.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .env import MdpState, Trajectory
from .errors import NonFiniteGradient
from .expr import Vocabulary, legal_mask
from .expr.grammar import MAX_BODY_TOKENS
from .network import GruPolicyNetwork, NetworkConfig


class Policy:
    """Masked token policy over expression prefixes."""

    def __init__(
        self,
        vocab: Vocabulary,
        rng: np.random.Generator,
        embed_dim: int = 32,
        hidden_dim: int = 64,
        gru_layers: int = 4,
        head_dims: tuple[int, ...] = (32, 32),
        max_episode_len: int = 30,
        mask_fn=None,
    ):
        self.vocab = vocab
        self.max_episode_len = max_episode_len
        self.net = GruPolicyNetwork(
            NetworkConfig(vocab.size, embed_dim, hidden_dim, gru_layers, head_dims), rng
        )
        self._mask_fn = mask_fn or self._grammar_mask

    def _grammar_mask(self, state: MdpState) -> np.ndarray:
        body = state.tokens[1:]
        budget = min(MAX_BODY_TOKENS, self.max_episode_len - 2) - len(body)
        return legal_mask(state.stack, budget, self.vocab)

    def mask(self, state: MdpState) -> np.ndarray:
        return self._mask_fn(state)

    # -- distributions ----------------------------------------------------

    def probabilities(self, state: MdpState, mask: np.ndarray | None = None) -> np.ndarray:
        """Distribution over vocabulary indices; exact zeros off the mask."""
        if mask is None:
            mask = self.mask(state)
        idx = [self.vocab.index(t) for t in state.tokens]
        logits = self.net.logits(idx)
        out = np.zeros_like(logits)
        legal = logits[mask]
        e = np.exp(legal - legal.max())
        out[mask] = e / e.sum()
        return out

    def sample(self, state: MdpState, rng: np.random.Generator, mask: np.ndarray | None = None):
        probs = self.probabilities(state, mask)
        cdf = np.cumsum(probs)
        i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return self.vocab.tokens[min(i, len(probs) - 1)]

    # -- gradients ----------------------------------------------------------

    def _trajectory_arrays(self, traj: Trajectory):
        inputs, actions, masks = [], [], []
        for tr in traj.transitions:
            inputs.append(self.vocab.index(tr.state.tokens[-1]))
            actions.append(self.vocab.index(tr.action))
            masks.append(self.mask(tr.state))
        return inputs, actions, masks

    def trajectory_log_prob(self, traj: Trajectory) -> float:
        return self.net.sequence_log_prob(*self._trajectory_arrays(traj))

    def log_prob_gradient(self, traj: Trajectory) -> np.ndarray:
        """sum_t grad_theta log pi(a_t | s_{t-1}); reverse-mode, exact."""
        _, grad = self.net.sequence_grad(*self._trajectory_arrays(traj))
        return grad

    def apply_update(self, estimate: np.ndarray, lr: float) -> None:
        """Ascent step theta <- theta + lr * estimate."""
        if not np.isfinite(estimate).all():
            raise NonFiniteGradient("gradient estimate has non-finite entries")
        self.net.add_theta(lr * estimate)

    @property
    def n_params(self) -> int:
        return self.net.n_params

    def theta(self) -> np.ndarray:
        return self.net.theta()

    def set_theta(self, flat: np.ndarray) -> None:
        self.net.set_theta(flat)

    # -- checkpointing -------------------------------------------------------

    def save(self, path) -> None:
        cfg = self.net.config
        meta = json.dumps(
            {
                "version": 1,
                "vocab": self.vocab.names(),
                "embed_dim": cfg.embed_dim,
                "hidden_dim": cfg.hidden_dim,
                "gru_layers": cfg.gru_layers,
                "head_dims": list(cfg.head_dims),
                "max_episode_len": self.max_episode_len,
            }
        )
        np.savez(path, meta=np.frombuffer(meta.encode(), dtype=np.uint8), theta=self.theta())

    @classmethod
    def load(cls, path, rng: np.random.Generator | None = None, mask_fn=None) -> "Policy":
        blob = np.load(path)
        meta = json.loads(bytes(blob["meta"]).decode())
        vocab = Vocabulary.subset(meta["vocab"])
        policy = cls(
            vocab,
            rng if rng is not None else np.random.default_rng(0),
            embed_dim=meta["embed_dim"],
            hidden_dim=meta["hidden_dim"],
            gru_layers=meta["gru_layers"],
            head_dims=tuple(meta["head_dims"]),
            max_episode_len=meta["max_episode_len"],
            mask_fn=mask_fn,
        )
        policy.set_theta(blob["theta"])
        return policy


@dataclass
class QuantileTracker:
    """Running estimate of the target return quantile."""

    level: float
    beta: float = 0.01
    q: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ValueError("quantile level must lie in (0, 1)")

    def update(self, episode_return: float) -> float:
        indicator = 1.0 if episode_return <= self.q else 0.0
        self.q += self.beta * (self.level - indicator)
        return self.q


def risk_gradient(policy: Policy, traj: Trajectory, tracker: QuantileTracker) -> np.ndarray:
    """Ascent direction: -grad log-likelihood for sub-quantile episodes, else 0."""
    if traj.cumulative_reward <= tracker.q:
        return -policy.log_prob_gradient(traj)
    return np.zeros(policy.n_params)


@dataclass
class TrainStats:
    final_q: float
    frac_below: float
    grad_norms: np.ndarray = field(repr=False)

    @property
    def mean_grad_norm(self) -> float:
        return float(self.grad_norms.mean()) if len(self.grad_norms) else 0.0


def train_epoch(policy: Policy, buffer, tracker: QuantileTracker, lr: float) -> TrainStats:
    """One pass over the replay buffer: track the quantile, step the policy.

    Trajectories are visited in buffer order; for each, the tracker is
    updated first and the risk gradient is taken at the fresh q.
    """
    norms = []
    below = 0
    total = 0
    for traj in buffer:
        total += 1
        tracker.update(traj.cumulative_reward)
        d = risk_gradient(policy, traj, tracker)
        if traj.cumulative_reward <= tracker.q:
            below += 1
        norms.append(float(np.linalg.norm(d)))
        policy.apply_update(d, lr)
    return TrainStats(tracker.q, below / total if total else 0.0, np.array(norms))
