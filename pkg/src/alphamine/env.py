"""Reward-dense MDP over token sequences.

States are token sequences starting at BEG. Transitions are deterministic.
Whenever the body so far forms a complete valid expression, the step earns an
intermediate reward ``IC - lam * mean(mutIC_i)`` against the current pool
(just IC when the pool is empty); other non-terminal steps earn 0. Selecting
END adds the expression to the pool (Algorithm-1 maintenance, including any
eviction) and earns the refreshed composite's training-window IC.

Degenerate expressions that are legal but unusable (all-missing on the
training window, or with an undefined cross-sectional correlation) earn 0 and
are not added to the pool; search must never crash on them.

Non-terminal steps are pure given a pool snapshot; only END mutates the pool,
and the pipeline serializes all END transitions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyOverlap, EvaluationError, IllegalAction, TerminalState
from .expr import (
    BEG,
    END,
    Expression,
    Token,
    TokenKind,
    Vocabulary,
    apply_token,
    evaluate_tokens,
    is_complete,
    legal_next,
)
from .expr.grammar import Stack
from .panel import Panel, compute_ic, compute_mut_ic, standardize_daily
from .pool import AlphaPool


@dataclass(frozen=True)
class MdpState:
    """Token sequence from BEG, with its typed stack precomputed."""

    tokens: tuple[Token, ...]
    stack: Stack
    done: bool = False

    @property
    def step(self) -> int:
        return len(self.tokens)

    @property
    def body(self) -> tuple[Token, ...]:
        return self.tokens[1:-1] if self.done else self.tokens[1:]


@dataclass(frozen=True)
class Transition:
    state: MdpState
    action: Token
    reward: float
    next_state: MdpState


@dataclass
class Trajectory:
    """One BEG-to-END episode; undiscounted return."""

    transitions: list[Transition] = field(default_factory=list)

    @property
    def cumulative_reward(self) -> float:
        return float(sum(t.reward for t in self.transitions))

    @property
    def tokens(self) -> tuple[Token, ...]:
        return self.transitions[-1].next_state.tokens

    @property
    def actions(self) -> tuple[Token, ...]:
        return tuple(t.action for t in self.transitions)

    def __len__(self) -> int:
        return len(self.transitions)


def intermediate_reward(ic: float, mut_ics, lam: float) -> float:
    """Dense reward for a valid body: IC minus the scaled mean mutual IC."""
    mut_ics = list(mut_ics)
    if not mut_ics:
        return ic
    return ic - lam * (sum(mut_ics) / len(mut_ics))


class MiningEnv:
    """Binds the grammar, a panel, and an alpha pool into the mining MDP."""

    def __init__(
        self,
        panel: Panel,
        target: np.ndarray,
        train_mask: np.ndarray,
        pool: AlphaPool,
        vocab: Vocabulary,
        lam: float = 0.1,
        max_episode_len: int = 30,
    ):
        self.panel = panel
        self.target = target
        self.train_mask = np.asarray(train_mask, dtype=bool)
        self.pool = pool
        self.vocab = vocab
        self.lam = lam
        self.max_episode_len = max_episode_len
        self.max_body = max_episode_len - 2
        self._stats_cache: dict[tuple[Token, ...], tuple[np.ndarray, float | None]] = {}
        self._mut_cache: dict[tuple[tuple[Token, ...], tuple[Token, ...]], float] = {}

    def reset(self) -> MdpState:
        return MdpState(tokens=(BEG,), stack=())

    def body_budget(self, state: MdpState) -> int:
        return self.max_body - len(state.body)

    def actions(self, state: MdpState) -> list[Token]:
        """Legal tokens; END included iff the body is a complete expression."""
        if state.done:
            raise TerminalState("episode already finished")
        return legal_next(state.stack, self.body_budget(state), self.vocab)

    def legal_mask(self, state: MdpState) -> np.ndarray:
        if state.done:
            raise TerminalState("episode already finished")
        mask = np.zeros(self.vocab.size, dtype=bool)
        for tok in self.actions(state):
            mask[self.vocab.index(tok)] = True
        return mask

    def step(self, state: MdpState, action: Token) -> Transition:
        if state.done:
            raise TerminalState("episode already finished")
        if action.kind is TokenKind.END:
            if not is_complete(state.stack):
                raise IllegalAction("END before the body is complete")
            next_state = MdpState(state.tokens + (END,), state.stack, done=True)
            reward = self._terminal_reward(state.body)
            return Transition(state, action, reward, next_state)
        new_stack = apply_token(state.stack, action)
        if new_stack is None or action not in self.actions(state):
            raise IllegalAction(f"token {action.name} is illegal at this state")
        next_state = MdpState(state.tokens + (action,), new_stack)
        reward = 0.0
        if is_complete(new_stack):
            reward = self._intermediate(next_state.body)
        return Transition(state, action, reward, next_state)

    # -- reward internals ---------------------------------------------------

    def _alpha_stats(self, body: tuple[Token, ...]) -> tuple[np.ndarray, float | None]:
        """Standardized matrix and training IC of a complete body (cached)."""
        hit = self._stats_cache.get(body)
        if hit is not None:
            return hit
        cache = standardize_daily(evaluate_tokens(body, self.panel), self.panel.tradable)
        try:
            ic = compute_ic(cache, self.target, self.panel.tradable, self.train_mask).ic
        except EmptyOverlap:
            ic = None
        self._stats_cache[body] = (cache, ic)
        return cache, ic

    def _intermediate(self, body: tuple[Token, ...]) -> float:
        cache, ic = self._alpha_stats(body)
        if ic is None:
            return 0.0
        muts = [self._mut_ic(body, cache, i) for i in range(self.pool.size)]
        return intermediate_reward(ic, muts, self.lam)

    def _mut_ic(self, body, cache, pool_index: int) -> float:
        other_body = self.pool.exprs[pool_index].tokens
        key = (body, other_body)
        hit = self._mut_cache.get(key)
        if hit is not None:
            return hit
        try:
            value = compute_mut_ic(
                cache, self.pool.caches[pool_index], self.panel.tradable, self.train_mask
            )
        except EmptyOverlap:
            value = 0.0
        self._mut_cache[key] = value
        return value

    def _terminal_reward(self, body: tuple[Token, ...]) -> float:
        cache, ic = self._alpha_stats(body)
        try:
            return self.pool.add_alpha(Expression(body), cache=cache)
        except EvaluationError:
            return 0.0
