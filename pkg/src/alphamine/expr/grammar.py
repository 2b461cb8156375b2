"""Typed stack machine over token sequences.

An expression body is read left to right as postfix code against a stack of
three value types. Series is a per-stock per-day panel of numbers, Scalar a
broadcast constant, Delta a time-window length. Deltas are only consumable as
the final argument of a time-series operator, so a live stack holds at most
one Delta and only on top. A body is complete when the stack is exactly
[Series].

``legal_next`` is the action mask used by the mining MDP: a token is legal iff
at least one completion exists within the remaining body-token budget (END is
free and is offered exactly when the body is already complete).
"""
from __future__ import annotations

from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from ..errors import InvalidExpression
from .tokens import END, Token, TokenKind, Vocabulary

# Body length cap: a 30-token episode minus BEG and END.
MAX_BODY_TOKENS = 28

_UNREACHABLE = 10**9


class StackType(Enum):
    SERIES = "series"
    SCALAR = "scalar"
    DELTA = "delta"


SERIES = StackType.SERIES
SCALAR = StackType.SCALAR
DELTA = StackType.DELTA

Stack = tuple[StackType, ...]

_OPERAND = (SERIES, SCALAR)


def apply_token(stack: Stack, token: Token) -> Stack | None:
    """Stack after pushing/applying ``token``, or None if not applicable."""
    kind = token.kind
    if kind is TokenKind.FEATURE:
        return stack + (SERIES,)
    if kind is TokenKind.CONSTANT:
        return stack + (SCALAR,)
    if kind is TokenKind.DELTA:
        return stack + (DELTA,)
    if kind is TokenKind.UNARY:
        if not stack or stack[-1] not in _OPERAND:
            return None
        out = SERIES if token.name == "CSRank" else stack[-1]
        return stack[:-1] + (out,)
    if kind is TokenKind.BINARY:
        if len(stack) < 2 or stack[-1] not in _OPERAND or stack[-2] not in _OPERAND:
            return None
        out = SERIES if SERIES in stack[-2:] else SCALAR
        return stack[:-2] + (out,)
    if kind is TokenKind.TS_UNARY:
        if len(stack) < 2 or stack[-1] is not DELTA or stack[-2] not in _OPERAND:
            return None
        return stack[:-2] + (SERIES,)
    if kind is TokenKind.TS_BINARY:
        if len(stack) < 3 or stack[-1] is not DELTA or stack[-2] not in _OPERAND or stack[-3] not in _OPERAND:
            return None
        return stack[:-3] + (SERIES,)
    return None  # BEG / END are episode delimiters, not stack operations


def is_alive(stack: Stack) -> bool:
    """Whether some continuation can still reach the complete state [Series]."""
    deltas = [i for i, t in enumerate(stack) if t is DELTA]
    if not deltas:
        return True
    # A Delta is consumable only while on top with at least one operand below;
    # anything stacked above it can never be cleared away.
    return len(deltas) == 1 and deltas[0] == len(stack) - 1 and len(stack) >= 2


def completion_cost(stack: Stack) -> int:
    """Minimum number of further body tokens needed to reach [Series]."""
    if not is_alive(stack):
        return _UNREACHABLE
    if not stack:
        return 1  # push any feature
    if stack[-1] is DELTA:
        below = len(stack) - 1
        # Ts op consumes the delta plus one or two operands, leaving a Series
        # that then merges down by binary operators.
        return max(1, below - 1)
    n_series = sum(1 for t in stack if t is SERIES)
    if n_series > 0:
        return len(stack) - 1  # binary merges, Series type is absorbing
    return len(stack)  # all Scalar: merges plus one CSRank


def is_complete(stack: Stack) -> bool:
    return stack == (SERIES,)


def stack_of(body: Sequence[Token]) -> Stack:
    """Fold a body token sequence through the stack machine."""
    stack: Stack = ()
    for tok in body:
        nxt = apply_token(stack, tok)
        if nxt is None:
            raise InvalidExpression(f"token {tok.name} not applicable to stack {stack}")
        stack = nxt
    return stack


def legal_next(prefix: Sequence[Token] | Stack, budget: int, vocab: Vocabulary) -> list[Token]:
    """Tokens whose selection keeps a complete expression reachable.

    ``prefix`` is the body so far (or its precomputed stack); ``budget`` is
    the number of body tokens that may still be appended (END is free). END is
    included iff the body is already complete. Results are memoized on the
    vocabulary: legality depends only on the typed stack and the budget.
    """
    if prefix and isinstance(prefix[0], StackType):
        stack = tuple(prefix)
    else:
        stack = stack_of(prefix)  # type: ignore[arg-type]
    cache = vocab.__dict__.setdefault("_legal_cache", {})
    # Legality saturates once the budget covers the costliest successor.
    budget = min(budget, len(stack) + 2)
    key = (stack, budget)
    hit = cache.get(key)
    if hit is not None:
        return list(hit)
    out: list[Token] = []
    for tok in vocab:
        if tok.kind is TokenKind.BEG:
            continue
        if tok.kind is TokenKind.END:
            if is_complete(stack):
                out.append(tok)
            continue
        nxt = apply_token(stack, tok)
        if nxt is not None and completion_cost(nxt) <= budget - 1:
            out.append(tok)
    cache[key] = tuple(out)
    return out


def legal_mask(stack: Stack, budget: int, vocab: Vocabulary) -> np.ndarray:
    """Boolean mask over ``vocab`` indices for :func:`legal_next`."""
    mask = np.zeros(vocab.size, dtype=bool)
    for tok in legal_next(stack, budget, vocab):
        mask[vocab.index(tok)] = True
    return mask


def random_body(
    rng: np.random.Generator,
    vocab: Vocabulary,
    max_tokens: int = MAX_BODY_TOKENS,
    end_bias: float = 0.3,
) -> list[Token]:
    """Sample a random complete expression body by walking the stack machine.

    At states where END is legal, terminate with probability ``end_bias``
    (always when the budget is spent). Uniform over legal body tokens
    otherwise. Deterministic given ``rng``.
    """
    body: list[Token] = []
    stack: Stack = ()
    while True:
        legal = legal_next(stack, max_tokens - len(body), vocab)
        growth = [t for t in legal if t.kind is not TokenKind.END]
        if is_complete(stack) and (not growth or rng.random() < end_bias):
            return body
        if not growth:
            raise InvalidExpression("dead sampling state; vocabulary cannot complete")
        tok = growth[rng.integers(len(growth))]
        body.append(tok)
        stack = apply_token(stack, tok)  # type: ignore[assignment]


def body_is_valid(body: Sequence[Token]) -> bool:
    """True when the body parses through the stack machine to [Series]."""
    stack: Stack = ()
    for tok in body:
        nxt = apply_token(stack, tok)
        if nxt is None:
            return False
        stack = nxt
    return is_complete(stack)


def iter_bodies(vocab: Vocabulary, max_tokens: int) -> Iterable[tuple[Token, ...]]:
    """Exhaustively enumerate complete bodies up to ``max_tokens`` tokens.

    Test utility: feasible only for tiny vocabularies / budgets.
    """

    def walk(body: tuple[Token, ...], stack: Stack):
        if is_complete(stack):
            yield body
        if len(body) == max_tokens:
            return
        for tok in vocab:
            if tok.kind in (TokenKind.BEG, TokenKind.END):
                continue
            nxt = apply_token(stack, tok)
            if nxt is not None and completion_cost(nxt) <= max_tokens - len(body) - 1:
                yield from walk(body + (tok,), nxt)

    yield from walk((), ())


__all__ = [
    "MAX_BODY_TOKENS",
    "StackType",
    "SERIES",
    "SCALAR",
    "DELTA",
    "Stack",
    "apply_token",
    "is_alive",
    "completion_cost",
    "is_complete",
    "stack_of",
    "legal_next",
    "legal_mask",
    "random_body",
    "body_is_valid",
    "iter_bodies",
    "END",
]
