"""Token alphabet for formulaic alpha expressions.

The vocabulary order is fixed and load-bearing: it defines the index space of
policy-network outputs and action masks. Features come first, then time
deltas, constants, operators (unary, binary, time-series unary, time-series
binary) and finally BEG/END.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable


class TokenKind(Enum):
    FEATURE = "feature"
    DELTA = "delta"
    CONSTANT = "constant"
    UNARY = "unary"
    BINARY = "binary"
    TS_UNARY = "ts_unary"
    TS_BINARY = "ts_binary"
    BEG = "beg"
    END = "end"


@dataclass(frozen=True)
class Token:
    """One symbol of the expression alphabet.

    ``name`` is the canonical text form; ``value`` carries the numeric payload
    for deltas (int window length) and constants (float).
    """

    kind: TokenKind
    name: str
    value: float | int | None = None

    def __repr__(self) -> str:
        return f"Token({self.name})"


FEATURES = ("open", "high", "low", "close", "volume", "vwap")
DELTAS = (1, 5, 10, 20, 30, 40, 50)
CONSTANTS = (-30.0, -10.0, -5.0, -2.0, -1.0, -0.5, -0.01, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0)
UNARY_OPS = ("Sign", "Abs", "Log", "CSRank")
BINARY_OPS = ("Add", "Sub", "Mul", "Div", "Greater", "Less")
TS_UNARY_OPS = ("Ref", "Rank", "Skew", "Kurt", "Mean", "Med", "Sum", "Std", "Var", "Max", "Min", "WMA", "EMA")
TS_BINARY_OPS = ("Cov", "Corr")

BEG = Token(TokenKind.BEG, "BEG")
END = Token(TokenKind.END, "END")

# Operand count on the typed stack (delta slot included for ts operators).
ARITY = {TokenKind.UNARY: 1, TokenKind.BINARY: 2, TokenKind.TS_UNARY: 2, TokenKind.TS_BINARY: 3}


def _build_full() -> tuple[Token, ...]:
    out: list[Token] = []
    out += [Token(TokenKind.FEATURE, f) for f in FEATURES]
    out += [Token(TokenKind.DELTA, str(d), d) for d in DELTAS]
    out += [Token(TokenKind.CONSTANT, repr(c), c) for c in CONSTANTS]
    out += [Token(TokenKind.UNARY, n) for n in UNARY_OPS]
    out += [Token(TokenKind.BINARY, n) for n in BINARY_OPS]
    out += [Token(TokenKind.TS_UNARY, n) for n in TS_UNARY_OPS]
    out += [Token(TokenKind.TS_BINARY, n) for n in TS_BINARY_OPS]
    out += [BEG, END]
    return tuple(out)


_FULL = _build_full()
_BY_NAME = {t.name: t for t in _FULL}


def token_vocabulary() -> list[Token]:
    """The full fixed alphabet, in canonical index order."""
    return list(_FULL)


def token_by_name(name: str) -> Token:
    """Canonical token for a name like ``close``, ``5``, ``-0.5`` or ``Mean``."""
    if name in _BY_NAME:
        return _BY_NAME[name]
    raise KeyError(f"unknown token name {name!r}")


class Vocabulary:
    """An ordered, indexable subset of the token alphabet.

    Always contains BEG and END. Restricted vocabularies keep the canonical
    relative order, so masks and policy outputs stay aligned with
    ``self.tokens`` indices.
    """

    def __init__(self, tokens: Iterable[Token]):
        toks = list(tokens)
        for required in (BEG, END):
            if required not in toks:
                toks.append(required)
        order = {t: i for i, t in enumerate(_FULL)}
        for t in toks:
            if t not in order:
                raise KeyError(f"token {t!r} is not part of the alphabet")
        self.tokens: tuple[Token, ...] = tuple(sorted(set(toks), key=order.__getitem__))
        self._index = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def full(cls) -> "Vocabulary":
        return cls(_FULL)

    @classmethod
    def subset(cls, names: Iterable[str]) -> "Vocabulary":
        return cls(token_by_name(n) for n in names)

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def beg_index(self) -> int:
        return self._index[BEG]

    @property
    def end_index(self) -> int:
        return self._index[END]

    def index(self, token: Token) -> int:
        return self._index[token]

    def __contains__(self, token: Token) -> bool:
        return token in self._index

    def __iter__(self):
        return iter(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def names(self) -> list[str]:
        return [t.name for t in self.tokens]
