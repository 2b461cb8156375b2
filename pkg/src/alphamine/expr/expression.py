"""Validated RPN expressions and the canonical text form.

Text grammar (whitespace-insensitive):

    expr   := feature | number | call
    call   := NAME "(" expr { "," expr } ")"
    number := ["-"] digits ["." digits]

Features are bare lowercase names. Operators are calls with fixed arity;
time-series operators take an integer window literal from the delta set as
their final argument. Bare numbers elsewhere must belong to the constant set.
Token sequences are the postorder walk of the call tree, so
``parse(unparse(e)) == e`` token for token.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import ArityError, InvalidExpression, ParseError
from .grammar import MAX_BODY_TOKENS, is_complete, stack_of
from .tokens import (
    ARITY,
    CONSTANTS,
    DELTAS,
    FEATURES,
    Token,
    TokenKind,
    token_by_name,
    token_vocabulary,
)

_OP_KINDS = (TokenKind.UNARY, TokenKind.BINARY, TokenKind.TS_UNARY, TokenKind.TS_BINARY)
_OP_NAMES = {t.name: t for t in token_vocabulary() if t.kind in _OP_KINDS}


@dataclass(frozen=True)
class Expression:
    """An arity-checked RPN token sequence evaluating to a single Series."""

    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise InvalidExpression("empty expression")
        if len(self.tokens) > MAX_BODY_TOKENS:
            raise InvalidExpression(
                f"expression has {len(self.tokens)} tokens; cap is {MAX_BODY_TOKENS}"
            )
        for tok in self.tokens:
            if tok.kind in (TokenKind.BEG, TokenKind.END):
                raise InvalidExpression("BEG/END do not belong inside an expression body")
        stack = stack_of(self.tokens)
        if not is_complete(stack):
            raise InvalidExpression(f"expression leaves stack {stack}, not a single Series")

    def unparse(self) -> str:
        """Canonical text form (round-trips through :func:`parse`)."""
        stack: list[str] = []
        for tok in self.tokens:
            if tok.kind in (TokenKind.FEATURE, TokenKind.DELTA, TokenKind.CONSTANT):
                stack.append(tok.name)
            else:
                n = ARITY[tok.kind]
                args = stack[-n:]
                del stack[-n:]
                stack.append(f"{tok.name}({', '.join(args)})")
        return stack[0]

    def __str__(self) -> str:
        return self.unparse()

    def __len__(self) -> int:
        return len(self.tokens)


_TOKEN_RE = re.compile(r"\s*(?:(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<num>-?\d+(?:\.\d+)?)|(?P<punct>[(),]))")


class _Lexer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.items: list[tuple[str, str, int]] = []
        while self.pos < len(text):
            m = _TOKEN_RE.match(text, self.pos)
            if m is None or m.end() == self.pos:
                if text[self.pos :].strip():
                    raise ParseError(f"unexpected character {text[self.pos]!r}", self.pos)
                break
            start = m.start(m.lastgroup)  # type: ignore[arg-type]
            self.items.append((m.lastgroup, m.group(m.lastgroup), start))  # type: ignore[arg-type]
            self.pos = m.end()
        self.i = 0

    def peek(self):
        return self.items[self.i] if self.i < len(self.items) else (None, "", len(self.text))

    def next(self):
        item = self.peek()
        self.i += 1
        return item


def parse(text: str) -> Expression:
    """Parse canonical expression text into a validated :class:`Expression`."""
    lex = _Lexer(text)
    tokens: list[Token] = []
    _parse_expr(lex, tokens, delta_slot=False)
    kind, value, pos = lex.peek()
    if kind is not None:
        raise ParseError(f"trailing input {value!r}", pos)
    return Expression(tuple(tokens))


def _parse_expr(lex: _Lexer, out: list[Token], delta_slot: bool) -> None:
    kind, value, pos = lex.next()
    if kind == "num":
        out.append(_number_token(value, pos, delta_slot))
        return
    if kind != "name":
        raise ParseError(f"expected expression, found {value!r}" if value else "unexpected end of input", pos)
    if delta_slot:
        raise ParseError(f"expected integer window, found {value!r}", pos)
    nxt_kind, _, _ = lex.peek()
    if nxt_kind == "punct" and lex.peek()[1] == "(":
        _parse_call(lex, value, pos, out)
        return
    if value in FEATURES:
        out.append(token_by_name(value))
        return
    if value in _OP_NAMES:
        raise ParseError(f"operator {value!r} requires arguments", pos)
    raise ParseError(f"unknown name {value!r}", pos)


def _parse_call(lex: _Lexer, name: str, pos: int, out: list[Token]) -> None:
    if name not in _OP_NAMES:
        raise ParseError(f"unknown operator {name!r}", pos)
    op = _OP_NAMES[name]
    arity = ARITY[op.kind]
    takes_delta = op.kind in (TokenKind.TS_UNARY, TokenKind.TS_BINARY)
    lex.next()  # consume "("
    args = 0
    while True:
        is_last_allowed = takes_delta and args == arity - 1
        _parse_expr(lex, out, delta_slot=is_last_allowed)
        args += 1
        kind, value, p = lex.next()
        if kind == "punct" and value == ",":
            if args >= arity:
                raise ArityError(f"{name} takes {arity} arguments, got more")
            continue
        if kind == "punct" and value == ")":
            break
        raise ParseError(f"expected ',' or ')', found {value!r}" if value else "unexpected end of input", p)
    if args != arity:
        raise ArityError(f"{name} takes {arity} arguments, got {args}")
    out.append(op)


def _number_token(text: str, pos: int, delta_slot: bool) -> Token:
    if delta_slot:
        if "." in text:
            raise ParseError(f"window length must be an integer, found {text!r}", pos)
        d = int(text)
        if d not in DELTAS:
            raise ParseError(f"window length {d} not in the delta set {DELTAS}", pos)
        return token_by_name(text)
    c = float(text)
    if c not in CONSTANTS:
        raise ParseError(f"constant {text} not in the constant set", pos)
    return token_by_name(repr(c))


__all__ = ["Expression", "parse"]
