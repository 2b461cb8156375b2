"""Vectorized evaluation of RPN expressions over a stock panel.

Conventions (shared with the operator reference in the README):

* Matrices are (stocks x days) float64; NaN marks a missing cell. Any
  operator with a missing input yields a missing output.
* Time-series operators use trailing windows of exactly t days ending today,
  so the first t-1 days are missing (Ref lags by t full days: first t days).
* Log of non-positive input, division by zero, Std/Var/Skew/Kurt of a
  constant window, and Cov/Corr over windows with fewer than two points or a
  constant side all yield missing cells, never exceptions.
* CSRank ranks today's values across tradable stocks, average ranks on ties,
  output in 1..m; non-tradable cells are missing.
* WMA weights today's value t, yesterday's t-1, down to 1. EMA uses smoothing
  2/(t+1) renormalized over the trailing window.
* Sign is the positive-part indicator: 1 where x > 0, else 0.
* Greater/Less are {0,1} comparison indicators.

Evaluation is a pure function of (expression, panel) and safe to call
concurrently.
"""
from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from ..errors import InvalidExpression
from .expression import Expression
from .tokens import Token, TokenKind


def evaluate(expr: Expression, panel) -> np.ndarray:
    """Evaluate a complete expression; returns a (stocks x days) matrix."""
    return evaluate_tokens(expr.tokens, panel)


def evaluate_tokens(tokens: Sequence[Token], panel) -> np.ndarray:
    """Stack-machine evaluation of a complete body. NaN marks missing cells."""
    shape = (panel.n_stocks, panel.n_days)
    stack: list = []
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for tok in tokens:
            kind = tok.kind
            if kind is TokenKind.FEATURE:
                stack.append(panel.feature(tok.name).copy())
            elif kind is TokenKind.CONSTANT:
                stack.append(float(tok.value))
            elif kind is TokenKind.DELTA:
                stack.append(int(tok.value))
            elif kind is TokenKind.UNARY:
                x = stack.pop()
                stack.append(_unary(tok.name, x, panel))
            elif kind is TokenKind.BINARY:
                y, x = stack.pop(), stack.pop()
                stack.append(_binary(tok.name, x, y))
            elif kind is TokenKind.TS_UNARY:
                t, x = stack.pop(), stack.pop()
                stack.append(_ts_unary(tok.name, _as_matrix(x, shape), t))
            elif kind is TokenKind.TS_BINARY:
                t, y, x = stack.pop(), stack.pop(), stack.pop()
                stack.append(_ts_binary(tok.name, _as_matrix(x, shape), _as_matrix(y, shape), t))
            else:
                raise InvalidExpression(f"token {tok.name} is not evaluable")
    if len(stack) != 1:
        raise InvalidExpression(f"evaluation left {len(stack)} values on the stack")
    return _scrub(_as_matrix(stack[0], shape))


def _as_matrix(x, shape) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x
    return np.full(shape, float(x))


def _scrub(x: np.ndarray) -> np.ndarray:
    x[~np.isfinite(x)] = np.nan
    return x


def _unary(name: str, x, panel):
    if name == "Sign":
        if isinstance(x, np.ndarray):
            return np.where(np.isnan(x), np.nan, (x > 0).astype(float))
        return np.nan if np.isnan(x) else float(x > 0)
    if name == "Abs":
        return np.abs(x)
    if name == "Log":
        out = np.log(x)
        return _scrub(out) if isinstance(out, np.ndarray) else (out if np.isfinite(out) else np.nan)
    if name == "CSRank":
        m = _as_matrix(x, (panel.n_stocks, panel.n_days)).copy()
        m[~panel.tradable] = np.nan
        return rankdata(m, method="average", axis=0, nan_policy="omit")
    raise InvalidExpression(f"unknown unary operator {name}")


def _binary(name: str, x, y):
    if name == "Add":
        return _scrub_any(x + y)
    if name == "Sub":
        return _scrub_any(x - y)
    if name == "Mul":
        return _scrub_any(x * y)
    if name == "Div":
        return _scrub_any(x / y)
    if name in ("Greater", "Less"):
        nan_in = _isnan_any(x) | _isnan_any(y) if isinstance(x, np.ndarray) or isinstance(y, np.ndarray) else (np.isnan(x) or np.isnan(y))
        hit = (x > y) if name == "Greater" else (x < y)
        if isinstance(hit, np.ndarray):
            return np.where(nan_in, np.nan, hit.astype(float))
        return np.nan if nan_in else float(hit)
    raise InvalidExpression(f"unknown binary operator {name}")


def _scrub_any(v):
    if isinstance(v, np.ndarray):
        return _scrub(v)
    return v if np.isfinite(v) else np.nan


def _isnan_any(v):
    return np.isnan(v) if isinstance(v, np.ndarray) else np.isnan(v)


def _ts_unary(name: str, x: np.ndarray, t: int) -> np.ndarray:
    out = np.full_like(x, np.nan)
    n_days = x.shape[1]
    if name == "Ref":
        if t < n_days:
            out[:, t:] = x[:, :-t]
        return out
    if t > n_days:
        return out
    win = sliding_window_view(x, t, axis=1)  # (stocks, days-t+1, t), oldest first
    if name == "Mean":
        out[:, t - 1 :] = win.mean(-1)
    elif name == "Sum":
        out[:, t - 1 :] = win.sum(-1)
    elif name == "Med":
        out[:, t - 1 :] = np.median(win, -1)
    elif name == "Max":
        out[:, t - 1 :] = win.max(-1)
    elif name == "Min":
        out[:, t - 1 :] = win.min(-1)
    elif name in ("Std", "Var", "Skew", "Kurt"):
        out[:, t - 1 :] = _moment_stat(name, win)
    elif name == "Rank":
        last = win[..., -1:]
        less = (win < last).sum(-1)
        eq = (win == last).sum(-1)
        vals = less + (eq + 1) / 2.0
        out[:, t - 1 :] = np.where(np.isnan(win).any(-1), np.nan, vals)
    elif name == "WMA":
        w = np.arange(1, t + 1, dtype=float)  # oldest..today
        out[:, t - 1 :] = win @ w / w.sum()
    elif name == "EMA":
        a = 2.0 / (t + 1)
        w = (1.0 - a) ** np.arange(t - 1, -1, -1, dtype=float)
        out[:, t - 1 :] = win @ w / w.sum()
    else:
        raise InvalidExpression(f"unknown time-series operator {name}")
    return _scrub(out)


def _moment_stat(name: str, win: np.ndarray) -> np.ndarray:
    const = (win == win[..., :1]).all(-1)  # exact-constant windows are undefined
    m1 = win.mean(-1)
    d = win - m1[..., None]
    m2 = (d * d).mean(-1)
    if name == "Var":
        vals = m2
    elif name == "Std":
        vals = np.sqrt(m2)
    elif name == "Skew":
        m3 = (d * d * d).mean(-1)
        vals = m3 / m2**1.5
    else:  # Kurt: excess kurtosis
        m4 = (d * d * d * d).mean(-1)
        vals = m4 / (m2 * m2) - 3.0
    return np.where(const, np.nan, vals)


def _ts_binary(name: str, x: np.ndarray, y: np.ndarray, t: int) -> np.ndarray:
    out = np.full_like(x, np.nan)
    n_days = x.shape[1]
    if t < 2 or t > n_days:
        return out
    wx = sliding_window_view(x, t, axis=1)
    wy = sliding_window_view(y, t, axis=1)
    dx = wx - wx.mean(-1)[..., None]
    dy = wy - wy.mean(-1)[..., None]
    cov = (dx * dy).mean(-1)
    if name == "Cov":
        out[:, t - 1 :] = cov
        return _scrub(out)
    if name == "Corr":
        constx = (wx == wx[..., :1]).all(-1)
        consty = (wy == wy[..., :1]).all(-1)
        vx = (dx * dx).mean(-1)
        vy = (dy * dy).mean(-1)
        vals = cov / np.sqrt(vx * vy)
        out[:, t - 1 :] = np.where(constx | consty, np.nan, vals)
        return _scrub(out)
    raise InvalidExpression(f"unknown time-series operator {name}")


__all__ = ["evaluate", "evaluate_tokens"]
