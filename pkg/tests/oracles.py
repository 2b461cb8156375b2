"""Independent reference implementations used only by tests.

The expression oracle interprets the operator tree recursively with per-day
window slabs (no stride tricks, no stack machine, its own integer ranking
code), so it shares no machinery with the production evaluator. Metric
oracles follow the per-day textbook formulas via numpy's corrcoef. The pool
oracle solves the normal equations directly.
"""
from __future__ import annotations

import warnings

import numpy as np

from alphamine.expr import ARITY, Token, TokenKind


# ---------------------------------------------------------------------------
# Recursive tree interpreter


class TreeNode:
    def __init__(self, token: Token, children):
        self.token = token
        self.children = tuple(children)


def build_tree(tokens) -> TreeNode:
    """Fold an RPN token list into an operator tree (own tiny builder)."""
    stack: list[TreeNode] = []
    for tok in tokens:
        if tok.kind in (TokenKind.FEATURE, TokenKind.CONSTANT, TokenKind.DELTA):
            stack.append(TreeNode(tok, ()))
        else:
            n = ARITY[tok.kind]
            children = stack[-n:]
            del stack[-n:]
            stack.append(TreeNode(tok, children))
    assert len(stack) == 1
    return stack[0]


def tree_evaluate(tokens, panel) -> np.ndarray:
    """Recursive evaluation with per-day slab windows; NaN marks missing."""
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = _eval(build_tree(tokens), panel)
    out = np.array(out, dtype=float)
    out[~np.isfinite(out)] = np.nan
    return out


def _eval(node: TreeNode, panel):
    tok = node.token
    shape = (panel.n_stocks, panel.n_days)
    if tok.kind is TokenKind.FEATURE:
        return panel.feature(tok.name).copy()
    if tok.kind is TokenKind.CONSTANT:
        return np.full(shape, float(tok.value))
    if tok.kind is TokenKind.UNARY:
        x = _eval(node.children[0], panel)
        return _clean(_oracle_unary(tok.name, x, panel))
    if tok.kind is TokenKind.BINARY:
        x = _eval(node.children[0], panel)
        y = _eval(node.children[1], panel)
        return _clean(_oracle_binary(tok.name, x, y))
    if tok.kind is TokenKind.TS_UNARY:
        x = _eval(node.children[0], panel)
        t = int(node.children[1].token.value)
        return _clean(_oracle_ts(tok.name, x, None, t))
    if tok.kind is TokenKind.TS_BINARY:
        x = _eval(node.children[0], panel)
        y = _eval(node.children[1], panel)
        t = int(node.children[2].token.value)
        return _clean(_oracle_ts(tok.name, x, y, t))
    raise AssertionError(f"unexpected token {tok}")


def _clean(x):
    x = np.asarray(x, dtype=float)
    x[~np.isfinite(x)] = np.nan
    return x


def average_rank_among(values: np.ndarray, probe: np.ndarray) -> np.ndarray:
    """Average rank of each probe among its row of values (integer counts)."""
    less = (values < probe[:, None]).sum(axis=1)
    leq = (values <= probe[:, None]).sum(axis=1)
    return (less + leq + 1) / 2.0


def _oracle_unary(name, x, panel):
    if name == "Sign":
        return np.where(np.isnan(x), np.nan, (x > 0).astype(float))
    if name == "Abs":
        return np.abs(x)
    if name == "Log":
        return np.log(x)
    if name == "CSRank":
        out = np.full_like(x, np.nan)
        for d in range(x.shape[1]):
            col = x[:, d]
            ok = panel.tradable[:, d] & ~np.isnan(col)
            if ok.any():
                vals = col[ok]
                out[ok, d] = average_rank_among(np.tile(vals, (len(vals), 1)), vals)
        return out
    raise AssertionError(name)


def _oracle_binary(name, x, y):
    if name == "Add":
        return x + y
    if name == "Sub":
        return x - y
    if name == "Mul":
        return x * y
    if name == "Div":
        return x / y
    nan_in = np.isnan(x) | np.isnan(y)
    hit = (x > y) if name == "Greater" else (x < y)
    return np.where(nan_in, np.nan, hit.astype(float))


def _oracle_ts(name, x, y, t):
    s, n_days = x.shape
    out = np.full((s, n_days), np.nan)
    for d in range(n_days):
        if name == "Ref":
            if d - t >= 0:
                out[:, d] = x[:, d - t]
            continue
        lo = d - t + 1
        if lo < 0:
            continue
        slab = x[:, lo : d + 1]
        if name in ("Cov", "Corr"):
            if t < 2:
                continue
            slab_y = y[:, lo : d + 1]
            dx = slab - slab.mean(axis=1, keepdims=True)
            dy = slab_y - slab_y.mean(axis=1, keepdims=True)
            cov = (dx * dy).mean(axis=1)
            if name == "Cov":
                out[:, d] = cov
            else:
                vx = (dx * dx).mean(axis=1)
                vy = (dy * dy).mean(axis=1)
                constant = ((slab == slab[:, :1]).all(axis=1)) | ((slab_y == slab_y[:, :1]).all(axis=1))
                out[:, d] = np.where(constant, np.nan, cov / np.sqrt(vx * vy))
            continue
        out[:, d] = _slab_stat(name, slab, t)
    return out


def _slab_stat(name, slab, t):
    if name == "Mean":
        return slab.mean(axis=1)
    if name == "Sum":
        return slab.sum(axis=1)
    if name == "Med":
        return np.median(slab, axis=1)
    if name == "Max":
        return slab.max(axis=1)
    if name == "Min":
        return slab.min(axis=1)
    if name == "Rank":
        ranks = average_rank_among(slab, slab[:, -1])
        return np.where(np.isnan(slab).any(axis=1), np.nan, ranks)
    if name == "WMA":
        w = np.array([float(j + 1) for j in range(t)])
        return slab @ w / w.sum()
    if name == "EMA":
        a = 2.0 / (t + 1)
        w = np.array([(1.0 - a) ** (t - 1 - j) for j in range(t)])
        return slab @ w / w.sum()
    constant = (slab == slab[:, :1]).all(axis=1)
    d = slab - slab.mean(axis=1, keepdims=True)
    m2 = (d * d).mean(axis=1)
    if name == "Var":
        vals = m2
    elif name == "Std":
        vals = np.sqrt(m2)
    elif name == "Skew":
        vals = (d * d * d).mean(axis=1) / m2**1.5
    elif name == "Kurt":
        vals = (d * d * d * d).mean(axis=1) / (m2 * m2) - 3.0
    else:
        raise AssertionError(name)
    return np.where(constant, np.nan, vals)


# ---------------------------------------------------------------------------
# Metric oracles (per-day textbook formulas)


def daily_pearson_oracle(a, b, ok):
    """List of per-day Pearson values via numpy.corrcoef; skips bad days."""
    out = []
    for d in range(a.shape[1]):
        m = ok[:, d]
        if m.sum() < 2:
            continue
        xa, xb = a[m, d], b[m, d]
        if xa.std() == 0 or xb.std() == 0:
            continue
        out.append(float(np.corrcoef(xa, xb)[0, 1]))
    return out


def spearman_oracle(a, b, ok):
    out = []
    for d in range(a.shape[1]):
        m = ok[:, d]
        if m.sum() < 2:
            continue
        ra = average_rank_among(np.tile(a[m, d], (m.sum(), 1)), a[m, d])
        rb = average_rank_among(np.tile(b[m, d], (m.sum(), 1)), b[m, d])
        if ra.std() == 0 or rb.std() == 0:
            continue
        out.append(float(np.corrcoef(ra, rb)[0, 1]))
    return out


# ---------------------------------------------------------------------------
# Pool weight oracle


def normal_equation_weights(caches, target, ok):
    """Least-squares weights over jointly valid cells via lstsq."""
    a = np.stack([c[ok] for c in caches], axis=1)
    y = target[ok]
    w, *_ = np.linalg.lstsq(a, y, rcond=None)
    return w
