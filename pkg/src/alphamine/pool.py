"""Bounded alpha pool with MSE-fitted linear weights.

The pool holds up to K expressions. Each entry's alpha matrix is evaluated on
the full panel, restricted to tradable cells and z-scored per day (without
normalization the magnitude of a fitted weight would be scale-confounded and
min-|weight| eviction meaningless). Weights are fitted to the training-window
forward returns by gradient descent on mean squared error; when the pool
overflows, the entry with the smallest absolute weight is evicted and the
weights are re-fitted once.

The pool is single-writer: the mining pipeline mutates it sequentially;
read-only composite/IC queries between mutations are safe.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTarget, EmptyOverlap, EmptyPool, EvaluationError
from .expr import Expression, evaluate, parse
from .panel import Panel, compute_ic, standardize_daily


@dataclass(frozen=True)
class FitConfig:
    """Gradient-descent settings for the weight fit."""

    lr: float = 0.01
    max_iters: int = 1000
    tol: float = 1e-6  # stop when the gradient inf-norm falls below this


class AlphaPool:
    """Expressions, their standardized caches, and one weight per entry."""

    def __init__(
        self,
        panel: Panel,
        target: np.ndarray,
        train_mask: np.ndarray,
        capacity: int,
        rng: np.random.Generator | None = None,
        fit_config: FitConfig = FitConfig(),
    ):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.panel = panel
        self.target = target
        self.train_mask = np.asarray(train_mask, dtype=bool)
        self.capacity = capacity
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.fit_config = fit_config
        self.exprs: list[Expression] = []
        self.caches: list[np.ndarray] = []
        self.weights = np.zeros(0)
        self._target_ok = (
            ~np.isnan(target) & panel.tradable & self.train_mask[None, :]
        )

    @property
    def size(self) -> int:
        return len(self.exprs)

    def __len__(self) -> int:
        return len(self.exprs)

    # -- evaluation helpers -------------------------------------------------

    def standardized_cache(self, expr: Expression) -> np.ndarray:
        """Per-day z-scored alpha matrix, NaN outside tradable/valid cells."""
        return standardize_daily(evaluate(expr, self.panel), self.panel.tradable)

    # -- fitting ------------------------------------------------------------

    def _design(self) -> tuple[np.ndarray, np.ndarray]:
        ok = self._target_ok.copy()
        for cache in self.caches:
            ok &= ~np.isnan(cache)
        if not ok.any():
            raise DegenerateTarget("no jointly valid (alpha, return) cells on the training window")
        a = np.stack([c[ok] for c in self.caches], axis=1)
        return a, self.target[ok]

    def loss(self, weights: np.ndarray | None = None) -> float:
        """Training-window MSE of the composite against the target."""
        a, y = self._design()
        w = self.weights if weights is None else np.asarray(weights, dtype=float)
        r = a @ w - y
        return float(r @ r / len(y))

    def fit_weights(self, config: FitConfig | None = None, trace: list | None = None) -> np.ndarray:
        """Gradient descent on the MSE; monotone in the loss, deterministic.

        The loss is quadratic, so iterations run on the precomputed Gram
        matrix (L = w'Qw - 2b'w + c up to the constant). A halving backtrack
        keeps every accepted step non-increasing even for ill-conditioned
        pools (e.g. duplicated entries). ``trace`` collects the loss at every
        accepted iterate when provided.
        """
        if not self.exprs:
            raise EmptyPool("cannot fit an empty pool")
        cfg = config or self.fit_config
        a, y = self._design()
        n = len(y)
        gram = a.T @ a / n
        b = a.T @ y / n
        const = float(y @ y / n)

        def quad_loss(w):
            return float(w @ (gram @ w) - 2.0 * (b @ w) + const)

        w = self.weights.astype(float).copy()
        loss = quad_loss(w)
        if trace is not None:
            trace.append(loss)
        for _ in range(cfg.max_iters):
            grad = 2.0 * (gram @ w - b)
            if np.abs(grad).max() < cfg.tol:
                break
            step = cfg.lr
            while True:
                w2 = w - step * grad
                loss2 = quad_loss(w2)
                if loss2 <= loss or step < 1e-18:
                    break
                step *= 0.5
            if loss2 > loss:
                break
            w, loss = w2, loss2
            if trace is not None:
                trace.append(loss)
        self.weights = w
        return w.copy()

    # -- pool maintenance ---------------------------------------------------

    def add_alpha(self, expr: Expression, cache: np.ndarray | None = None) -> float:
        """Append, fit, evict the least-principal entry on overflow.

        Returns the training-window IC of the refreshed composite alpha.
        Raises EvaluationError if the new alpha has no valid training cells.
        """
        if cache is None:
            cache = self.standardized_cache(expr)
        if not (~np.isnan(cache) & self.train_mask[None, :]).any():
            raise EvaluationError(f"{expr} is all-missing on the training window")
        self.exprs.append(expr)
        self.caches.append(cache)
        init = self.rng.uniform(-0.1, 0.1)
        self.weights = np.concatenate([self.weights, [init]])
        self.fit_weights()
        if self.size > self.capacity:
            drop = int(np.argmin(np.abs(self.weights)))
            del self.exprs[drop]
            del self.caches[drop]
            self.weights = np.delete(self.weights, drop)
            self.fit_weights()
        return self.train_ic()

    # -- queries ------------------------------------------------------------

    def composite(self, date_mask: np.ndarray | None = None) -> np.ndarray:
        """Weighted sum of entry caches; NaN where any entry is missing."""
        if not self.exprs:
            raise EmptyPool("composite of an empty pool")
        out = np.zeros_like(self.caches[0])
        for w, cache in zip(self.weights, self.caches):
            out = out + w * cache
        if date_mask is not None:
            out = np.where(date_mask[None, :], out, np.nan)
        return out

    def train_ic(self) -> float:
        """Composite IC on the training window; 0.0 when degenerate."""
        try:
            report = compute_ic(
                self.composite(), self.target, self.panel.tradable, self.train_mask
            )
        except EmptyOverlap:
            return 0.0
        return report.ic

    # -- checkpointing ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "capacity": self.capacity,
            "entries": [
                {"expression": str(e), "weight": float(w)}
                for e, w in zip(self.exprs, self.weights)
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(
        cls,
        path,
        panel: Panel,
        target: np.ndarray,
        train_mask: np.ndarray,
        rng: np.random.Generator | None = None,
        fit_config: FitConfig = FitConfig(),
    ) -> "AlphaPool":
        with open(path) as fh:
            blob = json.load(fh)
        pool = cls(panel, target, train_mask, blob["capacity"], rng, fit_config)
        for entry in blob["entries"]:
            expr = parse(entry["expression"])
            pool.exprs.append(expr)
            pool.caches.append(pool.standardized_cache(expr))
        pool.weights = np.array([e["weight"] for e in blob["entries"]], dtype=float)
        return pool
