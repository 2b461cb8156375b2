"""Top-k equal-weight long strategy driven by alpha scores.

On each rebalance day the tradable universe is ranked by score (ties broken
by symbol order), the top k names receive equal weight of the current
portfolio value, and holdings ride close-to-close returns until the next
rebalance. Execution happens at the close of the rebalance day using that
day's scores. The ledger is share-based, so the portfolio is self-financing
by construction; one-way transaction costs (in basis points of traded
notional) are deducted at each rebalance.

Pure function of its inputs; safe to run many configurations in parallel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, InsufficientUniverse
from .panel import Panel


@dataclass(frozen=True)
class StrategyConfig:
    k: int
    rebalance_every: int = 5
    cost_bps: float = 0.0

    def __post_init__(self):
        if self.k < 1 or self.rebalance_every < 1:
            raise ArgumentError("k and rebalance_every must be >= 1")


@dataclass
class EquityCurve:
    """Daily portfolio value (initial 1.0) plus the trade log."""

    dates: np.ndarray
    values: np.ndarray
    turnover: np.ndarray  # traded notional per day (nonzero on rebalances)
    holdings: list[tuple[str, tuple[str, ...]]]  # (date, symbols) per rebalance

    def to_csv(self) -> str:
        lines = ["date,value,turnover"]
        for d, v, t in zip(self.dates, self.values, self.turnover):
            lines.append(f"{d},{v!r},{t!r}")
        return "\n".join(lines) + "\n"

    def holdings_csv(self) -> str:
        lines = ["date,symbols"]
        for d, syms in self.holdings:
            lines.append(f"{d},{' '.join(syms)}")
        return "\n".join(lines) + "\n"


def run_backtest(
    scores: np.ndarray,
    panel: Panel,
    cfg: StrategyConfig,
    date_mask: np.ndarray | None = None,
    strict: bool = False,
) -> EquityCurve:
    """Simulate the strategy over the masked date range.

    When fewer than k names are selectable on a rebalance day the strategy
    holds all of them (equal weight); pass ``strict=True`` to raise
    InsufficientUniverse instead. Days with a missing close are priced at the
    last seen close (value rides flat).
    """
    days = np.flatnonzero(date_mask) if date_mask is not None else np.arange(panel.n_days)
    if len(days) == 0:
        raise ArgumentError("empty backtest date range")
    close = panel.feature("close")

    n = panel.n_stocks
    shares = np.zeros(n)
    last_price = np.full(n, np.nan)
    value = 1.0
    values, turnover, holdings = [], [], []

    for j, d in enumerate(days):
        px = close[:, d]
        fresh = ~np.isnan(px)
        last_price[fresh] = px[fresh]
        held = shares > 0
        if held.any():
            value = float((shares[held] * last_price[held]).sum())

        traded = 0.0
        if j % cfg.rebalance_every == 0:
            selectable = panel.tradable[:, d] & ~np.isnan(scores[:, d]) & fresh
            m = int(selectable.sum())
            if m > 0:
                if m < cfg.k and strict:
                    raise InsufficientUniverse(
                        f"{m} tradable stocks on {panel.dates[d]}, need {cfg.k}"
                    )
                k_eff = min(cfg.k, m)
                cand = np.flatnonzero(selectable)
                order = cand[np.lexsort((cand, -scores[cand, d]))]
                chosen = order[:k_eff]

                old_notional = shares * np.where(np.isnan(last_price), 0.0, last_price)
                new_notional = np.zeros(n)
                new_notional[chosen] = value / k_eff
                traded = float(np.abs(new_notional - old_notional).sum())
                value -= traded * cfg.cost_bps * 1e-4
                shares = np.zeros(n)
                shares[chosen] = (value / k_eff) / px[chosen]
                holdings.append(
                    (str(panel.dates[d]), tuple(panel.symbols[i] for i in chosen))
                )
        values.append(value)
        turnover.append(traded)

    return EquityCurve(
        panel.dates[days], np.array(values), np.array(turnover), holdings
    )


def cumulative_return(curve: EquityCurve) -> float:
    """Final value over initial value, minus one."""
    return float(curve.values[-1] / curve.values[0] - 1.0)


def k_grid(
    scores: np.ndarray,
    panel: Panel,
    ks,
    valid_mask: np.ndarray,
    test_mask: np.ndarray,
    rebalance_every: int = 5,
    cost_bps: float = 0.0,
) -> dict:
    """Pick k by validation-window cumulative return, report the test window."""
    rows = []
    for k in ks:
        cfg = StrategyConfig(int(k), rebalance_every, cost_bps)
        cr = cumulative_return(run_backtest(scores, panel, cfg, valid_mask))
        rows.append({"k": int(k), "valid_cr": cr})
    best = max(rows, key=lambda r: r["valid_cr"])
    cfg = StrategyConfig(best["k"], rebalance_every, cost_bps)
    test_cr = cumulative_return(run_backtest(scores, panel, cfg, test_mask))
    return {"grid": rows, "best_k": best["k"], "test_cr": test_cr}
