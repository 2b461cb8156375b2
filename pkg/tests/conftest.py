import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from alphamine.panel import Panel, synth_panel, trading_calendar

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("suite")


def make_panel(n_stocks, n_days, seed=0, tradable=None):
    """Small random panel with well-behaved positive prices."""
    rng = np.random.default_rng(seed)
    close = np.exp(rng.normal(3.5, 0.3, (n_stocks, 1)) + rng.normal(0, 0.02, (n_stocks, n_days)).cumsum(1))
    open_ = close * np.exp(rng.normal(0, 0.005, close.shape))
    high = np.maximum(open_, close) * np.exp(np.abs(rng.normal(0, 0.004, close.shape)))
    low = np.minimum(open_, close) * np.exp(-np.abs(rng.normal(0, 0.004, close.shape)))
    volume = np.exp(rng.normal(10, 0.5, close.shape))
    vwap = (high + low) / 2
    features = np.stack([open_, high, low, close, volume, vwap], axis=2)
    if tradable is None:
        tradable = np.ones((n_stocks, n_days), dtype=bool)
    return Panel(
        tuple(f"S{i:02d}" for i in range(n_stocks)),
        trading_calendar(n_days),
        features,
        tradable,
    )


def constant_panel(n_stocks, n_days, **feature_values):
    """Panel whose features are flat constants (defaults are distinct)."""
    base = {"open": 10.0, "high": 12.0, "low": 9.0, "close": 11.0, "volume": 100.0, "vwap": 10.5}
    base.update(feature_values)
    features = np.empty((n_stocks, n_days, 6))
    for i, name in enumerate(("open", "high", "low", "close", "volume", "vwap")):
        features[:, :, i] = base[name]
    return Panel(
        tuple(f"S{i:02d}" for i in range(n_stocks)),
        trading_calendar(n_days),
        features,
        np.ones((n_stocks, n_days), dtype=bool),
    )


@pytest.fixture
def small_panel():
    return make_panel(8, 40, seed=3)


@pytest.fixture
def planted_panel():
    return synth_panel(20, 250, seed=7, planted="Div(Mean(close, 5), close)", planted_weight=0.8)
