"""Stock panel data, forward returns, splits and signal metrics.

A Panel is an immutable (stocks x days) grid of six price/volume features
with a tradability mask and forward-return targets. All metric computations
are pure and thread-safe. Metrics are daily cross-sectional statistics over
jointly valid cells (non-missing on both sides, tradable), averaged over
days; days with fewer than two valid pairs or a constant side are skipped.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DataError, EmptyOverlap, IoError, SchemaError
from .expr import Expression, evaluate, parse

FEATURE_COLUMNS = ("open", "high", "low", "close", "volume", "vwap")
_CSV_COLUMNS = ("date", "symbol") + FEATURE_COLUMNS
_RETURN_HORIZONS = (5, 10)


@dataclass
class Panel:
    """Feature tensor plus tradability and forward-return targets.

    ``features`` is (stocks, days, 6) in FEATURE_COLUMNS order; NaN cells are
    missing and carry ``tradable == False``. ``returns5``/``returns10`` are
    close-to-close simple forward returns with missing tails unless a
    synthetic generator planted a custom target.
    """

    symbols: tuple[str, ...]
    dates: np.ndarray  # datetime64[D], strictly increasing
    features: np.ndarray
    tradable: np.ndarray
    returns5: np.ndarray = field(default=None)  # type: ignore[assignment]
    returns10: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        if self.features.shape != (len(self.symbols), len(self.dates), len(FEATURE_COLUMNS)):
            raise DataError(f"feature tensor shape {self.features.shape} does not match grid")
        if len(self.dates) > 1 and not (self.dates[1:] > self.dates[:-1]).all():
            raise DataError("dates must be strictly increasing")
        if self.returns5 is None:
            self.returns5 = self._close_returns(5)
        if self.returns10 is None:
            self.returns10 = self._close_returns(10)

    @property
    def n_stocks(self) -> int:
        return len(self.symbols)

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def feature(self, name: str) -> np.ndarray:
        return self.features[:, :, FEATURE_COLUMNS.index(name)]

    def _close_returns(self, horizon: int) -> np.ndarray:
        close = self.feature("close")
        out = np.full_like(close, np.nan)
        if horizon < self.n_days:
            with np.errstate(all="ignore"):
                out[:, :-horizon] = close[:, horizon:] / close[:, :-horizon] - 1.0
        out[~np.isfinite(out)] = np.nan
        return out

    def forward_returns(self, horizon: int) -> np.ndarray:
        if horizon == 5:
            return self.returns5
        if horizon == 10:
            return self.returns10
        return self._close_returns(horizon)

    def date_mask(self, start=None, end=None) -> np.ndarray:
        mask = np.ones(self.n_days, dtype=bool)
        if start is not None:
            mask &= self.dates >= np.datetime64(start)
        if end is not None:
            mask &= self.dates <= np.datetime64(end)
        return mask


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint, ordered train < valid < test date ranges (inclusive)."""

    train: tuple[np.datetime64, np.datetime64]
    valid: tuple[np.datetime64, np.datetime64]
    test: tuple[np.datetime64, np.datetime64]

    def __post_init__(self):
        ranges = [self.train, self.valid, self.test]
        for lo, hi in ranges:
            if lo > hi:
                raise ArgumentError(f"split range {lo}..{hi} is inverted")
        for (_, hi), (lo, _) in zip(ranges, ranges[1:]):
            if hi >= lo:
                raise ArgumentError("split ranges must be disjoint and ordered train < valid < test")

    @classmethod
    def from_strings(cls, train, valid, test) -> "SplitSpec":
        mk = lambda pair: (np.datetime64(pair[0]), np.datetime64(pair[1]))
        return cls(mk(train), mk(valid), mk(test))

    @classmethod
    def from_fractions(cls, dates: np.ndarray, f_train: float = 0.7, f_valid: float = 0.15) -> "SplitSpec":
        n = len(dates)
        i = max(1, int(round(n * f_train)))
        j = max(i + 1, i + int(round(n * f_valid)))
        j = min(j, n - 1)
        return cls((dates[0], dates[i - 1]), (dates[i], dates[j - 1]), (dates[j], dates[n - 1]))

    def mask(self, dates: np.ndarray, part: str) -> np.ndarray:
        lo, hi = getattr(self, part)
        return (dates >= lo) & (dates <= hi)

    def as_strings(self) -> dict[str, list[str]]:
        return {p: [str(getattr(self, p)[0]), str(getattr(self, p)[1])] for p in ("train", "valid", "test")}


# ---------------------------------------------------------------------------
# CSV ingestion


def load_csv(path) -> Panel:
    """Load a panel from ``date,symbol,open,high,low,close,volume,vwap[,tradable]``."""
    try:
        with open(path, newline="") as fh:
            return _parse_csv(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _parse_csv(fh) -> Panel:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty file") from None
    header = [h.strip() for h in header]
    has_tradable = "tradable" in header
    expected = list(_CSV_COLUMNS) + (["tradable"] if has_tradable else [])
    missing = [c for c in _CSV_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")
    unknown = [c for c in header if c not in expected]
    if unknown:
        raise SchemaError(f"unknown column(s): {', '.join(unknown)}")
    col = {c: header.index(c) for c in expected}

    rows: dict[tuple[str, str], tuple[int, list[float], bool]] = {}
    bad_lines: list[int] = []
    for line_no, raw in enumerate(reader, start=2):
        if not raw or all(not c.strip() for c in raw):
            continue
        try:
            date = str(np.datetime64(raw[col["date"]].strip()))
            symbol = raw[col["symbol"]].strip()
            vals = [float(raw[col[c]]) for c in FEATURE_COLUMNS]
            if not all(np.isfinite(vals)):
                raise ValueError("non-finite feature")
            tr = _parse_bool(raw[col["tradable"]]) if has_tradable else True
        except (ValueError, IndexError):
            bad_lines.append(line_no)
            continue
        key = (date, symbol)
        if key in rows:
            raise DataError(
                f"duplicate (date,symbol) {key}: lines {rows[key][0]} and {line_no}"
            )
        rows[key] = (line_no, vals, tr)
    if bad_lines:
        shown = ", ".join(map(str, bad_lines[:10]))
        raise DataError(f"{len(bad_lines)} unparseable row(s) at line(s) {shown}")
    if not rows:
        raise DataError("no data rows")

    symbols = tuple(sorted({k[1] for k in rows}))
    dates = np.array(sorted({k[0] for k in rows}), dtype="datetime64[D]")
    sym_idx = {s: i for i, s in enumerate(symbols)}
    date_idx = {str(d): j for j, d in enumerate(dates)}
    features = np.full((len(symbols), len(dates), len(FEATURE_COLUMNS)), np.nan)
    tradable = np.zeros((len(symbols), len(dates)), dtype=bool)
    for (date, symbol), (_, vals, tr) in rows.items():
        i, j = sym_idx[symbol], date_idx[date]
        features[i, j, :] = vals
        tradable[i, j] = tr
    return Panel(symbols, dates, features, tradable)


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "t", "yes"):
        return True
    if v in ("0", "false", "f", "no"):
        return False
    raise ValueError(f"bad boolean {text!r}")


def panel_to_csv(panel: Panel) -> str:
    """Serialize a panel back to the canonical CSV schema."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(_CSV_COLUMNS) + ["tradable"])
    for j, date in enumerate(panel.dates):
        for i, sym in enumerate(panel.symbols):
            if np.isnan(panel.features[i, j]).all() and not panel.tradable[i, j]:
                continue
            writer.writerow(
                [str(date), sym]
                + [repr(float(v)) for v in panel.features[i, j]]
                + [int(panel.tradable[i, j])]
            )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Synthetic panels


def trading_calendar(n_days: int, start="2020-01-02") -> np.ndarray:
    """Deterministic synthetic calendar of ``n_days`` business days."""
    out = []
    d = np.datetime64(start)
    while len(out) < n_days:
        if np.is_busday(d):
            out.append(d)
        d += 1
    return np.array(out, dtype="datetime64[D]")


def synth_panel(
    n_stocks: int,
    n_days: int,
    seed: int,
    planted: Expression | str | None = None,
    planted_weight: float = 0.8,
) -> Panel:
    """Geometric-random-walk panel, optionally with a planted 5-day signal.

    When ``planted`` is given, 5-day forward returns are rewritten (where the
    planted alpha is defined and a future close exists) as
    ``w * zscore(alpha) + sqrt(1 - w^2) * noise`` scaled to return magnitudes,
    so the planted alpha has daily IC near ``w``. Same seed, same panel, bit
    for bit.
    """
    if n_stocks < 2 or n_days < 70:
        raise ArgumentError("need n_stocks >= 2 and n_days >= 70")
    rng = np.random.default_rng(seed)
    dates = trading_calendar(n_days)

    log0 = rng.uniform(np.log(20.0), np.log(200.0), size=(n_stocks, 1))
    steps = rng.normal(0.0002, 0.02, size=(n_stocks, n_days))
    close = np.exp(log0 + np.cumsum(steps, axis=1))
    prev_close = np.concatenate([close[:, :1], close[:, :-1]], axis=1)
    open_ = prev_close * np.exp(rng.normal(0.0, 0.006, size=close.shape))
    hi_ext = np.abs(rng.normal(0.0, 0.008, size=close.shape))
    lo_ext = np.abs(rng.normal(0.0, 0.008, size=close.shape))
    high = np.maximum(open_, close) * np.exp(hi_ext)
    low = np.minimum(open_, close) * np.exp(-lo_ext)
    volume = np.exp(rng.normal(np.log(1e6), 0.8, size=close.shape))
    vwap = low + (high - low) * rng.uniform(0.3, 0.7, size=close.shape)

    features = np.stack([open_, high, low, close, volume, vwap], axis=2)
    tradable = np.ones((n_stocks, n_days), dtype=bool)
    panel = Panel(tuple(f"S{i:03d}" for i in range(n_stocks)), dates, features, tradable)

    if planted is not None:
        expr = parse(planted) if isinstance(planted, str) else planted
        w = float(planted_weight)
        z = standardize_daily(evaluate(expr, panel), tradable)
        noise = rng.standard_normal(z.shape)
        target = 0.02 * (w * z + np.sqrt(max(0.0, 1.0 - w * w)) * noise)
        r5 = panel.returns5.copy()
        usable = ~np.isnan(z) & ~np.isnan(r5)
        r5[usable] = target[usable]
        panel.returns5 = r5
    return panel


# ---------------------------------------------------------------------------
# Cross-sectional helpers and metrics


def standardize_daily(values: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Z-score each day's cross-section over valid cells; others become NaN.

    Days with fewer than two valid cells or zero dispersion are fully NaN.
    """
    ok = ~np.isnan(values)
    if valid is not None:
        ok = ok & valid
    x = np.where(ok, values, 0.0)
    n = ok.sum(axis=0)
    with np.errstate(all="ignore"):
        mean = x.sum(axis=0) / n
        centered = np.where(ok, values - mean, 0.0)
        std = np.sqrt((centered**2).sum(axis=0) / n)
        out = np.where(ok, centered / std, np.nan)
    out[:, (n < 2) | ~(std > 0)] = np.nan
    return out


@dataclass
class MetricReport:
    """Aggregate and per-day IC / RankIC for one alpha-target pairing."""

    ic: float
    icir: float
    rank_ic: float
    dates: np.ndarray
    daily_ic: np.ndarray
    daily_rank_ic: np.ndarray

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def summary(self) -> dict:
        return {
            "ic": self.ic,
            "icir": self.icir,
            "rank_ic": self.rank_ic,
            "n_days": self.n_days,
        }

    def to_csv(self) -> str:
        lines = ["date,ic,rank_ic"]
        for d, a, b in zip(self.dates, self.daily_ic, self.daily_rank_ic):
            lines.append(f"{d},{a!r},{b!r}")
        return "\n".join(lines) + "\n"


def _daily_pearson(a, b, ok):
    """Per-day Pearson over masked cells; NaN on unqualified days."""
    n = ok.sum(axis=0)
    a0 = np.where(ok, a, 0.0)
    b0 = np.where(ok, b, 0.0)
    with np.errstate(all="ignore"):
        ma = a0.sum(axis=0) / n
        mb = b0.sum(axis=0) / n
        da = np.where(ok, a - ma, 0.0)
        db = np.where(ok, b - mb, 0.0)
        va = (da * da).sum(axis=0)
        vb = (db * db).sum(axis=0)
        corr = (da * db).sum(axis=0) / np.sqrt(va * vb)
    good = (n >= 2) & (va > 0) & (vb > 0)
    corr = np.where(good, np.clip(corr, -1.0, 1.0), np.nan)
    return corr, good


def _joint_mask(a, b, valid, date_mask):
    ok = ~np.isnan(a) & ~np.isnan(b)
    if valid is not None:
        ok = ok & valid
    if date_mask is not None:
        ok = ok & date_mask[None, :]
    return ok


def _rank_within_days(x: np.ndarray, ok: np.ndarray) -> np.ndarray:
    """Average ranks per day over masked cells (own argsort implementation)."""
    out = np.full_like(x, np.nan)
    for j in range(x.shape[1]):
        col_ok = ok[:, j]
        m = int(col_ok.sum())
        if m == 0:
            continue
        vals = x[col_ok, j]
        order = np.argsort(vals, kind="stable")
        ranks = np.empty(m)
        i = 0
        while i < m:
            k = i
            while k + 1 < m and vals[order[k + 1]] == vals[order[i]]:
                k += 1
            ranks[order[i : k + 1]] = 0.5 * (i + k) + 1.0
            i = k + 1
        out[col_ok, j] = ranks
    return out


def compute_ic(
    alpha: np.ndarray,
    target: np.ndarray,
    valid: np.ndarray | None = None,
    date_mask: np.ndarray | None = None,
    dates: np.ndarray | None = None,
) -> MetricReport:
    """Daily cross-sectional Pearson (IC) and Spearman (RankIC) vs a target.

    ``valid`` is typically the panel's tradable mask; ``dates`` labels report
    rows (day indices when omitted). Raises EmptyOverlap when no day
    qualifies.
    """
    ok = _joint_mask(alpha, target, valid, date_mask)
    daily, good = _daily_pearson(alpha, target, ok)
    if not good.any():
        raise EmptyOverlap("no day has two jointly valid, dispersed cells")
    ranks_a = _rank_within_days(alpha, ok)
    ranks_t = _rank_within_days(target, ok)
    daily_rank, good_rank = _daily_pearson(ranks_a, ranks_t, ok)

    keep = good
    ic_vals = daily[keep]
    rank_vals = np.where(good_rank, daily_rank, np.nan)[keep]
    ic = float(ic_vals.mean())
    std = float(ic_vals.std(ddof=1)) if len(ic_vals) >= 2 else 0.0
    icir = ic / std if std > 0 else float("nan")
    with np.errstate(all="ignore"):
        rank_ic = float(np.nanmean(rank_vals)) if (~np.isnan(rank_vals)).any() else float("nan")
    labels = np.flatnonzero(keep) if dates is None else np.asarray(dates)[keep]
    return MetricReport(ic, icir, rank_ic, labels, ic_vals, rank_vals)


def compute_mut_ic(
    a: np.ndarray,
    b: np.ndarray,
    valid: np.ndarray | None = None,
    date_mask: np.ndarray | None = None,
) -> float:
    """Mean daily cross-sectional Pearson between two alpha matrices."""
    ok = _joint_mask(a, b, valid, date_mask)
    daily, good = _daily_pearson(a, b, ok)
    if not good.any():
        raise EmptyOverlap("no day has two jointly valid, dispersed cells")
    return float(daily[good].mean())
