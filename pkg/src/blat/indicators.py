"""Nine daily technical indicators per asset, computed causally from OHLCV rows.

Every indicator is a recursion or a trailing window, so the value on a day only
depends on rows up to that day. Smoothing conventions: EMAs are seeded with the
SMA of their first ``w`` inputs; RSI, ATR and ADX use Wilder smoothing
(``alpha = 1/w``).
"""
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import InsufficientHistory, InvariantViolation, ShapeMismatch

NAMES = ("ATR", "ADX", "EMA", "MACD", "SMA", "RSI", "BB_upper", "BB_lower", "OBV_normalized")
WINDOW = 14
SMA_WINDOW = 20
BB_WIDTH = 2.0
MACD_FAST, MACD_SLOW, MACD_SIGNAL = 12, 26, 9
WARMUP = MACD_SLOW + MACD_SIGNAL  # 35 rows


@dataclass(frozen=True)
class OhlcvSeries:
    """Daily bars for one ticker, dates strictly increasing."""

    dates: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    adj_close: np.ndarray
    volume: np.ndarray
    ticker: str = ""

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        object.__setattr__(self, "dates", dates)
        n = dates.shape[0]
        for name in ("open", "high", "low", "close", "adj_close", "volume"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ShapeMismatch(f"{name} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        if n > 1:
            bad = np.flatnonzero(np.diff(dates) <= np.timedelta64(0, "D"))
            if bad.size:
                raise InvariantViolation(self.ticker, str(dates[bad[0] + 1]), "dates not strictly increasing")
        checks = (
            (self.high < np.maximum(self.open, self.close), "high below max(open, close)"),
            (self.low > np.minimum(self.open, self.close), "low above min(open, close)"),
            (self.volume < 0, "negative volume"),
        )
        for mask, detail in checks:
            if mask.any():
                raise InvariantViolation(self.ticker, str(dates[np.argmax(mask)]), detail)

    def __len__(self):
        return self.dates.shape[0]

    def upto(self, asof):
        """Rows dated on or before ``asof``."""
        k = int(np.searchsorted(self.dates, np.datetime64(asof, "D"), side="right"))
        return OhlcvSeries(self.dates[:k], self.open[:k], self.high[:k], self.low[:k],
                           self.close[:k], self.adj_close[:k], self.volume[:k], self.ticker)


@dataclass(frozen=True)
class IndicatorVector:
    values: np.ndarray
    date: np.datetime64
    valid: bool = True
    names: tuple = NAMES

    def as_dict(self):
        return dict(zip(self.names, self.values.tolist()))


def _smoothed(x, alpha, seed_len, start=0):
    """EMA ``y_t = alpha x_t + (1 - alpha) y_{t-1}`` seeded at index start+seed_len-1.

    The seed is the mean of ``x[start:start+seed_len]``. Earlier entries are NaN.
    """
    out = np.full(x.shape[0], np.nan)
    first = start + seed_len - 1
    if first >= x.shape[0]:
        return out
    seed = x[start:first + 1].mean()
    out[first] = seed
    rest = x[first + 1:]
    if rest.size:
        out[first + 1:], _ = lfilter([alpha], [1.0, alpha - 1.0], rest, zi=[(1.0 - alpha) * seed])
    return out


def _rolling(x, w, fn):
    out = np.full(x.shape[0], np.nan)
    if x.shape[0] >= w:
        win = np.lib.stride_tricks.sliding_window_view(x, w)
        out[w - 1:] = fn(win, axis=1)
    return out


def _rsi(close, w):
    delta = np.diff(close, prepend=close[0])
    gain = _smoothed(np.maximum(delta, 0.0), 1.0 / w, w, start=1)
    loss = _smoothed(np.maximum(-delta, 0.0), 1.0 / w, w, start=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rsi = 100.0 - 100.0 / (1.0 + gain / loss)
    rsi = np.where(loss == 0, np.where(gain > 0, 100.0, 50.0), rsi)
    return np.where(np.isnan(gain), np.nan, rsi)


def _true_range(high, low, close):
    prev = np.concatenate([[close[0]], close[:-1]])
    tr = np.maximum.reduce([high - low, np.abs(high - prev), np.abs(low - prev)])
    tr[0] = high[0] - low[0]
    return tr


def _adx(high, low, close, w):
    n = close.shape[0]
    up = np.diff(high, prepend=high[0])
    down = -np.diff(low, prepend=low[0])
    plus_dm = np.where((up > down) & (up > 0), up, 0.0)
    minus_dm = np.where((down > up) & (down > 0), down, 0.0)
    tr = _true_range(high, low, close)
    # Wilder running sums share the EMA recursion up to a factor w
    s_tr = _smoothed(tr, 1.0 / w, w, start=1)
    s_p = _smoothed(plus_dm, 1.0 / w, w, start=1)
    s_m = _smoothed(minus_dm, 1.0 / w, w, start=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        plus_di = np.where(s_tr > 0, 100.0 * s_p / s_tr, 0.0)
        minus_di = np.where(s_tr > 0, 100.0 * s_m / s_tr, 0.0)
        total = plus_di + minus_di
        dx = np.where(total > 0, 100.0 * np.abs(plus_di - minus_di) / total, 0.0)
    dx = np.where(np.isnan(s_tr), np.nan, dx)
    if n < 2 * w:
        return np.full(n, np.nan)
    return _smoothed(np.nan_to_num(dx), 1.0 / w, w, start=w)


def _obv(close, volume):
    sign = np.sign(np.diff(close, prepend=close[0]))
    return np.cumsum(sign * volume)


def _minmax(obv, window):
    """Min-max scaling over the trailing ``window`` rows (fewer while history is short)."""
    lo, hi = np.minimum.accumulate(obv), np.maximum.accumulate(obv)
    if window is not None and obv.shape[0] >= window:
        lo[window - 1:] = _rolling(obv, window, np.min)[window - 1:]
        hi[window - 1:] = _rolling(obv, window, np.max)[window - 1:]
    span = hi - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(span > 0, (obv - lo) / span, 0.5)


def indicator_frame(series, obv_window=None):
    """All nine indicators for every row, shape (n, 9); rows before warm-up are NaN.

    ``obv_window`` is the trailing normalisation window for OBV (default: all
    rows so far). Returns ``(values, valid_mask)``.
    """
    c, h, lo = series.close, series.high, series.low
    n = c.shape[0]
    if n == 0:
        return np.empty((0, len(NAMES))), np.zeros(0, dtype=bool)
    sma = _rolling(c, SMA_WINDOW, np.mean)
    sd = _rolling(c, SMA_WINDOW, np.std)
    macd = _smoothed(c, 2.0 / (MACD_FAST + 1), MACD_FAST) - _smoothed(c, 2.0 / (MACD_SLOW + 1), MACD_SLOW)
    cols = [
        _smoothed(_true_range(h, lo, c), 1.0 / WINDOW, WINDOW),
        _adx(h, lo, c, WINDOW),
        _smoothed(c, 2.0 / (WINDOW + 1), WINDOW),
        macd,
        sma,
        _rsi(c, WINDOW),
        sma + BB_WIDTH * sd,
        sma - BB_WIDTH * sd,
        _minmax(_obv(c, series.volume), obv_window),
    ]
    values = np.column_stack(cols)
    valid = np.arange(n) >= WARMUP - 1
    values[~valid] = np.nan
    return values, valid


def macd_signal(close):
    """Signal line EMA(9) of the MACD line; kept for completeness, not a feature."""
    macd = _smoothed(close, 2.0 / (MACD_FAST + 1), MACD_FAST) - _smoothed(close, 2.0 / (MACD_SLOW + 1), MACD_SLOW)
    out = np.full(close.shape[0], np.nan)
    first = MACD_SLOW - 1
    out[first:] = _smoothed(macd[first:], 2.0 / (MACD_SIGNAL + 1), MACD_SIGNAL)
    return out


def compute_indicators(series, asof, obv_window=None):
    """Indicator vector on ``asof`` using only rows dated on or before it."""
    past = series.upto(asof)
    if len(past) < WARMUP:
        raise InsufficientHistory(f"{series.ticker or 'series'}: need {WARMUP} rows up to {asof}, have {len(past)}")
    values, valid = indicator_frame(past, obv_window)
    return IndicatorVector(values=values[-1], date=past.dates[-1], valid=bool(valid[-1]))
