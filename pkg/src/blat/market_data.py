"""CSV ingestion, index-membership calendars and aligned return panels."""
import csv
import datetime as _dt
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import EmptyUniverse, InsufficientData, InvariantViolation, OutOfRange, ParseError
from .indicators import OhlcvSeries

OHLCV_HEADER = ("date", "ticker", "open", "high", "low", "close", "adj_close", "volume")
MEMBERSHIP_HEADER = ("ticker", "start_date", "end_date")
_FIELDS = OHLCV_HEADER[2:]


def _date(text, line):
    try:
        return _dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(line, f"bad ISO date {text!r}") from None


def _float(text, name, line):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(line, f"bad number {text!r} in column {name}") from None
    if not np.isfinite(value):
        raise ParseError(line, f"non-finite {name}")
    return value


def _rows(path, header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise ParseError(1, "missing header")
        if tuple(c.strip() for c in first) != header:
            raise ParseError(1, f"expected header {','.join(header)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, [c.strip() for c in row]


def load_ohlcv(path):
    """Read ``date,ticker,open,high,low,close,adj_close,volume`` rows into a ticker -> OhlcvSeries map."""
    per = {}
    for line, row in _rows(path, OHLCV_HEADER):
        day = _date(row[0], line)
        ticker = row[1]
        if not ticker:
            raise ParseError(line, "empty ticker")
        o, h, lo, c, adj, vol = (_float(v, n, line) for v, n in zip(row[2:], _FIELDS))
        if h < lo:
            raise InvariantViolation(ticker, day.isoformat(), f"line {line}: high {h} < low {lo}")
        if h < max(o, c) or lo > min(o, c):
            raise InvariantViolation(ticker, day.isoformat(), f"line {line}: open/close outside [low, high]")
        if vol < 0:
            raise InvariantViolation(ticker, day.isoformat(), f"line {line}: negative volume")
        if adj <= 0:
            raise InvariantViolation(ticker, day.isoformat(), f"line {line}: non-positive adj_close")
        per.setdefault(ticker, []).append((day, o, h, lo, c, adj, vol))
    out = {}
    for ticker in sorted(per):
        rows = sorted(per[ticker], key=lambda r: r[0])
        for a, b in zip(rows, rows[1:]):
            if a[0] == b[0]:
                raise InvariantViolation(ticker, b[0].isoformat(), "duplicate date")
        cols = list(zip(*rows))
        out[ticker] = OhlcvSeries(np.array(cols[0], dtype="datetime64[D]"), *map(np.array, cols[1:]),
                                  ticker=ticker)
    return out


def write_ohlcv(series_map, path):
    """Write a ticker map back to CSV; floats use shortest round-trip repr."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OHLCV_HEADER)
        for ticker in sorted(series_map):
            s = series_map[ticker]
            for i in range(len(s)):
                w.writerow([str(s.dates[i]), ticker] +
                           [repr(float(getattr(s, f)[i])) for f in _FIELDS])


@dataclass(frozen=True)
class MembershipCalendar:
    """Index membership windows: ``entries`` holds (ticker, start, end) with inclusive dates."""

    entries: tuple

    def __post_init__(self):
        clean = []
        for ticker, start, end in self.entries:
            start, end = np.datetime64(start, "D"), np.datetime64(end, "D")
            if start > end:
                raise InvariantViolation(ticker, str(start), f"start after end {end}")
            clean.append((ticker, start, end))
        clean.sort(key=lambda e: (e[0], e[1]))
        for a, b in zip(clean, clean[1:]):
            if a[0] == b[0] and b[1] <= a[2]:
                raise InvariantViolation(b[0], str(b[1]), f"overlaps membership ending {a[2]}")
        object.__setattr__(self, "entries", tuple(clean))

    @property
    def tickers(self):
        return sorted({e[0] for e in self.entries})


def load_membership(path):
    entries = []
    for line, row in _rows(path, MEMBERSHIP_HEADER):
        entries.append((row[0], _date(row[1], line), _date(row[2], line)))
    return MembershipCalendar(tuple(entries))


def packaged_membership(name):
    """Bundled calendars: ``"spdr_sectors"`` or ``"djia"``."""
    ref = resources.files("blat") / "data" / f"{name}.csv"
    if not ref.is_file():
        raise OutOfRange("name", name, "one of spdr_sectors, djia")
    with resources.as_file(ref) as p:
        return load_membership(p)


def active_universe(cal, asof):
    """Tickers whose membership window contains ``asof``, sorted."""
    day = np.datetime64(asof, "D")
    return sorted({t for t, s, e in cal.entries if s <= day <= e})


@dataclass(frozen=True)
class PriceTable:
    """Prices of every ticker on the union of all trading dates (NaN where absent)."""

    dates: np.ndarray
    tickers: tuple
    adj_close: np.ndarray

    @classmethod
    def from_series(cls, series_map):
        tickers = tuple(sorted(series_map))
        if tickers:
            dates = np.unique(np.concatenate([series_map[t].dates for t in tickers]))
        else:
            dates = np.array([], dtype="datetime64[D]")
        adj = np.full((dates.shape[0], len(tickers)), np.nan)
        for j, t in enumerate(tickers):
            s = series_map[t]
            adj[np.searchsorted(dates, s.dates), j] = s.adj_close
        return cls(dates, tickers, adj)

    def column(self, ticker):
        return self.tickers.index(ticker)


@dataclass(frozen=True)
class ReturnPanel:
    """Simple returns on ``dates`` for ``tickers``; ``mask`` marks defined entries."""

    dates: np.ndarray
    tickers: tuple
    returns: np.ndarray
    mask: np.ndarray
    excluded: tuple = ()

    @property
    def m(self):
        return len(self.tickers)


def window_bounds(table, window_end, window_len):
    """Row indices ``(first_price_row, end_row)`` of a window of ``window_len`` returns."""
    if window_len < 2:
        raise OutOfRange("window_len", window_len, ">= 2")
    end = int(np.searchsorted(table.dates, np.datetime64(window_end, "D"), side="right")) - 1
    start = end - window_len
    if start < 0:
        raise InsufficientData(f"need {window_len + 1} trading days up to {window_end}, have {end + 1}")
    return start, end


def build_return_panel(data, universe, window_end, window_len):
    """The last ``window_len`` daily returns up to ``window_end``.

    ``data`` is a ticker -> OhlcvSeries map or a PriceTable. Tickers missing any
    price in the window are excluded (no forward fill) and listed in ``excluded``.
    """
    table = data if isinstance(data, PriceTable) else PriceTable.from_series(data)
    start, end = window_bounds(table, window_end, window_len)
    kept, excluded = [], []
    for t in sorted(universe):
        if t not in table.tickers:
            excluded.append(t)
            continue
        col = table.adj_close[start:end + 1, table.column(t)]
        (kept if np.all(np.isfinite(col)) else excluded).append(t)
    if not kept:
        raise EmptyUniverse(f"no ticker has complete prices in the window ending {window_end}")
    cols = [table.column(t) for t in kept]
    prices = table.adj_close[start:end + 1][:, cols]
    rets = prices[1:] / prices[:-1] - 1.0
    return ReturnPanel(dates=table.dates[start + 1:end + 1], tickers=tuple(kept), returns=rets,
                       mask=np.ones_like(rets, dtype=bool), excluded=tuple(excluded))
