"""Order-book event taxonomy and classification.

Level-1 messages are mapped onto six event categories: effective market
orders (MO), limit orders at or inside the best quotes (LO) and
cancellations at the best quotes (CA), each split by whether the event
moved the midpoint price ("primed") or not.  Every event carries a sign:
+1 for buy market/limit orders, -1 for sells, and the reverse for
cancellations, whose price effect points the other way.

Midpoints are kept in integer half-ticks (best bid + best ask in ticks)
so averaging the quotes never leaves the integers; all price arithmetic
downstream stays exact until a final division.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import (
    EmptySeriesError,
    MalformedMessageError,
    SeriesOrderError,
)


class EventKind(str, Enum):
    MO = "MO"
    LO = "LO"
    CA = "CA"


class EventType(Enum):
    """The six event categories: kind x (price-changing or not)."""

    MO0 = ("MO", False, "MO0")
    MOP = ("MO", True, "MOp")
    LO0 = ("LO", False, "LO0")
    LOP = ("LO", True, "LOp")
    CA0 = ("CA", False, "CA0")
    CAP = ("CA", True, "CAp")

    def __init__(self, kind: str, primed: bool, label: str):
        self.kind = EventKind(kind)
        self.primed = primed
        self.label = label

    @property
    def code(self) -> int:
        """Dense integer code, stable across runs (MO0=0 .. CAp=5)."""
        return _TYPE_ORDER.index(self)

    @classmethod
    def from_label(cls, label: str) -> "EventType":
        try:
            return _LABEL_TO_TYPE[label]
        except KeyError:
            raise ValueError(f"unknown event type label {label!r}") from None

    @classmethod
    def from_code(cls, code: int) -> "EventType":
        return _TYPE_ORDER[code]


_TYPE_ORDER = (
    EventType.MO0,
    EventType.MOP,
    EventType.LO0,
    EventType.LOP,
    EventType.CA0,
    EventType.CAP,
)
_LABEL_TO_TYPE = {t.label: t for t in _TYPE_ORDER}

N_EVENT_TYPES = 6

# Primed flag per dense code, used by the estimators.
PRIMED_BY_CODE = np.array([t.primed for t in _TYPE_ORDER], dtype=bool)


def types_of_kind(kind: EventKind | str) -> tuple[EventType, ...]:
    kind = EventKind(kind)
    return tuple(t for t in _TYPE_ORDER if t.kind == kind)


@dataclass(frozen=True)
class RawMessage:
    """One level-1 feed record with the quotes around it.

    Timestamps are milliseconds since midnight of the trading day.
    Quotes are integer ticks; ``best_*_before`` is the book state just
    before the event and ``best_*_after`` just after.
    """

    timestamp_ms: int
    broker: int
    side: str           # "buy" | "sell"
    action: str         # "TRADE" | "ADD" | "CANCEL"
    price: int          # ticks
    size: int
    bid_before: int
    ask_before: int
    bid_after: int
    ask_after: int

    def mid_before_halfticks(self) -> int:
        return self.bid_before + self.ask_before

    def mid_after_halfticks(self) -> int:
        return self.bid_after + self.ask_after


@dataclass(frozen=True)
class OrderBookEvent:
    """One classified book event in the six-type taxonomy."""

    day_id: int
    month_id: int
    seq: int            # event-time index, dense within a day
    timestamp_ms: int
    broker: int
    etype: EventType
    sign: int           # +1 / -1
    mid_before: int     # midpoint in half-ticks just before the event


def classify(msg: RawMessage) -> Optional[tuple[EventType, int]]:
    """Classify one raw message into (event type, sign), or None to skip.

    Rules:
      * TRADE records are effective market orders (MO).  An ADD that
        crosses the opposite best quote also generates an immediate
        transaction and is classified MO.
      * ADD at the same-side best quote or strictly inside the spread
        is a limit order (LO).  ADD behind the best quote is skipped:
        events deeper in the book are out of scope.
      * CANCEL exactly at the same-side best quote is a cancellation
        (CA); CANCEL elsewhere is skipped.
      * primed is true iff the midpoint (bid + ask) changed.
      * sign is +1 for buy MO/LO and -1 for sell MO/LO; for CA the sign
        is reversed (cancel sell -> +1, cancel buy -> -1) because the
        price effect points the opposite way.

    Raises MalformedMessageError when a quote pair is crossed or the
    side/action field is unrecognised.
    """
    if msg.bid_before >= msg.ask_before:
        raise MalformedMessageError(
            f"crossed quotes before event: bid {msg.bid_before} >= ask {msg.ask_before}"
        )
    if msg.bid_after >= msg.ask_after:
        raise MalformedMessageError(
            f"crossed quotes after event: bid {msg.bid_after} >= ask {msg.ask_after}"
        )
    if msg.side not in ("buy", "sell"):
        raise MalformedMessageError(f"unknown side {msg.side!r}")

    primed = msg.mid_after_halfticks() != msg.mid_before_halfticks()
    buy = msg.side == "buy"

    if msg.action == "TRADE":
        kind = EventKind.MO
    elif msg.action == "ADD":
        if buy:
            if msg.price >= msg.ask_before:
                kind = EventKind.MO  # crossing limit order transacts immediately
            elif msg.price >= msg.bid_before:
                kind = EventKind.LO
            else:
                return None
        else:
            if msg.price <= msg.bid_before:
                kind = EventKind.MO
            elif msg.price <= msg.ask_before:
                kind = EventKind.LO
            else:
                return None
    elif msg.action == "CANCEL":
        at_best = msg.price == (msg.bid_before if buy else msg.ask_before)
        if not at_best:
            return None
        kind = EventKind.CA
    else:
        raise MalformedMessageError(f"unknown action {msg.action!r}")

    if kind == EventKind.CA:
        sign = -1 if buy else 1
    else:
        sign = 1 if buy else -1

    etype = next(t for t in types_of_kind(kind) if t.primed == primed)
    return etype, sign


class EventSeries:
    """An immutable, day-segmented sequence of classified events.

    Stored column-wise in numpy arrays; safe for concurrent read-only
    use once constructed.  ``type_freq`` holds the exact unconditional
    frequency of each of the six event types.
    """

    __slots__ = (
        "day_id", "month_id", "seq", "timestamp_ms", "broker",
        "etype_code", "sign", "mid", "n_events", "day_bounds",
        "day_last", "type_counts", "_cache",
    )

    def __init__(self, day_id, month_id, seq, timestamp_ms, broker,
                 etype_code, sign, mid, _validate: bool = True):
        self.day_id = np.asarray(day_id, dtype=np.int64)
        self.month_id = np.asarray(month_id, dtype=np.int64)
        self.seq = np.asarray(seq, dtype=np.int64)
        self.timestamp_ms = np.asarray(timestamp_ms, dtype=np.int64)
        self.broker = np.asarray(broker, dtype=np.int64)
        self.etype_code = np.asarray(etype_code, dtype=np.int8)
        self.sign = np.asarray(sign, dtype=np.int8)
        self.mid = np.asarray(mid, dtype=np.int64)
        self.n_events = int(len(self.day_id))
        if self.n_events == 0:
            raise EmptySeriesError("event series is empty")
        if _validate:
            self._validate()
        self.day_bounds = self._compute_day_bounds()
        self.day_last = np.empty(self.n_events, dtype=np.int64)
        for start, stop in self.day_bounds:
            self.day_last[start:stop] = stop - 1
        self.type_counts = np.bincount(self.etype_code, minlength=N_EVENT_TYPES).astype(np.int64)
        for arr in (self.day_id, self.month_id, self.seq, self.timestamp_ms,
                    self.broker, self.etype_code, self.sign, self.mid,
                    self.day_last, self.type_counts):
            arr.setflags(write=False)
        self._cache = {}

    def _validate(self) -> None:
        if not np.all((self.sign == 1) | (self.sign == -1)):
            bad = int(np.flatnonzero((self.sign != 1) & (self.sign != -1))[0])
            raise SeriesOrderError(bad, f"sign must be +1 or -1, got {self.sign[bad]}")
        if not np.all(self.mid > 0):
            bad = int(np.flatnonzero(self.mid <= 0)[0])
            raise SeriesOrderError(bad, f"mid_before must be positive, got {self.mid[bad]}")
        if np.any((self.etype_code < 0) | (self.etype_code >= N_EVENT_TYPES)):
            bad = int(np.flatnonzero((self.etype_code < 0) | (self.etype_code >= N_EVENT_TYPES))[0])
            raise SeriesOrderError(bad, "event type code out of range")
        day_change = np.flatnonzero(np.diff(self.day_id) != 0) + 1
        pieces = np.split(np.arange(self.n_events), day_change)
        seen = set()
        for piece in pieces:
            d = int(self.day_id[piece[0]])
            if d in seen:
                raise SeriesOrderError(int(piece[0]), f"day_id {d} appears in disjoint blocks")
            seen.add(d)
            ts = self.timestamp_ms[piece]
            drop = np.flatnonzero(np.diff(ts) < 0)
            if len(drop):
                raise SeriesOrderError(int(piece[drop[0] + 1]),
                                       "timestamps decrease within a day")
            months = self.month_id[piece]
            if months.min() != months.max():
                raise SeriesOrderError(int(piece[0]), f"day_id {d} spans several month_ids")
            sq = self.seq[piece]
            if len(sq) > 1 and not np.all(np.diff(sq) > 0):
                bad = int(piece[np.flatnonzero(np.diff(sq) <= 0)[0] + 1])
                raise SeriesOrderError(bad, "seq not strictly increasing within a day")

    def _compute_day_bounds(self) -> list[tuple[int, int]]:
        change = np.flatnonzero(np.diff(self.day_id) != 0) + 1
        starts = np.concatenate([[0], change])
        stops = np.concatenate([change, [self.n_events]])
        return [(int(a), int(b)) for a, b in zip(starts, stops)]

    @property
    def type_freq(self) -> dict[EventType, float]:
        return {t: self.type_counts[t.code] / self.n_events for t in _TYPE_ORDER}

    def type_prob(self, etype: EventType) -> float:
        return self.type_counts[etype.code] / self.n_events

    @property
    def events(self) -> list[OrderBookEvent]:
        """Materialise the row view (intended for small series and tests)."""
        return [self[i] for i in range(self.n_events)]

    def __len__(self) -> int:
        return self.n_events

    def __getitem__(self, i: int) -> OrderBookEvent:
        return OrderBookEvent(
            day_id=int(self.day_id[i]),
            month_id=int(self.month_id[i]),
            seq=int(self.seq[i]),
            timestamp_ms=int(self.timestamp_ms[i]),
            broker=int(self.broker[i]),
            etype=EventType.from_code(int(self.etype_code[i])),
            sign=int(self.sign[i]),
            mid_before=int(self.mid[i]),
        )

    def __iter__(self) -> Iterator[OrderBookEvent]:
        return (self[i] for i in range(self.n_events))

    def price_steps(self) -> np.ndarray:
        """Midpoint change caused by each event, zero at day ends.

        steps[t] = mid[t+1] - mid[t] within a day; the last event of each
        day gets 0 because its after-price is not observable here.  Cached.
        """
        cached = self._cache.get("price_steps")
        if cached is None:
            steps = np.zeros(self.n_events, dtype=np.int64)
            steps[:-1] = self.mid[1:] - self.mid[:-1]
            for _, stop in self.day_bounds:
                steps[stop - 1] = 0
            steps.setflags(write=False)
            self._cache["price_steps"] = steps
            cached = steps
        return cached


def build_series(events: Sequence[OrderBookEvent]) -> EventSeries:
    """Assemble classified events into an EventSeries.

    Events must already be time-ordered within each day; seq is
    reassigned densely (0..n-1 per day) and day boundaries and type
    frequencies are computed.
    """
    events = list(events)
    if not events:
        raise EmptySeriesError("cannot build a series from zero events")
    n = len(events)
    day_id = np.fromiter((e.day_id for e in events), dtype=np.int64, count=n)
    month_id = np.fromiter((e.month_id for e in events), dtype=np.int64, count=n)
    timestamp_ms = np.fromiter((e.timestamp_ms for e in events), dtype=np.int64, count=n)
    broker = np.fromiter((e.broker for e in events), dtype=np.int64, count=n)
    etype_code = np.fromiter((e.etype.code for e in events), dtype=np.int8, count=n)
    sign = np.fromiter((e.sign for e in events), dtype=np.int8, count=n)
    mid = np.fromiter((e.mid_before for e in events), dtype=np.int64, count=n)
    seq = _dense_seq(day_id)
    return EventSeries(day_id, month_id, seq, timestamp_ms, broker,
                       etype_code, sign, mid)


def _dense_seq(day_id: np.ndarray) -> np.ndarray:
    n = len(day_id)
    seq = np.empty(n, dtype=np.int64)
    change = np.flatnonzero(np.diff(day_id) != 0) + 1
    starts = np.concatenate([[0], change, [n]])
    for a, b in zip(starts[:-1], starts[1:]):
        seq[a:b] = np.arange(b - a, dtype=np.int64)
    return seq


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

CLASSIFIED_COLUMNS = ["day_id", "month_id", "seq", "timestamp_ms", "broker",
                      "etype", "sign", "mid_halfticks"]
RAW_COLUMNS = ["timestamp_ms", "broker", "side", "action", "price_ticks",
               "size", "bid_before", "ask_before", "bid_after", "ask_after"]


def write_classified_csv(series: EventSeries, path) -> None:
    labels = np.array([t.label for t in _TYPE_ORDER])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CLASSIFIED_COLUMNS) + "\n")
        et = labels[series.etype_code]
        for i in range(series.n_events):
            sgn = "+1" if series.sign[i] > 0 else "-1"
            fh.write(f"{series.day_id[i]},{series.month_id[i]},{series.seq[i]},"
                     f"{series.timestamp_ms[i]},{series.broker[i]},{et[i]},"
                     f"{sgn},{series.mid[i]}\n")


def read_classified_csv(path) -> EventSeries:
    df = pd.read_csv(path, dtype={"etype": str})
    missing = [c for c in CLASSIFIED_COLUMNS if c not in df.columns]
    if missing:
        raise MalformedMessageError(f"classified CSV missing columns: {missing}")
    codes = np.empty(len(df), dtype=np.int8)
    labels = df["etype"].to_numpy()
    for t in _TYPE_ORDER:
        codes[labels == t.label] = t.code
    unknown = ~np.isin(labels, [t.label for t in _TYPE_ORDER])
    if unknown.any():
        idx = int(np.flatnonzero(unknown)[0])
        raise MalformedMessageError(f"unknown etype {labels[idx]!r} at row {idx}")
    return EventSeries(
        df["day_id"].to_numpy(), df["month_id"].to_numpy(), df["seq"].to_numpy(),
        df["timestamp_ms"].to_numpy(), df["broker"].to_numpy(), codes,
        df["sign"].to_numpy(), df["mid_halfticks"].to_numpy(),
    )


def write_raw_csv(messages: Iterable[RawMessage], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(RAW_COLUMNS) + "\n")
        for m in messages:
            fh.write(f"{m.timestamp_ms},{m.broker},{m.side},{m.action},{m.price},"
                     f"{m.size},{m.bid_before},{m.ask_before},{m.bid_after},{m.ask_after}\n")


def iter_raw_csv(path) -> Iterator[tuple[int, RawMessage]]:
    """Yield (row_index, RawMessage) pairs; row_index is 0-based data row."""
    df = pd.read_csv(path, dtype={"side": str, "action": str})
    missing = [c for c in RAW_COLUMNS if c not in df.columns]
    if missing:
        raise MalformedMessageError(f"raw CSV missing columns: {missing}")
    cols = [df[c].to_numpy() for c in RAW_COLUMNS]
    for i in range(len(df)):
        yield i, RawMessage(
            timestamp_ms=int(cols[0][i]), broker=int(cols[1][i]),
            side=str(cols[2][i]), action=str(cols[3][i]),
            price=int(cols[4][i]), size=int(cols[5][i]),
            bid_before=int(cols[6][i]), ask_before=int(cols[7][i]),
            bid_after=int(cols[8][i]), ask_after=int(cols[9][i]),
        )


def parse_hhmm(text: str) -> int:
    """'08:00' -> milliseconds since midnight."""
    hh, mm = text.split(":")
    return (int(hh) * 60 + int(mm)) * 60_000


TRADING_DAY_START_MS = parse_hhmm("08:00")
TRADING_DAY_END_MS = parse_hhmm("16:30")


def in_trading_hours(timestamp_ms: int,
                     start_ms: int = TRADING_DAY_START_MS,
                     end_ms: int = TRADING_DAY_END_MS) -> bool:
    return start_ms <= timestamp_ms <= end_ms
