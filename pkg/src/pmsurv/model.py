"""Corpus data model: trades, markets, events, price lookup, resolution PnL.

All timestamps are timezone-aware UTC at second resolution.  Money is
``Decimal`` end to end: trade sizes and prices come in as decimal strings,
so per-trade resolution PnL (``size * (outcome - price)``) is exact and
event-level aggregates reproduce fixtures to the cent.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal
from enum import Enum

from .errors import TimeBeforeSeries, UnknownAccount

Money = Decimal

CENT = Decimal("0.01")


def quantize_money(value: Decimal) -> Decimal:
    """Round to reporting precision (2 fractional digits, banker's rounding)."""
    return value.quantize(CENT)


class Side(str, Enum):
    BUY = "BUY"
    SELL = "SELL"


class Category(str, Enum):
    POLITICS = "POLITICS"
    SPORTS = "SPORTS"
    CRYPTO = "CRYPTO"
    FINANCE = "FINANCE"
    OTHER = "OTHER"


class FundingTag(str, Enum):
    CEX = "CEX"
    MIXER = "MIXER"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class Trade:
    trade_id: str
    account_id: str
    market_id: str
    side: Side
    size: Decimal  # shares, >= 0
    price: Decimal  # probability of the YES share, in [0, 1]
    ts: datetime

    @property
    def notional(self) -> Decimal:
        return self.size * self.price

    @property
    def signed_notional(self) -> Decimal:
        """Notional signed by direction: BUY positive, SELL negative."""
        n = self.notional
        return n if self.side is Side.BUY else -n


@dataclass(frozen=True)
class Market:
    market_id: str
    event_id: str
    category: Category
    t_open: datetime
    t_resolve: datetime
    outcome: int  # 0 or 1
    t_deadline: datetime | None = None
    t_event: datetime | None = None

    @property
    def lead_time_days(self) -> float | None:
        """Days from first trade to public observation of the event."""
        if self.t_event is None:
            return None
        return (self.t_event - self.t_open).total_seconds() / 86400.0


@dataclass(frozen=True)
class Event:
    event_id: str
    market_ids: tuple[str, ...]
    t_event: datetime | None = None


@dataclass(frozen=True)
class Account:
    account_id: str
    created_at: datetime | None = None
    funding_tag: FundingTag | None = None
    first_trade_ts: datetime | None = None

    @property
    def effective_created_at(self) -> datetime | None:
        """Creation time, falling back to the first trade when unrecorded."""
        return self.created_at if self.created_at is not None else self.first_trade_ts


@dataclass(frozen=True)
class PriceSeries:
    """Step-interpolated price path; right-continuous, holds the last value."""

    market_id: str
    timestamps: tuple[datetime, ...]
    prices: tuple[float, ...]

    def price_at(self, t: datetime) -> float:
        if not self.timestamps:
            raise TimeBeforeSeries(f"series for {self.market_id} is empty")
        idx = bisect_right(self.timestamps, t)
        if idx == 0:
            raise TimeBeforeSeries(
                f"series for {self.market_id} starts at {self.timestamps[0]}, "
                f"requested {t}"
            )
        return self.prices[idx - 1]


def price_at(series: PriceSeries, t: datetime) -> float:
    """Price of the last point at or before ``t`` (step interpolation)."""
    return series.price_at(t)


def trade_resolution_pnl(trade: Trade, outcome: int) -> Money:
    """Resolution PnL of a single trade marked individually to the outcome.

    BUY pays ``size * (outcome - price)``, SELL the negative.  Marking every
    trade to resolution keeps PnL linear in direction, which the event-level
    sign flip of the null model relies on.
    """
    outcome_d = Decimal(outcome)
    if trade.side is Side.BUY:
        return trade.size * (outcome_d - trade.price)
    return trade.size * (trade.price - outcome_d)


@dataclass(frozen=True)
class EventPnl:
    event_id: str
    pnl: Money
    gross_volume: Money


@dataclass(frozen=True)
class Corpus:
    """Immutable, cross-indexed view of one loaded trade corpus.

    Built via :meth:`Corpus.build`, which derives first-trade timestamps,
    implicit events and per-entity trade indices.  All detector operations
    are pure functions of (corpus, arguments).
    """

    markets: dict[str, Market]
    events: dict[str, Event]
    accounts: dict[str, Account]
    trades: tuple[Trade, ...]
    series: dict[str, PriceSeries]
    trades_by_account: dict[str, tuple[Trade, ...]] = field(repr=False, default_factory=dict)
    trades_by_market: dict[str, tuple[Trade, ...]] = field(repr=False, default_factory=dict)

    @classmethod
    def build(
        cls,
        markets: dict[str, Market],
        events: dict[str, Event],
        accounts: dict[str, Account],
        trades: list[Trade],
        series: dict[str, PriceSeries],
    ) -> "Corpus":
        ordered = sorted(trades, key=lambda t: (t.ts, t.trade_id))
        by_account: dict[str, list[Trade]] = {}
        by_market: dict[str, list[Trade]] = {}
        for tr in ordered:
            by_account.setdefault(tr.account_id, []).append(tr)
            by_market.setdefault(tr.market_id, []).append(tr)

        full_accounts: dict[str, Account] = {}
        for account_id in sorted(set(accounts) | set(by_account)):
            base = accounts.get(account_id, Account(account_id=account_id))
            first_ts = by_account[account_id][0].ts if account_id in by_account else None
            full_accounts[account_id] = Account(
                account_id=account_id,
                created_at=base.created_at,
                funding_tag=base.funding_tag,
                first_trade_ts=first_ts,
            )

        return cls(
            markets=dict(markets),
            events=dict(events),
            accounts=full_accounts,
            trades=tuple(ordered),
            series=dict(series),
            trades_by_account={k: tuple(v) for k, v in by_account.items()},
            trades_by_market={k: tuple(v) for k, v in by_market.items()},
        )

    # -- lookups -------------------------------------------------------------

    def account_trades(self, account_id: str) -> tuple[Trade, ...]:
        if account_id not in self.accounts:
            raise UnknownAccount(account_id)
        return self.trades_by_account.get(account_id, ())

    def market_trades(self, market_id: str) -> tuple[Trade, ...]:
        return self.trades_by_market.get(market_id, ())

    def event_of_market(self, market_id: str) -> Event:
        return self.events[self.markets[market_id].event_id]

    def event_t_ref(self, event_id: str) -> datetime:
        """Reference time of an event: shared t_event, else earliest member resolve."""
        ev = self.events[event_id]
        if ev.t_event is not None:
            return ev.t_event
        return min(self.markets[m].t_resolve for m in ev.market_ids)

    def event_last_resolve(self, event_id: str) -> datetime:
        ev = self.events[event_id]
        return max(self.markets[m].t_resolve for m in ev.market_ids)

    def market_ids_of_event(self, event_id: str) -> tuple[str, ...]:
        return self.events[event_id].market_ids


def event_pnl_table(corpus: Corpus, account_id: str) -> list[EventPnl]:
    """Per-event resolution PnL and gross volume for one account.

    One row per event the account traded, sorted by event id.  PnL sums
    :func:`trade_resolution_pnl` over the account's trades in the event's
    markets; gross volume sums ``size * price``.
    """
    rows: dict[str, list[Money]] = {}
    for tr in corpus.account_trades(account_id):
        market = corpus.markets[tr.market_id]
        acc = rows.setdefault(market.event_id, [Decimal(0), Decimal(0)])
        acc[0] += trade_resolution_pnl(tr, market.outcome)
        acc[1] += tr.notional
    return [
        EventPnl(event_id=eid, pnl=vals[0], gross_volume=vals[1])
        for eid, vals in sorted(rows.items())
    ]


# -- validation ---------------------------------------------------------------

@dataclass
class ValidationReport:
    fatal: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.fatal


def validate_tables(
    markets: dict[str, Market],
    events: dict[str, Event],
    accounts: dict[str, Account],
    trades: list[Trade],
    series: dict[str, PriceSeries],
) -> ValidationReport:
    """Check every type invariant; violations become report content, not raises."""
    rep = ValidationReport()

    for m in markets.values():
        if m.outcome not in (0, 1):
            rep.fatal.append(f"market {m.market_id}: outcome {m.outcome} not binary")
        if m.t_open > m.t_resolve:
            rep.fatal.append(f"market {m.market_id}: t_open after t_resolve")
        if m.t_event is not None and not (m.t_open <= m.t_event <= m.t_resolve):
            rep.fatal.append(
                f"market {m.market_id}: t_event outside [t_open, t_resolve]"
            )
        if m.event_id not in events:
            rep.fatal.append(
                f"market {m.market_id}: references unknown event {m.event_id}"
            )

    for ev in events.values():
        for mid in ev.market_ids:
            if mid not in markets:
                rep.fatal.append(f"event {ev.event_id}: unknown member market {mid}")
            elif markets[mid].event_id != ev.event_id:
                rep.fatal.append(
                    f"event {ev.event_id}: member {mid} carries event_id "
                    f"{markets[mid].event_id}"
                )
        if not ev.market_ids:
            rep.warnings.append(f"event {ev.event_id}: no member markets")

    for tr in trades:
        if not (Decimal(0) <= tr.price <= Decimal(1)):
            rep.fatal.append(f"trade {tr.trade_id}: price {tr.price} outside [0, 1]")
        if tr.size < 0:
            rep.fatal.append(f"trade {tr.trade_id}: negative size {tr.size}")
        if tr.market_id not in markets:
            rep.fatal.append(
                f"trade {tr.trade_id}: references unknown market {tr.market_id}"
            )
        else:
            m = markets[tr.market_id]
            if not (m.t_open <= tr.ts <= m.t_resolve):
                rep.fatal.append(
                    f"trade {tr.trade_id}: ts outside market window of {tr.market_id}"
                )

    first_ts: dict[str, datetime] = {}
    for tr in sorted(trades, key=lambda t: t.ts):
        first_ts.setdefault(tr.account_id, tr.ts)
    for acct in accounts.values():
        ft = first_ts.get(acct.account_id)
        if acct.created_at is not None and ft is not None and acct.created_at > ft:
            rep.fatal.append(
                f"account {acct.account_id}: created_at after first trade"
            )
        if acct.created_at is None:
            rep.warnings.append(
                f"account {acct.account_id}: no created_at, first trade "
                "timestamp used as fallback"
            )

    for s in series.values():
        if s.market_id not in markets:
            rep.fatal.append(f"series for unknown market {s.market_id}")
            continue
        if not s.timestamps:
            rep.warnings.append(f"series for {s.market_id} is empty")
            continue
        if any(b <= a for a, b in zip(s.timestamps, s.timestamps[1:])):
            rep.fatal.append(f"series for {s.market_id}: timestamps not strictly increasing")
        if any(not (0.0 <= p <= 1.0) for p in s.prices):
            rep.fatal.append(f"series for {s.market_id}: price outside [0, 1]")
        if s.timestamps[0] < markets[s.market_id].t_open:
            rep.fatal.append(f"series for {s.market_id}: first point before t_open")

    return rep


def validate_corpus(corpus: Corpus) -> ValidationReport:
    """Re-run all invariant checks on a built corpus."""
    return validate_tables(
        corpus.markets, corpus.events, corpus.accounts, list(corpus.trades), corpus.series
    )


def utc(year, month, day, hour=0, minute=0, second=0) -> datetime:
    """Construct a UTC timestamp (test and fixture helper)."""
    return datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)
