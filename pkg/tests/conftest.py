"""Shared corpus-building helpers for the test suite."""

from __future__ import annotations

from datetime import datetime, timedelta
from decimal import Decimal

import pytest

from pmsurv.model import (
    Account,
    Category,
    Corpus,
    Event,
    Market,
    PriceSeries,
    Side,
    Trade,
    utc,
)


class CorpusBuilder:
    """Incremental corpus assembly for hand-built test fixtures."""

    def __init__(self):
        self.markets: dict[str, Market] = {}
        self.events: dict[str, Event] = {}
        self.accounts: dict[str, Account] = {}
        self.trades: list[Trade] = []
        self.series: dict[str, PriceSeries] = {}
        self._trade_seq = 0

    def market(
        self,
        market_id: str,
        event_id: str | None = None,
        category: Category = Category.POLITICS,
        t_open: datetime = utc(2026, 1, 1),
        t_resolve: datetime = utc(2026, 2, 1),
        outcome: int = 1,
        t_event: datetime | None = None,
    ) -> "CorpusBuilder":
        event_id = event_id or f"ev-{market_id}"
        self.markets[market_id] = Market(
            market_id=market_id,
            event_id=event_id,
            category=category,
            t_open=t_open,
            t_resolve=t_resolve,
            outcome=outcome,
            t_event=t_event,
        )
        members = tuple(
            sorted(
                {m.market_id for m in self.markets.values() if m.event_id == event_id}
            )
        )
        existing = self.events.get(event_id)
        ev_time = t_event if t_event is not None else (existing.t_event if existing else None)
        self.events[event_id] = Event(event_id=event_id, market_ids=members, t_event=ev_time)
        return self

    def account(self, account_id: str, created_at: datetime | None = None,
                funding_tag=None) -> "CorpusBuilder":
        self.accounts[account_id] = Account(
            account_id=account_id, created_at=created_at, funding_tag=funding_tag
        )
        return self

    def trade(
        self,
        account_id: str,
        market_id: str,
        side: Side,
        size: str,
        price: str,
        ts: datetime,
    ) -> "CorpusBuilder":
        self._trade_seq += 1
        self.trades.append(
            Trade(
                trade_id=f"t{self._trade_seq:05d}",
                account_id=account_id,
                market_id=market_id,
                side=side,
                size=Decimal(size),
                price=Decimal(price),
                ts=ts,
            )
        )
        if account_id not in self.accounts:
            self.account(account_id)
        return self

    def prices(self, market_id: str, points: list[tuple[datetime, float]]) -> "CorpusBuilder":
        self.series[market_id] = PriceSeries(
            market_id=market_id,
            timestamps=tuple(p[0] for p in points),
            prices=tuple(p[1] for p in points),
        )
        return self

    def build(self) -> Corpus:
        return Corpus.build(
            self.markets, self.events, self.accounts, self.trades, self.series
        )


@pytest.fixture
def builder() -> CorpusBuilder:
    return CorpusBuilder()


def make_event_series(
    builder: CorpusBuilder,
    account_id: str,
    event_pnls: list[str],
    t0: datetime = utc(2026, 1, 1),
) -> CorpusBuilder:
    """One market per event; a single BUY sized so the event PnL is as given.

    A positive target becomes a winning BUY on an outcome-1 market at price
    0.5 (pnl = size * 0.5); a negative target the same BUY on an outcome-0
    market (pnl = -size * 0.5).
    """
    for i, pnl in enumerate(event_pnls):
        target = Decimal(pnl)
        market_id = f"{account_id}-m{i:03d}"
        outcome = 1 if target >= 0 else 0
        size = abs(target) * 2
        t_open = t0 + timedelta(days=2 * i)
        builder.market(
            market_id,
            t_open=t_open,
            t_resolve=t_open + timedelta(days=1),
            outcome=outcome,
        )
        builder.trade(
            account_id, market_id, Side.BUY, str(size), "0.5",
            t_open + timedelta(hours=1),
        )
    return builder
