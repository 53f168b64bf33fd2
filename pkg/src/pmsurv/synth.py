"""Synthetic corpus generator with labeled trader populations.

Worlds are built from five populations (noise, skilled, insider, sybil,
market maker) trading event-anchored markets whose lead times follow an
exponential hazard.  Pre-event prices are a bounded random walk that is
independent of the outcome, so a noise-only world is a true null for every
detector; insiders optionally move the price toward the outcome before the
event, which is what the pipeline is expected to recover.

Everything is derived from per-market and per-account seed substreams, so a
given config always produces the identical corpus.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from decimal import Decimal

import math

from .errors import InvalidConfig, UnknownId
from .model import (
    Account,
    Category,
    Corpus,
    Event,
    FundingTag,
    Market,
    PriceSeries,
    Side,
    Trade,
)
from .rng import substream

CATEGORIES = tuple(Category)

LABEL_NOISE = "noise"
LABEL_SKILLED = "skilled"
LABEL_INSIDER = "insider"
LABEL_SYBIL = "sybil"
LABEL_MARKET_MAKER = "market_maker"


@dataclass(frozen=True)
class WorldConfig:
    n_noise: int = 200
    n_skilled: int = 20
    n_insider: int = 5
    n_sybil: int = 10
    n_market_maker: int = 2
    markets_per_category: int = 30
    lead_hazard_per_day: float = 0.241
    lead_hazard_overrides: dict[Category, float] = field(default_factory=dict)
    price_step_minutes: int = 15
    price_step_sd: float = 0.004
    settle_hours: float = 12.0
    skill_edge: float = 0.65  # probability a skilled trade is on the outcome side
    skilled_events: int = 25
    noise_events_min: int = 12
    noise_events_max: int = 30
    home_category_bias: float = 0.6
    insider_coupling: bool = False
    insider_impact_per_usd: float = 1e-4
    master_seed: int = 0
    start: datetime = datetime(2025, 1, 1, tzinfo=timezone.utc)

    def __post_init__(self):
        if not (0.5 < self.skill_edge <= 1.0):
            raise InvalidConfig("skill_edge must be in (0.5, 1]")
        if self.lead_hazard_per_day <= 0 or any(
            v <= 0 for v in self.lead_hazard_overrides.values()
        ):
            raise InvalidConfig("lead hazards must be > 0")
        for name in ("n_noise", "n_skilled", "n_insider", "n_sybil",
                     "n_market_maker", "markets_per_category"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be >= 0")
        if self.noise_events_min > self.noise_events_max:
            raise InvalidConfig("noise_events_min exceeds noise_events_max")

    def hazard(self, category: Category) -> float:
        return self.lead_hazard_overrides.get(category, self.lead_hazard_per_day)


@dataclass(frozen=True)
class GroundTruth:
    account_labels: dict[str, str]
    insider_moved: dict[str, bool]  # market_id -> insider traded with coupling on
    informed_notional: dict[str, Decimal]  # market_id -> insider pre-event notional


def _sec(dt: datetime) -> datetime:
    return dt.replace(microsecond=0)


def _dec2(x: float) -> Decimal:
    return Decimal(f"{x:.2f}")


def _dec4(x: float) -> Decimal:
    return Decimal(f"{x:.4f}")


class _Path:
    """Mutable step-function price path used during generation."""

    def __init__(self):
        self.times: list[datetime] = []
        self.values: list[float] = []

    def append(self, t: datetime, p: float) -> None:
        self.times.append(t)
        self.values.append(p)

    def at(self, t: datetime) -> float:
        idx = bisect_right(self.times, t)
        if idx == 0:
            return self.values[0]
        return self.values[idx - 1]

    def shift_after(self, t: datetime, target: float, frac: float) -> None:
        """Move every point strictly after t a fraction of the way to target."""
        idx = bisect_right(self.times, t)
        for i in range(idx, len(self.values)):
            p = self.values[i] + frac * (target - self.values[i])
            self.values[i] = min(0.99, max(0.01, p))


@dataclass
class _MarketDraft:
    market: Market
    p0: float
    path: _Path
    pre_event_end: int  # index of the first settle point


def _build_market(config: WorldConfig, idx: int, category: Category) -> _MarketDraft:
    mid = f"m{idx:04d}"
    rng = substream(config.master_seed, f"market|{mid}")
    t_open = _sec(config.start + timedelta(hours=6.0 * idx + rng.uniform(0.0, 4.0)))
    tau_days = rng.exponential(1.0 / config.hazard(category))
    t_event = _sec(t_open + timedelta(days=tau_days))
    if t_event <= t_open:
        t_event = t_open + timedelta(seconds=60)
    t_resolve = _sec(t_event + timedelta(hours=config.settle_hours + 12.0))
    p0 = float(rng.uniform(0.2, 0.8))
    outcome = int(rng.random() < p0)
    market = Market(
        market_id=mid,
        event_id=f"e{idx:04d}",
        category=category,
        t_open=t_open,
        t_resolve=t_resolve,
        outcome=outcome,
        t_event=t_event,
    )

    path = _Path()
    step = timedelta(minutes=config.price_step_minutes)
    t = t_open
    p = p0
    path.append(t_open, p0)
    t += step
    while t < t_event:
        p = min(0.99, max(0.01, p + config.price_step_sd * rng.standard_normal()))
        path.append(t, p)
        t += step
    pre_event_end = len(path.times)

    t = max(t, t_event)
    while t <= t_resolve:
        path.append(t, float(outcome))  # placeholder, ramped after coupling
        t += step
    return _MarketDraft(market=market, p0=p0, path=path, pre_event_end=pre_event_end)


def _finalize_path(config: WorldConfig, draft: _MarketDraft) -> PriceSeries:
    """Ramp the post-event points from the walk's end value to the outcome."""
    market = draft.market
    path = draft.path
    p_last = path.values[draft.pre_event_end - 1]
    settle = timedelta(hours=config.settle_hours)
    for i in range(draft.pre_event_end, len(path.times)):
        t = path.times[i]
        frac = min(1.0, (t - market.t_event) / settle if settle else 1.0)
        path.values[i] = p_last + frac * (market.outcome - p_last)
    return PriceSeries(
        market_id=market.market_id,
        timestamps=tuple(path.times),
        prices=tuple(round(p, 6) for p in path.values),
    )


def generate_world(config: WorldConfig) -> tuple[Corpus, GroundTruth]:
    """Build a labeled corpus from the population and market counts."""
    drafts: list[_MarketDraft] = []
    idx = 0
    for category in CATEGORIES:
        for _ in range(config.markets_per_category):
            drafts.append(_build_market(config, idx, category))
            idx += 1
    by_id = {d.market.market_id: d for d in drafts}
    market_ids = sorted(by_id)

    labels: dict[str, str] = {}
    accounts: dict[str, Account] = {}
    raw_trades: list[tuple[datetime, str, str, Side, Decimal, Decimal]] = []
    insider_moved: dict[str, bool] = {m: False for m in market_ids}
    informed_notional: dict[str, Decimal] = {}

    def add_trade(ts: datetime, account_id: str, market_id: str, side: Side,
                  notional: float, price: float) -> Decimal:
        price_d = _dec4(min(0.99, max(0.01, price)))
        size = _dec2(notional / float(price_d))
        raw_trades.append((_sec(ts), account_id, market_id, side, size, price_d))
        return size * price_d

    # -- insiders (first, so coupling shapes the path other populations see) --
    eligible = [
        m for m in market_ids
        if (by_id[m].market.t_event - by_id[m].market.t_open) >= timedelta(hours=12)
        and (by_id[m].p0 <= 0.6 if by_id[m].market.outcome == 1 else by_id[m].p0 >= 0.4)
    ]
    pick_rng = substream(config.master_seed, "insider-markets")
    chosen = [
        str(m)
        for m in pick_rng.choice(
            eligible, size=min(config.n_insider, len(eligible)), replace=False
        )
    ]
    for k, market_id in enumerate(sorted(chosen)):
        account_id = f"insider-{k:03d}"
        rng = substream(config.master_seed, f"account|{account_id}")
        draft = by_id[market_id]
        market = draft.market
        side = Side.BUY if market.outcome == 1 else Side.SELL
        lo = max(market.t_open, market.t_event - timedelta(hours=36))
        hi = market.t_event - timedelta(hours=2)
        n_trades = int(rng.integers(2, 6))
        offsets = sorted(rng.uniform(0.0, 1.0, size=n_trades))
        total_notional = float(rng.uniform(10_000, 40_000))
        shares = rng.dirichlet([2.0] * n_trades)
        shares[0] = max(shares[0], 0.4)  # front-load so profit clears $1k even late
        shares = shares / shares.sum()
        spent = Decimal(0)
        for off, share in zip(offsets, shares):
            ts = lo + (hi - lo) * float(off)
            price = draft.path.at(_sec(ts))
            spent += add_trade(ts, account_id, market_id, side, total_notional * float(share), price)
            if config.insider_coupling:
                frac = 1.0 - math.exp(
                    -config.insider_impact_per_usd * total_notional * float(share)
                )
                draft.path.shift_after(_sec(ts), float(market.outcome), frac)
        created = _sec(market.t_event - timedelta(hours=float(rng.uniform(8, 150))))
        first_ts = min(t[0] for t in raw_trades if t[1] == account_id)
        accounts[account_id] = Account(
            account_id=account_id,
            created_at=min(created, first_ts - timedelta(minutes=1)),
            funding_tag=FundingTag.MIXER if rng.random() < 0.5 else FundingTag.UNKNOWN,
        )
        labels[account_id] = LABEL_INSIDER
        insider_moved[market_id] = bool(config.insider_coupling)
        informed_notional[market_id] = spent

    # -- finalize paths: post-event settle ramps see any insider displacement --
    series = {m: _finalize_path(config, by_id[m]) for m in market_ids}

    def price_for(market_id: str, ts: datetime) -> float:
        return series[market_id].price_at(_sec(ts))

    markets_by_category: dict[Category, list[str]] = {c: [] for c in CATEGORIES}
    for m in market_ids:
        markets_by_category[by_id[m].market.category].append(m)

    def pick_markets(rng, n: int, home: Category) -> list[str]:
        chosen: list[str] = []
        pool = set()
        n = min(n, len(market_ids))
        while len(pool) < n:
            if rng.random() < config.home_category_bias and markets_by_category[home]:
                m = markets_by_category[home][int(rng.integers(len(markets_by_category[home])))]
            else:
                m = market_ids[int(rng.integers(len(market_ids)))]
            pool.add(m)
        return sorted(pool)

    # -- noise traders ---------------------------------------------------------
    for k in range(config.n_noise):
        account_id = f"noise-{k:04d}"
        rng = substream(config.master_seed, f"account|{account_id}")
        home = CATEGORIES[int(rng.integers(len(CATEGORIES)))]
        n_events = int(rng.integers(config.noise_events_min, config.noise_events_max + 1))
        for market_id in pick_markets(rng, n_events, home):
            market = by_id[market_id].market
            for _ in range(int(rng.integers(1, 3))):
                ts = market.t_open + (market.t_event - market.t_open) * float(rng.uniform(0.02, 0.98))
                side = Side.BUY if rng.random() < 0.5 else Side.SELL
                add_trade(ts, account_id, market_id, side,
                          float(rng.uniform(20, 500)), price_for(market_id, ts))
        accounts[account_id] = Account(
            account_id=account_id,
            created_at=_sec(config.start - timedelta(days=float(rng.uniform(30, 400)))),
            funding_tag=FundingTag.CEX if rng.random() < 0.8 else FundingTag.UNKNOWN,
        )
        labels[account_id] = LABEL_NOISE

    # -- skilled traders -------------------------------------------------------
    for k in range(config.n_skilled):
        account_id = f"skill-{k:04d}"
        rng = substream(config.master_seed, f"account|{account_id}")
        home = CATEGORIES[int(rng.integers(len(CATEGORIES)))]
        for market_id in pick_markets(rng, config.skilled_events, home):
            market = by_id[market_id].market
            ts = market.t_open + (market.t_event - market.t_open) * float(rng.uniform(0.02, 0.98))
            correct = rng.random() < config.skill_edge
            outcome_side = Side.BUY if market.outcome == 1 else Side.SELL
            side = outcome_side if correct else (
                Side.SELL if outcome_side is Side.BUY else Side.BUY
            )
            add_trade(ts, account_id, market_id, side,
                      float(rng.uniform(50, 800)), price_for(market_id, ts))
        accounts[account_id] = Account(
            account_id=account_id,
            created_at=_sec(config.start - timedelta(days=float(rng.uniform(30, 400)))),
            funding_tag=FundingTag.CEX,
        )
        labels[account_id] = LABEL_SKILLED

    # -- sybils: single event, sub-threshold volume -----------------------------
    for k in range(config.n_sybil):
        account_id = f"sybil-{k:03d}"
        rng = substream(config.master_seed, f"account|{account_id}")
        market_id = market_ids[int(rng.integers(len(market_ids)))]
        market = by_id[market_id].market
        ts = market.t_open + (market.t_event - market.t_open) * float(rng.uniform(0.3, 0.98))
        side = Side.BUY if rng.random() < 0.5 else Side.SELL
        add_trade(ts, account_id, market_id, side,
                  float(rng.uniform(50, 800)), price_for(market_id, ts))
        created = _sec(market.t_event - timedelta(hours=float(rng.uniform(8, 150))))
        accounts[account_id] = Account(
            account_id=account_id,
            created_at=min(created, _sec(ts) - timedelta(minutes=1)),
            funding_tag=FundingTag.UNKNOWN,
        )
        labels[account_id] = LABEL_SYBIL

    # -- market makers: two-sided flow across many markets ----------------------
    for k in range(config.n_market_maker):
        account_id = f"mm-{k:02d}"
        rng = substream(config.master_seed, f"account|{account_id}")
        for market_id in market_ids[: min(60, len(market_ids))]:
            market = by_id[market_id].market
            span = market.t_event - market.t_open
            t1 = market.t_open + span * float(rng.uniform(0.05, 0.45))
            t2 = market.t_open + span * float(rng.uniform(0.5, 0.95))
            notional = float(rng.uniform(50, 150))
            add_trade(t1, account_id, market_id, Side.BUY, notional, price_for(market_id, t1))
            add_trade(t2, account_id, market_id, Side.SELL, notional * float(rng.uniform(0.9, 1.1)),
                      price_for(market_id, t2))
        accounts[account_id] = Account(
            account_id=account_id,
            created_at=_sec(config.start - timedelta(days=500)),
            funding_tag=FundingTag.CEX,
        )
        labels[account_id] = LABEL_MARKET_MAKER

    raw_trades.sort(key=lambda r: (r[0], r[1], r[2]))
    trades = [
        Trade(
            trade_id=f"t{i:07d}",
            account_id=r[1],
            market_id=r[2],
            side=r[3],
            size=r[4],
            price=r[5],
            ts=r[0],
        )
        for i, r in enumerate(raw_trades)
    ]
    markets = {m: by_id[m].market for m in market_ids}
    events = {
        d.market.event_id: Event(
            event_id=d.market.event_id,
            market_ids=(d.market.market_id,),
            t_event=d.market.t_event,
        )
        for d in drafts
    }
    corpus = Corpus.build(markets, events, accounts, trades, series)
    truth = GroundTruth(
        account_labels=labels,
        insider_moved=insider_moved,
        informed_notional=informed_notional,
    )
    return corpus, truth


# -- scoring against truth -----------------------------------------------------

@dataclass(frozen=True)
class DetectionMetrics:
    account_precision: float | None
    account_recall: float | None
    population_confusion: dict[str, dict[str, int]]
    market_precision: float | None = None
    market_recall: float | None = None
    n_flagged_accounts: int = 0
    n_stage3_markets: int = 0


def evaluate_detection(report, truth: GroundTruth) -> DetectionMetrics:
    """Precision/recall of flagged accounts against ground-truth insiders.

    ``report`` is either an iterable of flagged account ids or a pipeline
    report object (``stage1_flagged`` risk scores plus a stage-3 queue); in
    the latter case market-level recall over insider-moved markets is
    reported too.
    """
    stage3_ids: list[str] | None = None
    if hasattr(report, "stage1_flagged"):
        flagged = [rs.account_id for rs in report.stage1_flagged]
        stage3_ids = [entry.market_id for entry in report.stage3_queue]
    else:
        flagged = list(report)

    for account_id in flagged:
        if account_id not in truth.account_labels:
            raise UnknownId(account_id)

    flagged_set = set(flagged)
    insiders = {a for a, lab in truth.account_labels.items() if lab == LABEL_INSIDER}
    tp = len(flagged_set & insiders)
    precision = tp / len(flagged_set) if flagged_set else None
    recall = tp / len(insiders) if insiders else None

    confusion: dict[str, dict[str, int]] = {}
    for account_id, label in truth.account_labels.items():
        cell = confusion.setdefault(label, {"total": 0, "flagged": 0})
        cell["total"] += 1
        if account_id in flagged_set:
            cell["flagged"] += 1

    market_precision = None
    market_recall = None
    n_stage3 = 0
    if stage3_ids is not None:
        for market_id in stage3_ids:
            if market_id not in truth.insider_moved:
                raise UnknownId(market_id)
        n_stage3 = len(stage3_ids)
        moved = {m for m, v in truth.insider_moved.items() if v}
        hits = len(set(stage3_ids) & moved)
        market_precision = hits / n_stage3 if n_stage3 else None
        market_recall = hits / len(moved) if moved else None

    return DetectionMetrics(
        account_precision=precision,
        account_recall=recall,
        population_confusion=confusion,
        market_precision=market_precision,
        market_recall=market_recall,
        n_flagged_accounts=len(flagged_set),
        n_stage3_markets=n_stage3,
    )
