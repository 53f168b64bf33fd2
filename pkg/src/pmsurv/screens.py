"""Single-event insider screens and the composite anomaly score.

Three detectors live here: the lifecycle-and-conviction flag for one-shot
accounts, the order imbalance of flagged accounts with its predictiveness
regressions, and the per-market composite feature score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from decimal import Decimal
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InsufficientData,
    InsufficientPopulation,
    TimeBeforeSeries,
    UnknownAccount,
    UnknownEvent,
    UnknownMarket,
)
from .model import Corpus, Money, Side, trade_resolution_pnl


class TimingReference(str, Enum):
    T_EVENT = "T_EVENT"
    T_RESOLVE = "T_RESOLVE"


@dataclass(frozen=True)
class LifecycleConfig:
    window_days: float = 7.0
    min_volume: Money = Decimal("1000")
    min_profit: Money = Decimal("1000")
    max_external_volume_fraction: float = 0.0
    reference: TimingReference = TimingReference.T_EVENT

    def __post_init__(self):
        if self.window_days <= 0:
            raise ValueError("window_days must be positive")
        if self.min_volume < 0 or self.min_profit < 0:
            raise ValueError("thresholds must be >= 0")


@dataclass(frozen=True)
class LifecycleFlag:
    account_id: str
    event_id: str
    flagged: bool
    timing_ok: bool
    dormancy_ok: bool
    exclusivity_ok: bool
    volume_ok: bool
    profit_ok: bool
    realized_profit: Money
    gross_volume: Money


def lifecycle_flag(
    corpus: Corpus,
    account_id: str,
    event_id: str,
    config: LifecycleConfig = LifecycleConfig(),
) -> LifecycleFlag:
    """Lifecycle-and-conviction screen for one (account, event) pair.

    Timing: account creation falls inside the window before the event's
    reference time.  Dormancy: no trades after the event's last member
    market resolves.  Exclusivity: notional outside the event stays within
    the configured fraction of the account's total.  Conviction: gross
    volume and realized profit in the event both clear their thresholds.
    """
    if account_id not in corpus.accounts:
        raise UnknownAccount(account_id)
    if event_id not in corpus.events:
        raise UnknownEvent(event_id)

    event_markets = set(corpus.market_ids_of_event(event_id))
    if config.reference is TimingReference.T_EVENT:
        t_ref = corpus.event_t_ref(event_id)
    else:
        t_ref = min(corpus.markets[m].t_resolve for m in event_markets)
    last_resolve = corpus.event_last_resolve(event_id)
    window = timedelta(days=config.window_days)

    account = corpus.accounts[account_id]
    created = account.effective_created_at
    timing_ok = created is not None and t_ref - window <= created <= t_ref

    profit = Decimal(0)
    volume = Decimal(0)
    external = Decimal(0)
    total = Decimal(0)
    dormancy_ok = True
    for tr in corpus.account_trades(account_id):
        total += tr.notional
        if tr.ts > last_resolve:
            dormancy_ok = False
        if tr.market_id in event_markets:
            market = corpus.markets[tr.market_id]
            profit += trade_resolution_pnl(tr, market.outcome)
            volume += tr.notional
        else:
            external += tr.notional

    if total == 0:
        exclusivity_ok = True
    else:
        exclusivity_ok = external <= Decimal(str(config.max_external_volume_fraction)) * total
    volume_ok = volume >= config.min_volume
    profit_ok = profit >= config.min_profit
    flagged = timing_ok and dormancy_ok and exclusivity_ok and volume_ok and profit_ok
    return LifecycleFlag(
        account_id=account_id,
        event_id=event_id,
        flagged=flagged,
        timing_ok=timing_ok,
        dormancy_ok=dormancy_ok,
        exclusivity_ok=exclusivity_ok,
        volume_ok=volume_ok,
        profit_ok=profit_ok,
        realized_profit=profit,
        gross_volume=volume,
    )


def insider_order_imbalance(
    corpus: Corpus,
    market_id: str,
    flagged_accounts: Iterable[str],
    interval: tuple[datetime, datetime],
) -> float:
    """Net buy direction of flagged accounts over [start, end).

    (buy - sell) / (buy + sell) notional, 0 when no flagged account traded
    in the interval.
    """
    if market_id not in corpus.markets:
        raise UnknownMarket(market_id)
    flagged = set(flagged_accounts)
    start, end = interval
    buy = Decimal(0)
    sell = Decimal(0)
    for tr in corpus.market_trades(market_id):
        if tr.account_id not in flagged or not (start <= tr.ts < end):
            continue
        if tr.side is Side.BUY:
            buy += tr.notional
        else:
            sell += tr.notional
    denom = buy + sell
    if denom == 0:
        return 0.0
    return float((buy - sell) / denom)


@dataclass(frozen=True)
class OlsFit:
    slope: float
    intercept: float
    t_stat: float
    n: int


def ols_slope_t(x: Sequence[float], y: Sequence[float]) -> OlsFit:
    """Simple OLS of y on x with intercept; t-stat of the slope."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    n = len(xa)
    if n < 3:
        raise InsufficientData("need at least 3 observations")
    sxx = float(((xa - xa.mean()) ** 2).sum())
    if sxx == 0.0:
        raise InsufficientData("regressor has zero variance")
    slope = float(((xa - xa.mean()) * (ya - ya.mean())).sum()) / sxx
    intercept = float(ya.mean()) - slope * float(xa.mean())
    resid = ya - (intercept + slope * xa)
    sigma2 = float((resid**2).sum()) / (n - 2)
    se = math.sqrt(sigma2 / sxx) if sigma2 > 0 else 0.0
    if se > 0:
        t = slope / se
    else:
        t = math.copysign(math.inf, slope) if slope != 0 else 0.0
    return OlsFit(slope=slope, intercept=intercept, t_stat=t, n=n)


@dataclass(frozen=True)
class PredictivenessResult:
    slope_price: float
    t_price: float
    slope_outcome: float
    t_outcome: float
    n_periods: int


def pooled_imbalance_samples(
    corpus: Corpus,
    flagged_accounts: Iterable[str],
    period: timedelta,
) -> tuple[list[float], list[float], list[float]]:
    """(imbalance, next-period price change, outcome) per defined market-period.

    Markets are cut into consecutive periods from t_open; a period is defined
    when a flagged account traded in it.  Pooled across markets.
    """
    flagged = set(flagged_accounts)
    xs: list[float] = []
    y_price: list[float] = []
    y_outcome: list[float] = []
    for market_id in sorted(corpus.markets):
        market = corpus.markets[market_id]
        series = corpus.series.get(market_id)
        if series is None or not series.timestamps:
            continue
        t = market.t_open
        while t + period <= market.t_resolve:
            t_next = t + period
            has_flow = any(
                tr.account_id in flagged and t <= tr.ts < t_next
                for tr in corpus.market_trades(market_id)
            )
            if has_flow:
                end_next = min(t_next + period, market.t_resolve)
                try:
                    p_now = series.price_at(t_next)
                    p_next = series.price_at(end_next)
                except TimeBeforeSeries:
                    t = t_next
                    continue
                xs.append(insider_order_imbalance(corpus, market_id, flagged, (t, t_next)))
                y_price.append(p_next - p_now)
                y_outcome.append(float(market.outcome))
            t = t_next
    return xs, y_price, y_outcome


def imbalance_predictiveness(
    corpus: Corpus,
    flagged_accounts: Iterable[str],
    period: timedelta,
    min_periods: int = 10,
) -> PredictivenessResult:
    """Does flagged-account imbalance predict prices and outcomes?

    OLS of (a) next-period price change and (b) final outcome on period
    imbalance over the pooled market-periods.
    """
    xs, y_price, y_outcome = pooled_imbalance_samples(corpus, flagged_accounts, period)
    if len(xs) < min_periods:
        raise InsufficientData(
            f"only {len(xs)} market-periods with defined imbalance (< {min_periods})"
        )
    fit_p = ols_slope_t(xs, y_price)
    fit_o = ols_slope_t(xs, y_outcome)
    return PredictivenessResult(
        slope_price=fit_p.slope,
        t_price=fit_p.t_stat,
        slope_outcome=fit_o.slope,
        t_outcome=fit_o.t_stat,
        n_periods=len(xs),
    )


# -- composite anomaly score ---------------------------------------------------

FEATURE_NAMES = (
    "cross_sectional_size",
    "within_trader_size",
    "profitability",
    "pre_event_timing",
    "directional_concentration",
)


@dataclass(frozen=True)
class CompositeFeatures:
    account_id: str
    market_id: str
    cross_sectional_size: float  # z-score within market
    within_trader_size: float  # z-score within the trader's own markets
    profitability: float  # z-score within market
    pre_event_timing: float  # fraction of notional in the pre-event window
    directional_concentration: float  # |net| / gross in [0, 1]


@dataclass(frozen=True)
class CompositeScore:
    account_id: str
    market_id: str
    score: float
    percentile: float


def _zscores(values: np.ndarray, clip: float = 3.0) -> np.ndarray:
    std = values.std()
    if std == 0.0:
        return np.zeros_like(values)
    return np.clip((values - values.mean()) / std, -clip, clip)


def composite_features(
    corpus: Corpus,
    market_id: str,
    timing_window: timedelta = timedelta(hours=48),
) -> list[CompositeFeatures]:
    """Per-account anomaly features for one market.

    Population is every account with positive notional in the market; size
    and profitability features are winsorized cross-sectional z-scores,
    timing and concentration are fractions in [0, 1].
    """
    if market_id not in corpus.markets:
        raise UnknownMarket(market_id)
    market = corpus.markets[market_id]
    anchor = market.t_event if market.t_event is not None else market.t_resolve

    per_account: dict[str, dict[str, Decimal]] = {}
    for tr in corpus.market_trades(market_id):
        st = per_account.setdefault(
            tr.account_id,
            {"gross": Decimal(0), "net": Decimal(0), "pnl": Decimal(0), "timed": Decimal(0)},
        )
        st["gross"] += tr.notional
        st["net"] += tr.signed_notional
        st["pnl"] += trade_resolution_pnl(tr, market.outcome)
        if anchor - timing_window <= tr.ts <= anchor:
            st["timed"] += tr.notional
    per_account = {a: st for a, st in per_account.items() if st["gross"] > 0}
    if len(per_account) < 2:
        raise InsufficientPopulation(
            f"market {market_id} has {len(per_account)} active account(s), need >= 2"
        )
    account_ids = sorted(per_account)

    # Within-trader baseline: the account's gross notional per market it traded.
    own_notionals: dict[str, dict[str, Decimal]] = {}
    for a in account_ids:
        per_mkt: dict[str, Decimal] = {}
        for tr in corpus.account_trades(a):
            per_mkt[tr.market_id] = per_mkt.get(tr.market_id, Decimal(0)) + tr.notional
        own_notionals[a] = per_mkt

    gross = np.array([float(per_account[a]["gross"]) for a in account_ids])
    pnl = np.array([float(per_account[a]["pnl"]) for a in account_ids])
    cs_z = _zscores(gross)
    prof_z = _zscores(pnl)

    within: list[float] = []
    for a in account_ids:
        own = np.array([float(v) for v in own_notionals[a].values()])
        if len(own) < 2 or own.std() == 0.0:
            within.append(0.0)
        else:
            z = (float(per_account[a]["gross"]) - own.mean()) / own.std()
            within.append(float(np.clip(z, -3.0, 3.0)))

    out = []
    for i, a in enumerate(account_ids):
        st = per_account[a]
        timing = float(st["timed"] / st["gross"])
        conc = float(abs(st["net"]) / st["gross"])
        out.append(
            CompositeFeatures(
                account_id=a,
                market_id=market_id,
                cross_sectional_size=float(cs_z[i]),
                within_trader_size=within[i],
                profitability=float(prof_z[i]),
                pre_event_timing=timing,
                directional_concentration=conc,
            )
        )
    return out


def composite_score(
    corpus: Corpus,
    market_id: str,
    weights: dict[str, float] | None = None,
    timing_window: timedelta = timedelta(hours=48),
) -> list[CompositeScore]:
    """Weighted anomaly score and percentile per account in one market.

    All five features are compared cross-sectionally (the two fraction
    features are z-scored against the market population as well, so the
    weighted mean mixes commensurable columns), then ranked into [0, 1]
    percentiles with ties sharing their average rank.
    """
    if weights is None:
        weights = {name: 1.0 for name in FEATURE_NAMES}
    unknown = set(weights) - set(FEATURE_NAMES)
    if unknown:
        raise ValueError(f"unknown composite feature(s): {sorted(unknown)}")
    w = np.array([weights.get(name, 0.0) for name in FEATURE_NAMES])
    if w.sum() == 0:
        raise ValueError("composite weights sum to zero")

    feats = composite_features(corpus, market_id, timing_window)
    cols = np.column_stack(
        [
            np.array([f.cross_sectional_size for f in feats]),
            np.array([f.within_trader_size for f in feats]),
            np.array([f.profitability for f in feats]),
            _zscores(np.array([f.pre_event_timing for f in feats])),
            _zscores(np.array([f.directional_concentration for f in feats])),
        ]
    )
    scores = cols @ w / w.sum()

    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        avg_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg_rank
        i = j + 1
    percentiles = ranks / len(scores)

    return [
        CompositeScore(
            account_id=f.account_id,
            market_id=market_id,
            score=float(scores[i]),
            percentile=float(percentiles[i]),
        )
        for i, f in enumerate(feats)
    ]
