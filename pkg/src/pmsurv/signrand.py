"""Sign-randomization skill classifier.

The null model holds every trade fixed in event, market, size, price and
timing and flips only the buy/sell direction, one sign per event so all of
an account's trades within an event move together.  Because each trade is
marked to resolution individually, flipping an event's sign negates its PnL
exactly, so a simulated draw is just a signed sum of the per-event PnLs.

Event PnLs are exact decimals; the engine rescales them to integers so that
every comparison against the realized PnL is exact integer arithmetic.
P-values are therefore bit-identical under positive rescaling of all trade
sizes and independent of float summation order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from typing import Iterable, Sequence

import multiprocessing
import numpy as np

from .errors import EmptyHistory, InsufficientData
from .model import (
    Category,
    Corpus,
    EventPnl,
    Money,
    Side,
    event_pnl_table,
    trade_resolution_pnl,
)
from .rng import substream

_INT64_GUARD = 2**62


class SkillCategory(str, Enum):
    SKILLED_WINNER = "SkilledWinner"
    LUCKY_WINNER = "LuckyWinner"
    UNLUCKY_LOSER = "UnluckyLoser"
    UNSKILLED_LOSER = "UnskilledLoser"
    MARKET_MAKER = "MarketMaker"
    NOT_CLASSIFIED = "NotClassified"


@dataclass(frozen=True)
class NullSpec:
    """Parameters of the sign-randomization null."""

    draws: int = 10_000
    master_seed: int = 0
    min_events: int = 10
    exact_max_events: int = 12  # enumerate all 2^n sign vectors up to here
    skilled_p: float = 0.05
    unskilled_p: float = 0.95
    degeneracy_tolerance: Decimal = Decimal("0.01")

    def __post_init__(self):
        if self.draws < 1:
            raise ValueError("draws must be >= 1")
        if self.min_events < 1:
            raise ValueError("min_events must be >= 1")


@dataclass(frozen=True)
class NullSummary:
    mode: str  # "exact" or "montecarlo"
    n_events: int
    draws: int
    realized: Money
    exceed_count: int  # simulated PnL >= realized
    tie_count: int  # simulated PnL == realized
    sim_mean: float
    sim_std: float


@dataclass(frozen=True)
class AccountClassification:
    account_id: str
    n_events: int
    realized_pnl: Money
    p_value: float | None
    category: SkillCategory
    degenerate: bool = False
    filter_category: Category | None = None


@dataclass(frozen=True)
class MarketMakerConfig:
    min_markets: int = 50
    two_sided_fraction: float = 0.6
    max_net_gross_ratio: Decimal = Decimal("0.2")


@dataclass(frozen=True)
class PersistenceResult:
    split_seed: int
    train_categories: dict[str, SkillCategory]
    test_categories: dict[str, SkillCategory]
    retention_rate_skilled: float | None
    retention_rate_lucky: float | None
    n_qualified: int


def _pnls_to_ints(pnls: Sequence[Money]) -> tuple[np.ndarray, int]:
    """Rescale exact decimal PnLs to a common integer grid; returns (ints, digits)."""
    digits = 0
    for p in pnls:
        exp = p.as_tuple().exponent
        if isinstance(exp, int) and exp < 0:
            digits = max(digits, -exp)
    ints = [int(p.scaleb(digits)) for p in pnls]
    if any(abs(v) > _INT64_GUARD // max(len(ints), 1) for v in ints):
        raise OverflowError("event PnL magnitude exceeds the integer engine range")
    return np.asarray(ints, dtype=np.int64), digits


def _flip_matrix(n: int) -> np.ndarray:
    """All 2^n flip-indicator vectors (1 = event sign flipped)."""
    masks = np.arange(2**n, dtype=np.int64)
    return (masks[:, None] >> np.arange(n, dtype=np.int64)) & 1


def null_p_value(
    event_pnls: Sequence[Money],
    spec: NullSpec,
    key: str = "",
    mode: str = "auto",
) -> tuple[float, NullSummary]:
    """Upper one-sided p-value of the realized PnL under the sign-flip null.

    A simulated draw flips each event's PnL independently with probability
    one half; ``sim >= realized`` is equivalent to the flipped subset summing
    to <= 0, which is what gets counted.  ``mode`` is "exact" (full
    enumeration of 2^n sign vectors), "montecarlo" (``spec.draws`` draws from
    the substream keyed by ``key``, with the plus-one correction), or "auto"
    (exact up to ``spec.exact_max_events`` events).
    """
    if not event_pnls:
        raise EmptyHistory("no event PnLs")
    if mode not in ("auto", "exact", "montecarlo"):
        raise ValueError(f"unknown mode {mode!r}")

    pnl_int, digits = _pnls_to_ints(event_pnls)
    n = len(pnl_int)
    realized = sum(event_pnls, Decimal(0))
    realized_int = int(pnl_int.sum())

    use_exact = mode == "exact" or (mode == "auto" and n <= spec.exact_max_events)
    if use_exact:
        flips = _flip_matrix(n)
        draws = flips.shape[0]
    else:
        rng = substream(spec.master_seed, key)
        flips = rng.integers(0, 2, size=(spec.draws, n), dtype=np.int64)
        draws = spec.draws

    flipped_sums = flips @ pnl_int  # sim = realized - 2 * flipped_sum
    exceed = int(np.count_nonzero(flipped_sums <= 0))
    ties = int(np.count_nonzero(flipped_sums == 0))

    if use_exact:
        p = exceed / draws
    else:
        p = (1 + exceed) / (draws + 1)

    sims = realized_int - 2 * flipped_sums
    scale = 10.0**-digits
    summary = NullSummary(
        mode="exact" if use_exact else "montecarlo",
        n_events=n,
        draws=draws,
        realized=realized,
        exceed_count=exceed,
        tie_count=ties,
        sim_mean=float(sims.mean()) * scale,
        sim_std=float(sims.std()) * scale,
    )
    return p, summary


def detect_market_maker(
    corpus: Corpus, account_id: str, config: MarketMakerConfig = MarketMakerConfig()
) -> bool:
    """Liquidity-provision screen: broad, two-sided, near-flat book.

    True iff the account traded at least ``min_markets`` markets, shows both
    buy and sell activity in at least ``two_sided_fraction`` of them, and its
    platform-wide |net signed notional| / gross notional is at most
    ``max_net_gross_ratio``.
    """
    trades = corpus.account_trades(account_id)
    if not trades:
        return False
    sides_by_market: dict[str, set[Side]] = {}
    net = Decimal(0)
    gross = Decimal(0)
    for tr in trades:
        sides_by_market.setdefault(tr.market_id, set()).add(tr.side)
        net += tr.signed_notional
        gross += tr.notional
    n_markets = len(sides_by_market)
    if n_markets < config.min_markets:
        return False
    two_sided = sum(1 for s in sides_by_market.values() if len(s) == 2)
    if two_sided < config.two_sided_fraction * n_markets:
        return False
    if gross == 0:
        return False
    return abs(net) / gross <= config.max_net_gross_ratio


def _filter_event_pnls(
    corpus: Corpus, account_id: str, category: Category | None
) -> list[EventPnl]:
    if category is None:
        return event_pnl_table(corpus, account_id)
    rows: dict[str, list[Decimal]] = {}
    for tr in corpus.account_trades(account_id):
        market = corpus.markets[tr.market_id]
        if market.category is not category:
            continue
        acc = rows.setdefault(market.event_id, [Decimal(0), Decimal(0)])
        acc[0] += trade_resolution_pnl(tr, market.outcome)
        acc[1] += tr.notional
    return [
        EventPnl(event_id=eid, pnl=v[0], gross_volume=v[1])
        for eid, v in sorted(rows.items())
    ]


def classify_from_event_pnls(
    account_id: str,
    event_pnls: Sequence[Money],
    spec: NullSpec,
    key: str | None = None,
    filter_category: Category | None = None,
) -> AccountClassification:
    """Classify from a prepared per-event PnL list (market-maker check skipped)."""
    n = len(event_pnls)
    realized = sum(event_pnls, Decimal(0))
    if n < spec.min_events:
        return AccountClassification(
            account_id, n, realized, None, SkillCategory.NOT_CLASSIFIED,
            filter_category=filter_category,
        )
    if all(abs(p) < spec.degeneracy_tolerance for p in event_pnls):
        return AccountClassification(
            account_id, n, realized, None, SkillCategory.NOT_CLASSIFIED,
            degenerate=True, filter_category=filter_category,
        )
    p, _ = null_p_value(event_pnls, spec, key=key if key is not None else account_id)
    if p <= spec.skilled_p:
        cat = SkillCategory.SKILLED_WINNER
    elif p >= spec.unskilled_p:
        cat = SkillCategory.UNSKILLED_LOSER
    elif realized > 0:
        cat = SkillCategory.LUCKY_WINNER
    else:
        cat = SkillCategory.UNLUCKY_LOSER
    return AccountClassification(
        account_id, n, realized, p, cat, filter_category=filter_category
    )


def classify_account(
    corpus: Corpus,
    account_id: str,
    spec: NullSpec,
    mm_config: MarketMakerConfig = MarketMakerConfig(),
    category: Category | None = None,
) -> AccountClassification:
    """Classify one account; optional category filter restricts the event set.

    Market makers are identified first by liquidity-provision behaviour.
    Otherwise the account needs ``spec.min_events`` events (within the
    category, when filtered) and a non-degenerate PnL profile before the
    sign-randomization p-value places it in one of the four skill/luck cells.
    """
    rows = _filter_event_pnls(corpus, account_id, category)
    pnls = [r.pnl for r in rows]
    realized = sum(pnls, Decimal(0))
    if detect_market_maker(corpus, account_id, mm_config):
        return AccountClassification(
            account_id, len(rows), realized, None, SkillCategory.MARKET_MAKER,
            filter_category=category,
        )
    key = account_id if category is None else f"{account_id}|cat={category.value}"
    return classify_from_event_pnls(
        account_id, pnls, spec, key=key, filter_category=category
    )


# -- batch / parallel --------------------------------------------------------

_WORKER_CORPUS: Corpus | None = None
_WORKER_ARGS: tuple | None = None


def _init_classify_worker(corpus: Corpus, spec: NullSpec,
                          mm_config: MarketMakerConfig, category: Category | None):
    global _WORKER_CORPUS, _WORKER_ARGS
    _WORKER_CORPUS = corpus
    _WORKER_ARGS = (spec, mm_config, category)


def _classify_chunk(account_ids: list[str]) -> list[AccountClassification]:
    spec, mm_config, category = _WORKER_ARGS
    return [
        classify_account(_WORKER_CORPUS, a, spec, mm_config, category)
        for a in account_ids
    ]


def classify_accounts(
    corpus: Corpus,
    spec: NullSpec,
    mm_config: MarketMakerConfig = MarketMakerConfig(),
    category: Category | None = None,
    account_ids: Iterable[str] | None = None,
    workers: int = 1,
) -> list[AccountClassification]:
    """Classify many accounts, optionally across a process pool.

    Results are keyed by per-account substreams and merged in account-id
    order, so the output is identical for any worker count.
    """
    ids = sorted(account_ids) if account_ids is not None else sorted(corpus.accounts)
    if workers <= 1 or len(ids) < 2:
        return [classify_account(corpus, a, spec, mm_config, category) for a in ids]

    chunks = [ids[i::workers] for i in range(workers)]
    chunks = [c for c in chunks if c]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(
        max_workers=len(chunks),
        mp_context=ctx,
        initializer=_init_classify_worker,
        initargs=(corpus, spec, mm_config, category),
    ) as pool:
        parts = list(pool.map(_classify_chunk, chunks))
    merged = [c for part in parts for c in part]
    merged.sort(key=lambda c: c.account_id)
    return merged


# -- persistence -------------------------------------------------------------

def persistence_retention(
    corpus: Corpus,
    spec: NullSpec,
    split_seed: int,
    mm_config: MarketMakerConfig = MarketMakerConfig(),
) -> PersistenceResult:
    """Out-of-sample retention of the skill classification.

    Events are partitioned 50/50 uniformly at random by ``split_seed``; each
    account is classified separately on each half.  Retention rates are
    conditional on the train-half label, over accounts classified (not
    NotClassified) in both halves.
    """
    event_ids = sorted(corpus.events)
    rng = substream(split_seed, "persistence-split")
    perm = rng.permutation(len(event_ids))
    half = len(event_ids) // 2
    train_events = {event_ids[i] for i in perm[:half]}

    train_cat: dict[str, SkillCategory] = {}
    test_cat: dict[str, SkillCategory] = {}
    qualified: list[str] = []
    for account_id in sorted(corpus.accounts):
        if detect_market_maker(corpus, account_id, mm_config):
            continue
        rows = event_pnl_table(corpus, account_id)
        train_pnls = [r.pnl for r in rows if r.event_id in train_events]
        test_pnls = [r.pnl for r in rows if r.event_id not in train_events]
        tr = classify_from_event_pnls(
            account_id, train_pnls, spec, key=f"{account_id}|train"
        )
        te = classify_from_event_pnls(
            account_id, test_pnls, spec, key=f"{account_id}|test"
        )
        train_cat[account_id] = tr.category
        test_cat[account_id] = te.category
        if (
            tr.category is not SkillCategory.NOT_CLASSIFIED
            and te.category is not SkillCategory.NOT_CLASSIFIED
        ):
            qualified.append(account_id)

    if not qualified:
        raise InsufficientData(
            "no account meets the minimum event count in both halves"
        )

    def _retention(label: SkillCategory) -> float | None:
        base = [a for a in qualified if train_cat[a] is label]
        if not base:
            return None
        kept = sum(1 for a in base if test_cat[a] is label)
        return kept / len(base)

    return PersistenceResult(
        split_seed=split_seed,
        train_categories=train_cat,
        test_categories=test_cat,
        retention_rate_skilled=_retention(SkillCategory.SKILLED_WINNER),
        retention_rate_lucky=_retention(SkillCategory.LUCKY_WINNER),
        n_qualified=len(qualified),
    )
