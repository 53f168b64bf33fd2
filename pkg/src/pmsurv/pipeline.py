"""Three-stage surveillance pipeline.

Stage 1 scores every account from category-conditioned skill classification,
lifecycle flags, composite percentile and context features.  Stage 2 scores
the leakage of each market where a flagged account holds a significant share
of the winning side, gated by the scope conditions.  Stage 3 is the
truncated, sorted review queue exported for humans.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import timedelta
from decimal import Decimal
from typing import Iterable

import multiprocessing

from .errors import InsufficientPopulation, MissingEventTime, SeriesGap
from .ils import (
    DEFAULT_ANCHOR_GRID_MINUTES,
    DEFAULT_EPSILON,
    DEFAULT_ETA,
    DEFAULT_SHORT_WINDOW,
    IlsResult,
    ils_dl,
)
from .model import Category, Corpus, FundingTag, Side
from .screens import LifecycleConfig, composite_score, lifecycle_flag
from .signrand import (
    MarketMakerConfig,
    NullSpec,
    SkillCategory,
    classify_account,
)

DEFAULT_CATEGORY_WEIGHTS: dict[Category, float] = {
    Category.POLITICS: 3.0,
    Category.FINANCE: 1.5,
    Category.CRYPTO: 1.0,
    Category.SPORTS: 0.5,
    Category.OTHER: 1.0,
}


@dataclass(frozen=True)
class PipelineConfig:
    # Stage-1 aggregation weights; invented defaults, all auditable via config.
    # The default threshold sits between the strongest skill-only profile
    # (category weight + composite) and a single lifecycle flag, so one-shot
    # insider signatures always triage forward and category skill alone never
    # does without corroboration.
    category_weights: dict[Category, float] = field(
        default_factory=lambda: dict(DEFAULT_CATEGORY_WEIGHTS)
    )
    lifecycle_weight: float = 5.0
    composite_weight: float = 1.0
    context_weight: float = 0.5
    young_wallet_days: float = 14.0
    stage1_threshold: float = 4.5
    # Stage-2 gates.
    holding_fraction: float = 0.05
    ils_threshold: float = 0.25
    short_window_threshold: float = 0.10
    short_window: timedelta = DEFAULT_SHORT_WINDOW
    ils_epsilon: float = DEFAULT_EPSILON
    anchor_grid_minutes: tuple[int, ...] = DEFAULT_ANCHOR_GRID_MINUTES
    anchor_eta: float = DEFAULT_ETA
    # Stage-3 export.
    queue_cap: int = 100
    # Component configs.
    null_spec: NullSpec = NullSpec()
    lifecycle: LifecycleConfig = LifecycleConfig()
    mm_config: MarketMakerConfig = MarketMakerConfig()
    composite_weights: dict[str, float] | None = None
    composite_timing_window: timedelta = timedelta(hours=48)

    def __post_init__(self):
        if any(w < 0 for w in self.category_weights.values()):
            raise ValueError("category weights must be >= 0")
        if not (0.0 <= self.holding_fraction <= 1.0):
            raise ValueError("holding_fraction must be in [0, 1]")
        if self.queue_cap < 0:
            raise ValueError("queue_cap must be >= 0")


@dataclass(frozen=True)
class RiskScore:
    account_id: str
    category_skill: dict[str, bool]
    lifecycle_flag_count: int
    composite_percentile: float
    wallet_age_days: float | None
    funding_tag: str | None
    total: float
    flagged: bool


@dataclass(frozen=True)
class QueueEntry:
    market_id: str
    ils: IlsResult
    flagged_accounts: tuple[str, ...]  # holders at or above the threshold
    holdings: tuple[float, ...]
    max_account_risk: float


@dataclass(frozen=True)
class SkippedMarket:
    market_id: str
    reason: str
    detail: str = ""


@dataclass(frozen=True)
class PipelineReport:
    config_echo: dict
    corpus_digest: str
    n_accounts: int
    n_markets: int
    stage1_flagged: tuple[RiskScore, ...]
    stage2_queue: tuple[QueueEntry, ...]
    stage2_skipped: tuple[SkippedMarket, ...]
    stage3_queue: tuple[QueueEntry, ...]


# -- stage 1 -------------------------------------------------------------------

def _risk_score_for(
    corpus: Corpus,
    account_id: str,
    config: PipelineConfig,
    composite_max: dict[str, float],
) -> RiskScore:
    category_skill: dict[str, bool] = {}
    for category in Category:
        cls = classify_account(
            corpus, account_id, config.null_spec,
            mm_config=config.mm_config, category=category,
        )
        category_skill[category.value] = cls.category is SkillCategory.SKILLED_WINNER

    flag_count = 0
    event_ids = sorted(
        {corpus.markets[t.market_id].event_id for t in corpus.account_trades(account_id)}
    )
    for event_id in event_ids:
        if lifecycle_flag(corpus, account_id, event_id, config.lifecycle).flagged:
            flag_count += 1

    account = corpus.accounts[account_id]
    age_days: float | None = None
    created = account.effective_created_at
    trades = corpus.account_trades(account_id)
    if created is not None and trades:
        age_days = (trades[-1].ts - created).total_seconds() / 86400.0

    percentile = composite_max.get(account_id, 0.0)

    total = 0.0
    for category in Category:
        if category_skill[category.value]:
            total += config.category_weights.get(category, 0.0)
    total += config.lifecycle_weight * flag_count
    total += config.composite_weight * percentile
    if age_days is not None and age_days < config.young_wallet_days:
        total += config.context_weight
    if account.funding_tag is FundingTag.MIXER:
        total += config.context_weight

    return RiskScore(
        account_id=account_id,
        category_skill=category_skill,
        lifecycle_flag_count=flag_count,
        composite_percentile=percentile,
        wallet_age_days=age_days,
        funding_tag=account.funding_tag.value if account.funding_tag else None,
        total=total,
        flagged=total >= config.stage1_threshold,
    )


def _composite_percentile_max(corpus: Corpus, config: PipelineConfig) -> dict[str, float]:
    """Max composite percentile per account over the markets it traded."""
    best: dict[str, float] = {}
    for market_id in sorted(corpus.markets):
        try:
            scores = composite_score(
                corpus, market_id,
                weights=config.composite_weights,
                timing_window=config.composite_timing_window,
            )
        except InsufficientPopulation:
            continue
        for s in scores:
            if s.percentile > best.get(s.account_id, 0.0):
                best[s.account_id] = s.percentile
    return best


_S1_CTX: tuple | None = None


def _init_stage1_worker(corpus, config, composite_max):
    global _S1_CTX
    _S1_CTX = (corpus, config, composite_max)


def _stage1_chunk(account_ids: list[str]) -> list[RiskScore]:
    corpus, config, composite_max = _S1_CTX
    return [_risk_score_for(corpus, a, config, composite_max) for a in account_ids]


def stage1_risk_scores(
    corpus: Corpus, config: PipelineConfig, workers: int = 1
) -> list[RiskScore]:
    """Mechanism-aware per-account risk scores, sorted by account id."""
    composite_max = _composite_percentile_max(corpus, config)
    ids = sorted(corpus.accounts)
    if workers <= 1 or len(ids) < 2:
        return [_risk_score_for(corpus, a, config, composite_max) for a in ids]
    chunks = [ids[i::workers] for i in range(workers)]
    chunks = [c for c in chunks if c]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(
        max_workers=len(chunks),
        mp_context=ctx,
        initializer=_init_stage1_worker,
        initargs=(corpus, config, composite_max),
    ) as pool:
        parts = list(pool.map(_stage1_chunk, chunks))
    merged = [r for part in parts for r in part]
    merged.sort(key=lambda r: r.account_id)
    return merged


# -- stage 2 -------------------------------------------------------------------

def _aligned_notional(corpus: Corpus, market_id: str) -> dict[str, Decimal]:
    """Per-account notional on the resolved-outcome side of one market."""
    market = corpus.markets[market_id]
    winning_side = Side.BUY if market.outcome == 1 else Side.SELL
    holdings: dict[str, Decimal] = {}
    for tr in corpus.market_trades(market_id):
        if tr.side is winning_side:
            holdings[tr.account_id] = holdings.get(tr.account_id, Decimal(0)) + tr.notional
    return holdings


def _score_market(
    corpus: Corpus,
    market_id: str,
    flagged_risk: dict[str, float],
    config: PipelineConfig,
) -> QueueEntry | SkippedMarket:
    holdings = _aligned_notional(corpus, market_id)
    total = sum(holdings.values(), Decimal(0))
    if total == 0:
        return SkippedMarket(market_id, "no_long_side_notional")
    threshold = Decimal(str(config.holding_fraction))
    holders = sorted(
        a for a, v in holdings.items()
        if a in flagged_risk and v / total >= threshold
    )
    if not holders:
        return SkippedMarket(market_id, "below_holding_threshold")

    market = corpus.markets[market_id]
    series = corpus.series.get(market_id)
    if series is None or not series.timestamps:
        return SkippedMarket(market_id, "no_price_series")
    try:
        result = ils_dl(
            series, market,
            epsilon=config.ils_epsilon,
            anchor_grid_minutes=config.anchor_grid_minutes,
            eta=config.anchor_eta,
            short_window=config.short_window,
        )
    except MissingEventTime:
        return SkippedMarket(market_id, "missing_t_event")
    except SeriesGap as exc:
        return SkippedMarket(market_id, "series_gap", str(exc))

    if not result.admitted:
        return SkippedMarket(market_id, "gate_rejected", _gate_detail(result))
    if not (result.ils_dl > config.ils_threshold):
        return SkippedMarket(market_id, "below_ils_threshold", f"ils_dl={result.ils_dl:.4f}")
    if not (result.short_window_value > config.short_window_threshold):
        return SkippedMarket(
            market_id, "below_short_window_threshold",
            f"short_window={result.short_window_value:.4f}",
        )
    return QueueEntry(
        market_id=market_id,
        ils=result,
        flagged_accounts=tuple(holders),
        holdings=tuple(float(holdings[a] / total) for a in holders),
        max_account_risk=max(flagged_risk[a] for a in holders),
    )


def _gate_detail(result: IlsResult) -> str:
    g = result.gate
    parts = []
    if not g.edge_effect_ok:
        parts.append("edge_effect")
    if not g.nontrivial_move_ok:
        parts.append("trivial_move")
    if not g.anchor_stable_ok:
        parts.append("anchor_unstable")
    return ",".join(parts)


_S2_CTX: tuple | None = None


def _init_stage2_worker(corpus, flagged_risk, config):
    global _S2_CTX
    _S2_CTX = (corpus, flagged_risk, config)


def _stage2_chunk(market_ids: list[str]):
    corpus, flagged_risk, config = _S2_CTX
    return [_score_market(corpus, m, flagged_risk, config) for m in market_ids]


def stage2_market_queue(
    corpus: Corpus,
    flagged: Iterable[RiskScore],
    config: PipelineConfig,
    workers: int = 1,
) -> tuple[list[QueueEntry], list[SkippedMarket]]:
    """Score every market where a flagged account traded; queue the admitted.

    A market enters the queue iff some flagged account holds at least the
    configured fraction of outcome-aligned notional, the scope gate admits,
    and both leakage thresholds are jointly exceeded.  Everything else that
    was considered is recorded with a machine-readable skip reason.
    """
    flagged_risk = {r.account_id: r.total for r in flagged if r.flagged}
    candidates = sorted(
        {
            tr.market_id
            for account_id in flagged_risk
            for tr in corpus.account_trades(account_id)
        }
    )
    if workers <= 1 or len(candidates) < 2:
        outcomes = [_score_market(corpus, m, flagged_risk, config) for m in candidates]
    else:
        chunks = [candidates[i::workers] for i in range(workers)]
        chunks = [c for c in chunks if c]
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(
            max_workers=len(chunks),
            mp_context=ctx,
            initializer=_init_stage2_worker,
            initargs=(corpus, flagged_risk, config),
        ) as pool:
            parts = list(pool.map(_stage2_chunk, chunks))
        outcomes = [o for part in parts for o in part]
        outcomes.sort(key=lambda o: o.market_id)

    queue = [o for o in outcomes if isinstance(o, QueueEntry)]
    skipped = [o for o in outcomes if isinstance(o, SkippedMarket)]
    return queue, skipped


# -- stage 3 and the full run ---------------------------------------------------

def stage3_review_queue(queue: list[QueueEntry], config: PipelineConfig) -> list[QueueEntry]:
    """Sort by leakage then responsible-account risk, truncate at the cap."""
    ordered = sorted(
        queue,
        key=lambda e: (-e.ils.ils_dl, -e.max_account_risk, e.market_id),
    )
    return ordered[: config.queue_cap]


def run_pipeline(
    corpus: Corpus, config: PipelineConfig, workers: int = 1
) -> PipelineReport:
    """Execute stages 1-3 and assemble a deterministic report."""
    from .corpus_io import corpus_digest
    from .runconfig import config_echo

    scores = stage1_risk_scores(corpus, config, workers=workers)
    flagged = [r for r in scores if r.flagged]
    queue, skipped = stage2_market_queue(corpus, flagged, config, workers=workers)
    stage3 = stage3_review_queue(queue, config)
    return PipelineReport(
        config_echo=config_echo(config),
        corpus_digest=corpus_digest(corpus),
        n_accounts=len(corpus.accounts),
        n_markets=len(corpus.markets),
        stage1_flagged=tuple(flagged),
        stage2_queue=tuple(queue),
        stage2_skipped=tuple(skipped),
        stage3_queue=tuple(stage3),
    )
