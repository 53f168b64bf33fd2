"""Sign-randomization engine: exact oracle, classification, persistence."""

import math
from decimal import Decimal

import numpy as np
import pytest

from pmsurv.errors import EmptyHistory, InsufficientData, UnknownAccount
from pmsurv.model import Category, Side, utc
from pmsurv.signrand import (
    MarketMakerConfig,
    NullSpec,
    SkillCategory,
    classify_account,
    classify_accounts,
    classify_from_event_pnls,
    detect_market_maker,
    null_p_value,
    persistence_retention,
)

from conftest import CorpusBuilder, make_event_series

SPEC = NullSpec(draws=10_000, master_seed=42, min_events=10)


def D(x) -> Decimal:
    return Decimal(x)


class TestNullPValueExact:
    def test_single_positive_event(self):
        p, summary = null_p_value([D("100")], SPEC)
        assert p == 0.5
        assert summary.mode == "exact"
        assert summary.draws == 2

    def test_ten_equal_wins(self):
        p, _ = null_p_value([D("10")] * 10, SPEC)
        assert p == pytest.approx(1 / 1024)

    def test_offsetting_pair(self):
        p, summary = null_p_value([D("10"), D("-10")], SPEC)
        assert p == 0.75  # sims {0, +20, -20, 0}; three are >= realized 0
        assert summary.exceed_count == 3
        assert summary.tie_count == 2

    def test_empty_history(self):
        with pytest.raises(EmptyHistory):
            null_p_value([], SPEC)

    def test_complement_identity_with_tie_mass(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(2, 11))
            pnls = [D(f"{v:.2f}") for v in rng.normal(3, 40, size=n)]
            p_fwd, s_fwd = null_p_value(pnls, SPEC, mode="exact")
            p_rev, s_rev = null_p_value([-v for v in pnls], SPEC, mode="exact")
            tie_mass = s_fwd.tie_count / s_fwd.draws
            assert p_fwd + p_rev == pytest.approx(1 + tie_mass)

    def test_null_distribution_symmetric_about_zero(self):
        rng = np.random.default_rng(11)
        pnls = [D(f"{v:.2f}") for v in rng.normal(50, 200, size=18)]
        _, summary = null_p_value(pnls, SPEC, key="sym-check")
        assert summary.mode == "montecarlo"
        assert abs(summary.sim_mean) <= 3 * summary.sim_std / math.sqrt(summary.draws)


class TestMonteCarlo:
    def test_plus_one_correction_floor(self):
        # All-positive profile: only the all-kept draw ties; p is near but above 0.
        p, summary = null_p_value([D("10")] * 20, SPEC, key="floor")
        assert 0 < p <= (1 + summary.exceed_count) / (SPEC.draws + 1) + 1e-12
        assert p >= 1 / (SPEC.draws + 1)

    def test_oracle_agreement_small_histories(self):
        rng = np.random.default_rng(321)
        close = 0
        cases = 40
        for i in range(cases):
            n = int(rng.integers(3, 13))
            pnls = [D(f"{v:.2f}") for v in rng.normal(0, 100, size=n)]
            p_exact, _ = null_p_value(pnls, SPEC, mode="exact")
            p_mc, _ = null_p_value(pnls, SPEC, key=f"case{i}", mode="montecarlo")
            if abs(p_mc - p_exact) <= 0.02:
                close += 1
        assert close >= 0.95 * cases

    def test_deterministic_given_seed_and_key(self):
        pnls = [D("25"), D("-40"), D("100"), D("-3"), D("8")] * 4
        p1, _ = null_p_value(pnls, SPEC, key="acct-7", mode="montecarlo")
        p2, _ = null_p_value(pnls, SPEC, key="acct-7", mode="montecarlo")
        assert p1 == p2
        p3, _ = null_p_value(pnls, SPEC, key="acct-8", mode="montecarlo")
        assert p3 != p1  # different substream

    def test_scale_invariance_bit_identical(self):
        rng = np.random.default_rng(9)
        pnls = [D(f"{v:.2f}") for v in rng.normal(10, 120, size=15)]
        scaled = [v * 100 for v in pnls]
        p1, _ = null_p_value(pnls, SPEC, key="scaled", mode="montecarlo")
        p2, _ = null_p_value(scaled, SPEC, key="scaled", mode="montecarlo")
        assert p1 == p2
        e1, _ = null_p_value(pnls, SPEC, mode="exact")
        e2, _ = null_p_value(scaled, SPEC, mode="exact")
        assert e1 == e2


class TestClassification:
    def test_below_min_events_not_classified(self, builder):
        make_event_series(builder, "a1", ["10"] * 9)
        cls = classify_account(builder.build(), "a1", SPEC)
        assert cls.category is SkillCategory.NOT_CLASSIFIED
        assert cls.n_events == 9

    def test_ten_wins_is_skilled(self, builder):
        make_event_series(builder, "a1", ["10"] * 10)
        cls = classify_account(builder.build(), "a1", SPEC)
        assert cls.category is SkillCategory.SKILLED_WINNER
        assert cls.p_value == pytest.approx(1 / 1024)

    def test_negative_mid_p_is_unlucky(self):
        pnls = [D("10"), D("-11")] * 5  # realized -5, p well inside (0.05, 0.95)
        cls = classify_from_event_pnls("a1", pnls, SPEC)
        assert cls.realized_pnl == D("-5")
        assert 0.05 < cls.p_value < 0.95
        assert cls.category is SkillCategory.UNLUCKY_LOSER

    def test_positive_mid_p_is_lucky(self):
        pnls = [D("11"), D("-10")] * 5
        cls = classify_from_event_pnls("a1", pnls, SPEC)
        assert cls.realized_pnl == D("5")
        assert cls.category is SkillCategory.LUCKY_WINNER

    def test_all_losses_is_unskilled(self):
        cls = classify_from_event_pnls("a1", [D("-10")] * 10, SPEC)
        assert cls.p_value >= 0.95
        assert cls.category is SkillCategory.UNSKILLED_LOSER

    def test_degenerate_profile(self):
        cls = classify_from_event_pnls("a1", [D("0.001")] * 12, SPEC)
        assert cls.category is SkillCategory.NOT_CLASSIFIED
        assert cls.degenerate

    def test_unknown_account(self, builder):
        builder.market("m1")
        with pytest.raises(UnknownAccount):
            classify_account(builder.build(), "ghost", SPEC)

    def test_category_filter_controls_event_count(self, builder):
        t0 = utc(2026, 1, 1)
        for i in range(10):
            builder.market(f"pol{i}", category=Category.POLITICS,
                           t_open=t0, outcome=1)
            builder.trade("a1", f"pol{i}", Side.BUY, "20", "0.5", utc(2026, 1, 2))
        for i in range(3):
            builder.market(f"spt{i}", category=Category.SPORTS, t_open=t0, outcome=1)
            builder.trade("a1", f"spt{i}", Side.BUY, "20", "0.5", utc(2026, 1, 2))
        corpus = builder.build()
        pol = classify_account(corpus, "a1", SPEC, category=Category.POLITICS)
        spt = classify_account(corpus, "a1", SPEC, category=Category.SPORTS)
        assert pol.category is SkillCategory.SKILLED_WINNER
        assert pol.n_events == 10
        assert spt.category is SkillCategory.NOT_CLASSIFIED
        assert spt.n_events == 3


class TestMarketMaker:
    def _maker_corpus(self, n_markets=100, two_sided=90):
        b = CorpusBuilder()
        for i in range(n_markets):
            b.market(f"m{i:03d}", outcome=1)
        ts = utc(2026, 1, 2)
        for i in range(n_markets):
            b.trade("mm", f"m{i:03d}", Side.BUY, "10", "0.5", ts)
            if i < two_sided:
                b.trade("mm", f"m{i:03d}", Side.SELL, "10", "0.5", ts)
        return b.build()

    def test_synthetic_maker_detected(self):
        corpus = self._maker_corpus()
        assert detect_market_maker(corpus, "mm")
        cls = classify_account(corpus, "mm", SPEC)
        assert cls.category is SkillCategory.MARKET_MAKER

    def test_few_markets_not_maker(self, builder):
        for i in range(3):
            builder.market(f"m{i}")
            builder.trade("a1", f"m{i}", Side.BUY, "10", "0.5", utc(2026, 1, 2))
            builder.trade("a1", f"m{i}", Side.SELL, "10", "0.5", utc(2026, 1, 2))
        assert not detect_market_maker(builder.build(), "a1")

    def test_one_shot_directional_not_maker(self, builder):
        builder.market("m1")
        builder.trade("a1", "m1", Side.BUY, "5000", "0.5", utc(2026, 1, 2))
        assert not detect_market_maker(builder.build(), "a1")

    def test_one_sided_flow_not_maker(self):
        corpus = self._maker_corpus(n_markets=100, two_sided=30)
        assert not detect_market_maker(corpus, "mm")

    def test_thresholds_configurable(self):
        corpus = self._maker_corpus(n_markets=40)
        assert not detect_market_maker(corpus, "mm")
        assert detect_market_maker(
            corpus, "mm", MarketMakerConfig(min_markets=30)
        )


class TestBatchDeterminism:
    def test_worker_counts_agree(self, builder):
        rng = np.random.default_rng(17)
        for a in range(6):
            pnls = [f"{v:.2f}" for v in rng.normal(5, 60, size=14)]
            make_event_series(builder, f"acct{a}", pnls)
        corpus = builder.build()
        serial = classify_accounts(corpus, SPEC, workers=1)
        parallel = classify_accounts(corpus, SPEC, workers=4)
        assert serial == parallel


class TestPersistence:
    def test_insufficient_data(self, builder):
        make_event_series(builder, "a1", ["10"] * 12)
        with pytest.raises(InsufficientData):
            persistence_retention(builder.build(), SPEC, split_seed=1)

    def test_strong_edge_retains(self, builder):
        rng = np.random.default_rng(23)
        for a in range(5):
            pnls = [f"{abs(v):.2f}" for v in rng.normal(50, 10, size=40)]
            make_event_series(builder, f"edge{a}", pnls)
        result = persistence_retention(builder.build(), SPEC, split_seed=3)
        assert result.retention_rate_skilled == 1.0
        assert result.n_qualified == 5
