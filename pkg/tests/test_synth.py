"""World generator: determinism, labels, hazard round trip, detection scoring."""

import pytest

from pmsurv.corpus_io import corpus_digest
from pmsurv.errors import InvalidConfig, UnknownId
from pmsurv.ils import fit_hazard, ils_dl
from pmsurv.model import validate_corpus
from pmsurv.signrand import NullSpec, SkillCategory, classify_accounts
from pmsurv.synth import (
    LABEL_INSIDER,
    WorldConfig,
    evaluate_detection,
    generate_world,
)


def small_config(**overrides):
    base = dict(
        n_noise=15, n_skilled=3, n_insider=2, n_sybil=3, n_market_maker=1,
        markets_per_category=8, master_seed=11,
    )
    base.update(overrides)
    return WorldConfig(**base)


class TestGeneration:
    def test_empty_world(self):
        corpus, truth = generate_world(
            WorldConfig(n_noise=0, n_skilled=0, n_insider=0, n_sybil=0,
                        n_market_maker=0, markets_per_category=0)
        )
        assert not corpus.markets and not corpus.trades and not corpus.accounts
        assert not truth.account_labels

    def test_deterministic_digest(self):
        c1, _ = generate_world(small_config())
        c2, _ = generate_world(small_config())
        assert corpus_digest(c1) == corpus_digest(c2)
        c3, _ = generate_world(small_config(master_seed=12))
        assert corpus_digest(c3) != corpus_digest(c1)

    def test_every_account_labeled_once(self):
        corpus, truth = generate_world(small_config())
        assert set(truth.account_labels) == set(corpus.accounts)

    def test_corpus_validates(self):
        corpus, _ = generate_world(small_config(insider_coupling=True))
        report = validate_corpus(corpus)
        assert report.ok, report.fatal

    def test_invalid_config(self):
        with pytest.raises(InvalidConfig):
            WorldConfig(skill_edge=0.4)
        with pytest.raises(InvalidConfig):
            WorldConfig(n_noise=-1)
        with pytest.raises(InvalidConfig):
            WorldConfig(lead_hazard_per_day=0.0)

    def test_coupled_insider_market_leaks(self):
        corpus, truth = generate_world(small_config(insider_coupling=True))
        moved = [m for m, v in truth.insider_moved.items() if v]
        assert moved
        for market_id in moved:
            result = ils_dl(corpus.series[market_id], corpus.markets[market_id])
            assert result.admitted
            assert result.ils_dl > 0

    def test_uncoupled_insiders_not_marked_moved(self):
        _, truth = generate_world(small_config(insider_coupling=False))
        assert not any(truth.insider_moved.values())
        assert LABEL_INSIDER in set(truth.account_labels.values())


class TestNullCalibrationFeed:
    def test_noise_world_skilled_rate_near_nominal(self):
        corpus, truth = generate_world(
            WorldConfig(n_noise=2000, n_skilled=0, n_insider=0, n_sybil=0,
                        n_market_maker=0, markets_per_category=40,
                        noise_events_min=12, noise_events_max=20, master_seed=606)
        )
        spec = NullSpec(draws=10_000, master_seed=7, min_events=10)
        classes = classify_accounts(corpus, spec)
        assert all(c.category is not SkillCategory.NOT_CLASSIFIED for c in classes)
        rate = sum(
            1 for c in classes if c.category is SkillCategory.SKILLED_WINNER
        ) / len(classes)
        assert 0.035 <= rate <= 0.065


class TestHazardRoundTrip:
    def test_generator_estimator_agreement(self):
        corpus, _ = generate_world(
            WorldConfig(n_noise=0, n_skilled=0, n_insider=0, n_sybil=0,
                        n_market_maker=0, markets_per_category=200, master_seed=21)
        )
        taus = [m.lead_time_days for m in corpus.markets.values()
                if m.lead_time_days and m.lead_time_days > 0]
        fit = fit_hazard(taus)
        assert abs(fit.lambda_hat - 0.241) / 0.241 <= 0.1


class TestEvaluateDetection:
    @pytest.fixture()
    def truth(self):
        _, truth = generate_world(small_config())
        return truth

    def test_perfect_detector(self, truth):
        insiders = [a for a, lab in truth.account_labels.items()
                    if lab == LABEL_INSIDER]
        m = evaluate_detection(insiders, truth)
        assert m.account_precision == 1.0
        assert m.account_recall == 1.0

    def test_no_flags_precision_null(self, truth):
        m = evaluate_detection([], truth)
        assert m.account_precision is None
        assert m.account_recall == 0.0

    def test_population_breakdown(self, truth):
        some_noise = [a for a, lab in truth.account_labels.items()
                      if lab == "noise"][:3]
        m = evaluate_detection(some_noise, truth)
        assert m.population_confusion["noise"]["flagged"] == 3
        assert m.account_precision == 0.0

    def test_unknown_id(self, truth):
        with pytest.raises(UnknownId):
            evaluate_detection(["nobody"], truth)
