"""Surveillance toolkit for informed-trading detection on binary prediction markets.

Three detection layers over an immutable trade corpus:

- account-level sign-randomization skill classification (``signrand``),
- single-event lifecycle/conviction and composite anomaly screens (``screens``),
- per-market information-leakage scoring with hazard-rate calibration (``ils``),

composed into a three-stage pipeline (``pipeline``) and exercised against a
synthetic labeled world generator (``synth``).
"""

from .errors import PmsurvError
from .ils import HazardFit, IlsResult, ScopeGateReport, fit_hazard, ils_dl, scope_gate, short_window_ils, survival
from .model import (
    Account,
    Category,
    Corpus,
    Event,
    EventPnl,
    FundingTag,
    Market,
    PriceSeries,
    Side,
    Trade,
    event_pnl_table,
    price_at,
    trade_resolution_pnl,
    validate_corpus,
)
from .pipeline import PipelineConfig, PipelineReport, RiskScore, run_pipeline, stage1_risk_scores, stage2_market_queue
from .screens import (
    CompositeFeatures,
    CompositeScore,
    LifecycleConfig,
    LifecycleFlag,
    composite_score,
    imbalance_predictiveness,
    insider_order_imbalance,
    lifecycle_flag,
)
from .signrand import (
    AccountClassification,
    MarketMakerConfig,
    NullSpec,
    PersistenceResult,
    SkillCategory,
    classify_account,
    classify_accounts,
    detect_market_maker,
    null_p_value,
    persistence_retention,
)
from .synth import GroundTruth, WorldConfig, evaluate_detection, generate_world

__version__ = "0.1.0"
