"""Run configuration: TOML file loading with strict schema checking.

Configuration is plain-text nested tables (TOML).  Every key is checked
against the schema below; unknown keys are fatal, and values outside their
type ranges are rejected by the component dataclasses they feed.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from datetime import timedelta
from decimal import Decimal, InvalidOperation
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import InvalidConfig
from .ils import (
    DEFAULT_ANCHOR_GRID_MINUTES,
    DEFAULT_EPSILON,
    DEFAULT_ETA,
)
from .model import Category
from .pipeline import DEFAULT_CATEGORY_WEIGHTS, PipelineConfig
from .screens import FEATURE_NAMES, LifecycleConfig, TimingReference
from .signrand import MarketMakerConfig, NullSpec
from .synth import WorldConfig


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    workers: int = 1
    pipeline: PipelineConfig = PipelineConfig()
    world: WorldConfig = WorldConfig()

    @property
    def null_spec(self) -> NullSpec:
        return self.pipeline.null_spec

    @property
    def lifecycle(self) -> LifecycleConfig:
        return self.pipeline.lifecycle


def _want(value, types, where: str):
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise InvalidConfig(f"{where}: expected {types}, got boolean")
    if not isinstance(value, types):
        raise InvalidConfig(f"{where}: expected {types}, got {type(value).__name__}")
    return value


def _decimal(value, where: str) -> Decimal:
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise InvalidConfig(f"{where}: expected decimal")
    try:
        return Decimal(value if isinstance(value, str) else str(value))
    except InvalidOperation:
        raise InvalidConfig(f"{where}: invalid decimal {value!r}") from None


def _check_keys(table: dict, allowed: set[str], where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise InvalidConfig(f"{where}: unknown key(s) {sorted(unknown)}")


def _null_spec(table: dict, seed: int) -> NullSpec:
    _check_keys(table, {"draws", "master_seed", "min_events", "exact_max_events"}, "[null]")
    try:
        return NullSpec(
            draws=_want(table.get("draws", 10_000), int, "[null].draws"),
            master_seed=_want(table.get("master_seed", seed), int, "[null].master_seed"),
            min_events=_want(table.get("min_events", 10), int, "[null].min_events"),
            exact_max_events=_want(
                table.get("exact_max_events", 12), int, "[null].exact_max_events"
            ),
        )
    except ValueError as exc:
        raise InvalidConfig(f"[null]: {exc}") from None


def _lifecycle(table: dict) -> LifecycleConfig:
    _check_keys(
        table,
        {"window_days", "min_volume", "min_profit", "max_external_volume_fraction",
         "reference"},
        "[lifecycle]",
    )
    ref = table.get("reference", "T_EVENT")
    if ref not in (t.value for t in TimingReference):
        raise InvalidConfig(f"[lifecycle].reference: {ref!r} not T_EVENT|T_RESOLVE")
    try:
        return LifecycleConfig(
            window_days=float(_want(table.get("window_days", 7.0), (int, float),
                                    "[lifecycle].window_days")),
            min_volume=_decimal(table.get("min_volume", "1000"), "[lifecycle].min_volume"),
            min_profit=_decimal(table.get("min_profit", "1000"), "[lifecycle].min_profit"),
            max_external_volume_fraction=float(
                _want(table.get("max_external_volume_fraction", 0.0), (int, float),
                      "[lifecycle].max_external_volume_fraction")
            ),
            reference=TimingReference(ref),
        )
    except ValueError as exc:
        raise InvalidConfig(f"[lifecycle]: {exc}") from None


def _market_maker(table: dict) -> MarketMakerConfig:
    _check_keys(table, {"min_markets", "two_sided_fraction", "max_net_gross_ratio"},
                "[market_maker]")
    return MarketMakerConfig(
        min_markets=_want(table.get("min_markets", 50), int, "[market_maker].min_markets"),
        two_sided_fraction=float(
            _want(table.get("two_sided_fraction", 0.6), (int, float),
                  "[market_maker].two_sided_fraction")
        ),
        max_net_gross_ratio=_decimal(
            table.get("max_net_gross_ratio", "0.2"), "[market_maker].max_net_gross_ratio"
        ),
    )


def _composite(table: dict) -> tuple[dict[str, float] | None, timedelta]:
    _check_keys(table, {"timing_window_hours", "weights"}, "[composite]")
    window = timedelta(
        hours=float(_want(table.get("timing_window_hours", 48.0), (int, float),
                          "[composite].timing_window_hours"))
    )
    weights = None
    if "weights" in table:
        wtab = _want(table["weights"], dict, "[composite.weights]")
        _check_keys(wtab, set(FEATURE_NAMES), "[composite.weights]")
        weights = {
            k: float(_want(v, (int, float), f"[composite.weights].{k}"))
            for k, v in wtab.items()
        }
    return weights, window


def _ils_params(table: dict) -> dict:
    _check_keys(
        table,
        {"epsilon", "eta", "anchor_grid_minutes", "short_window_hours"},
        "[ils]",
    )
    grid = table.get("anchor_grid_minutes", list(DEFAULT_ANCHOR_GRID_MINUTES))
    if not isinstance(grid, list) or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in grid
    ):
        raise InvalidConfig("[ils].anchor_grid_minutes: expected a list of integers")
    return {
        "ils_epsilon": float(_want(table.get("epsilon", DEFAULT_EPSILON), (int, float),
                                   "[ils].epsilon")),
        "anchor_eta": float(_want(table.get("eta", DEFAULT_ETA), (int, float), "[ils].eta")),
        "anchor_grid_minutes": tuple(grid),
        "short_window": timedelta(
            hours=float(_want(table.get("short_window_hours", 48.0), (int, float),
                              "[ils].short_window_hours"))
        ),
    }


def _pipeline(table: dict, parts: dict) -> PipelineConfig:
    _check_keys(
        table,
        {"stage1_threshold", "holding_fraction", "ils_threshold",
         "short_window_threshold", "queue_cap", "lifecycle_weight",
         "composite_weight", "context_weight", "young_wallet_days",
         "category_weights"},
        "[pipeline]",
    )
    weights = dict(DEFAULT_CATEGORY_WEIGHTS)
    if "category_weights" in table:
        wtab = _want(table["category_weights"], dict, "[pipeline.category_weights]")
        _check_keys(wtab, {c.value for c in Category}, "[pipeline.category_weights]")
        for name, value in wtab.items():
            weights[Category(name)] = float(
                _want(value, (int, float), f"[pipeline.category_weights].{name}")
            )
    def num(key, default):
        return float(_want(table.get(key, default), (int, float), f"[pipeline].{key}"))
    try:
        return PipelineConfig(
            category_weights=weights,
            lifecycle_weight=num("lifecycle_weight", 4.0),
            composite_weight=num("composite_weight", 1.0),
            context_weight=num("context_weight", 0.5),
            young_wallet_days=num("young_wallet_days", 14.0),
            stage1_threshold=num("stage1_threshold", 3.5),
            holding_fraction=num("holding_fraction", 0.05),
            ils_threshold=num("ils_threshold", 0.25),
            short_window_threshold=num("short_window_threshold", 0.10),
            queue_cap=_want(table.get("queue_cap", 100), int, "[pipeline].queue_cap"),
            **parts,
        )
    except ValueError as exc:
        raise InvalidConfig(f"[pipeline]: {exc}") from None


def _world(table: dict, seed: int) -> WorldConfig:
    allowed = {
        "n_noise", "n_skilled", "n_insider", "n_sybil", "n_market_maker",
        "markets_per_category", "lead_hazard_per_day", "price_step_minutes",
        "price_step_sd", "settle_hours", "skill_edge", "skilled_events",
        "noise_events_min", "noise_events_max", "home_category_bias",
        "insider_coupling", "insider_impact_per_usd", "master_seed",
        "lead_hazard_overrides",
    }
    _check_keys(table, allowed, "[synth]")
    kwargs: dict = {}
    int_keys = (
        "n_noise", "n_skilled", "n_insider", "n_sybil", "n_market_maker",
        "markets_per_category", "price_step_minutes", "skilled_events",
        "noise_events_min", "noise_events_max", "master_seed",
    )
    float_keys = (
        "lead_hazard_per_day", "price_step_sd", "settle_hours", "skill_edge",
        "home_category_bias", "insider_impact_per_usd",
    )
    for key in int_keys:
        if key in table:
            kwargs[key] = _want(table[key], int, f"[synth].{key}")
    for key in float_keys:
        if key in table:
            kwargs[key] = float(_want(table[key], (int, float), f"[synth].{key}"))
    if "insider_coupling" in table:
        kwargs["insider_coupling"] = _want(table["insider_coupling"], bool,
                                           "[synth].insider_coupling")
    if "lead_hazard_overrides" in table:
        otab = _want(table["lead_hazard_overrides"], dict, "[synth.lead_hazard_overrides]")
        _check_keys(otab, {c.value for c in Category}, "[synth.lead_hazard_overrides]")
        kwargs["lead_hazard_overrides"] = {
            Category(k): float(_want(v, (int, float), f"[synth.lead_hazard_overrides].{k}"))
            for k, v in otab.items()
        }
    kwargs.setdefault("master_seed", seed)
    return WorldConfig(**kwargs)


def load_run_config(path: str | Path | None, seed_override: int | None = None,
                    workers_override: int | None = None) -> RunConfig:
    """Load a RunConfig from TOML; missing file sections fall back to defaults."""
    raw: dict = {}
    if path is not None:
        try:
            raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise InvalidConfig(f"config {path}: {exc}") from None

    _check_keys(
        raw,
        {"run", "null", "lifecycle", "market_maker", "composite", "ils",
         "pipeline", "synth"},
        "config",
    )
    run_tab = raw.get("run", {})
    _check_keys(run_tab, {"seed", "workers"}, "[run]")
    seed = _want(run_tab.get("seed", 0), int, "[run].seed")
    if seed_override is not None:
        seed = seed_override
    workers = _want(run_tab.get("workers", 1), int, "[run].workers")
    if workers_override is not None:
        workers = workers_override
    if workers < 1:
        raise InvalidConfig("[run].workers must be >= 1")

    composite_weights, composite_window = _composite(raw.get("composite", {}))
    parts = {
        "null_spec": _null_spec(raw.get("null", {}), seed),
        "lifecycle": _lifecycle(raw.get("lifecycle", {})),
        "mm_config": _market_maker(raw.get("market_maker", {})),
        "composite_weights": composite_weights,
        "composite_timing_window": composite_window,
    }
    parts.update(_ils_params(raw.get("ils", {})))
    pipeline = _pipeline(raw.get("pipeline", {}), parts)
    world = _world(raw.get("synth", {}), seed)
    return RunConfig(seed=seed, workers=workers, pipeline=pipeline, world=world)


def config_echo(config: PipelineConfig) -> dict:
    """Flat, JSON-safe snapshot of an effective pipeline configuration."""
    return {
        "category_weights": {c.value: w for c, w in sorted(config.category_weights.items())},
        "lifecycle_weight": config.lifecycle_weight,
        "composite_weight": config.composite_weight,
        "context_weight": config.context_weight,
        "young_wallet_days": config.young_wallet_days,
        "stage1_threshold": config.stage1_threshold,
        "holding_fraction": config.holding_fraction,
        "ils_threshold": config.ils_threshold,
        "short_window_threshold": config.short_window_threshold,
        "short_window_hours": config.short_window.total_seconds() / 3600.0,
        "ils_epsilon": config.ils_epsilon,
        "anchor_grid_minutes": list(config.anchor_grid_minutes),
        "anchor_eta": config.anchor_eta,
        "queue_cap": config.queue_cap,
        "null_spec": {
            "draws": config.null_spec.draws,
            "master_seed": config.null_spec.master_seed,
            "min_events": config.null_spec.min_events,
            "exact_max_events": config.null_spec.exact_max_events,
        },
        "lifecycle": {
            "window_days": config.lifecycle.window_days,
            "min_volume": str(config.lifecycle.min_volume),
            "min_profit": str(config.lifecycle.min_profit),
            "max_external_volume_fraction": config.lifecycle.max_external_volume_fraction,
            "reference": config.lifecycle.reference.value,
        },
        "market_maker": {
            "min_markets": config.mm_config.min_markets,
            "two_sided_fraction": config.mm_config.two_sided_fraction,
            "max_net_gross_ratio": str(config.mm_config.max_net_gross_ratio),
        },
        "composite_weights": config.composite_weights,
        "composite_timing_window_hours":
            config.composite_timing_window.total_seconds() / 3600.0,
    }
