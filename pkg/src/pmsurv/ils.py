"""Per-market information-leakage score with scope gates and hazard fit.

The deadline leakage score of a resolved binary market is the pre-event
share of the terminal move:

    (p(t_event - 60s) - p(t_open)) / (outcome - p(t_open))

A score is admitted only when three scope conditions hold: substantive
uncertainty at open, a non-trivial terminal move, and stability of the
score under small perturbations of the event anchor.  Rejected markets get
a populated gate report instead of a number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from typing import Sequence

from scipy import stats

from .errors import (
    EmptySample,
    MissingEventTime,
    NonPositiveDuration,
    NotAdmitted,
    SeriesGap,
    TimeBeforeSeries,
)
from .model import Market, PriceSeries

PRE_EVENT_LEAD = timedelta(seconds=60)
DEFAULT_ANCHOR_GRID_MINUTES = (-10, -5, -2, -1, 1, 2, 5, 10)
DEFAULT_EPSILON = 0.05
DEFAULT_ETA = 0.05
DEFAULT_SHORT_WINDOW = timedelta(hours=48)


class IlsRegime(str, Enum):
    NEGATIVE = "NEGATIVE"
    UNIT_INTERVAL = "UNIT_INTERVAL"
    OVER_UNITY = "OVER_UNITY"


@dataclass(frozen=True)
class ScopeGateReport:
    market_id: str
    edge_effect_ok: bool
    nontrivial_move_ok: bool
    anchor_stable_ok: bool
    epsilon: float
    eta: float
    max_anchor_deviation: float
    p_open: float
    delta_total: float

    @property
    def admitted(self) -> bool:
        return self.edge_effect_ok and self.nontrivial_move_ok and self.anchor_stable_ok


@dataclass(frozen=True)
class IlsResult:
    market_id: str
    gate: ScopeGateReport
    p_open: float
    outcome_price: float
    p_pre: float | None = None
    delta_pre: float | None = None
    delta_total: float | None = None
    ils_dl: float | None = None
    regime: IlsRegime | None = None
    short_window_value: float | None = None

    @property
    def admitted(self) -> bool:
        return self.gate.admitted

    def require_admitted(self) -> "IlsResult":
        if not self.gate.admitted:
            raise NotAdmitted(self.gate)
        return self


def _lookup(series: PriceSeries, t: datetime, what: str) -> float:
    try:
        return series.price_at(t)
    except TimeBeforeSeries as exc:
        raise SeriesGap(f"{series.market_id}: no coverage for {what} at {t}") from exc


def anchored_ils(
    series: PriceSeries, market: Market, anchor: datetime, p_open: float | None = None
) -> float:
    """Leakage score against an arbitrary anchor time.

    The pre-anchor lookup is ``anchor - 60s``, clamped at t_open (prices
    before the first trade are undefined, and a pre-open anchor can only
    mean "no pre-event move").
    """
    if p_open is None:
        p_open = _lookup(series, market.t_open, "t_open")
    lookup_t = max(market.t_open, anchor - PRE_EVENT_LEAD)
    p_pre = _lookup(series, lookup_t, "pre-anchor price")
    return (p_pre - p_open) / (market.outcome - p_open)


def scope_gate(
    series: PriceSeries,
    market: Market,
    epsilon: float = DEFAULT_EPSILON,
    anchor_grid_minutes: Sequence[int] = DEFAULT_ANCHOR_GRID_MINUTES,
    eta: float = DEFAULT_ETA,
) -> ScopeGateReport:
    """Evaluate the three scope conditions for one market.

    Edge effect: |p(t_open) - 0.5| <= 0.4.  Non-trivial move:
    |outcome - p(t_open)| >= epsilon.  Anchor stability: the score
    recomputed at t_event + delta for each grid offset deviates from the
    central value by at most eta.
    """
    if market.t_event is None:
        raise MissingEventTime(market.market_id)
    p_open = _lookup(series, market.t_open, "t_open")
    delta_total = market.outcome - p_open
    edge_ok = abs(p_open - 0.5) <= 0.4
    move_ok = abs(delta_total) >= epsilon

    if delta_total == 0.0:
        max_dev = math.inf
        anchor_ok = False
    else:
        central = anchored_ils(series, market, market.t_event, p_open)
        max_dev = 0.0
        for minutes in anchor_grid_minutes:
            shifted = anchored_ils(
                series, market, market.t_event + timedelta(minutes=minutes), p_open
            )
            max_dev = max(max_dev, abs(shifted - central))
        anchor_ok = max_dev <= eta

    return ScopeGateReport(
        market_id=market.market_id,
        edge_effect_ok=edge_ok,
        nontrivial_move_ok=move_ok,
        anchor_stable_ok=anchor_ok,
        epsilon=epsilon,
        eta=eta,
        max_anchor_deviation=max_dev,
        p_open=p_open,
        delta_total=delta_total,
    )


def regime_of(value: float) -> IlsRegime:
    """Diagnostic label for a leakage value.

    NEGATIVE: the pre-event move ran against the eventual outcome.
    OVER_UNITY: the pre-event move overshot the terminal move (reachable
    only at off-event anchors, since p is bounded by the binary outcome).
    """
    if value < 0.0:
        return IlsRegime.NEGATIVE
    if value > 1.0:
        return IlsRegime.OVER_UNITY
    return IlsRegime.UNIT_INTERVAL


def ils_dl(
    series: PriceSeries,
    market: Market,
    epsilon: float = DEFAULT_EPSILON,
    anchor_grid_minutes: Sequence[int] = DEFAULT_ANCHOR_GRID_MINUTES,
    eta: float = DEFAULT_ETA,
    short_window: timedelta | None = None,
) -> IlsResult:
    """Deadline leakage score for one market, gated by the scope conditions.

    When the gate rejects, the result carries the gate report and no score.
    Values outside [0, 1] are reported untruncated with a regime label.
    """
    gate = scope_gate(series, market, epsilon, anchor_grid_minutes, eta)
    p_open = gate.p_open
    if not gate.admitted:
        return IlsResult(
            market_id=market.market_id,
            gate=gate,
            p_open=p_open,
            outcome_price=float(market.outcome),
        )
    p_pre = _lookup(series, market.t_event - PRE_EVENT_LEAD, "pre-event price")
    delta_pre = p_pre - p_open
    delta_total = market.outcome - p_open
    value = delta_pre / delta_total
    sw = None
    if short_window is not None:
        sw = short_window_ils(series, market, short_window, _gate=gate)
    return IlsResult(
        market_id=market.market_id,
        gate=gate,
        p_open=p_open,
        outcome_price=float(market.outcome),
        p_pre=p_pre,
        delta_pre=delta_pre,
        delta_total=delta_total,
        ils_dl=value,
        regime=regime_of(value),
        short_window_value=sw,
    )


def short_window_ils(
    series: PriceSeries,
    market: Market,
    window: timedelta = DEFAULT_SHORT_WINDOW,
    _gate: ScopeGateReport | None = None,
) -> float:
    """Pre-event move over the last ``window`` as a share of the total move.

    The lower anchor clamps at t_open, so a window reaching past the open
    reproduces the full deadline score.
    """
    if window <= timedelta(0):
        raise ValueError("window must be positive")
    gate = _gate or scope_gate(series, market)
    if not gate.admitted:
        raise NotAdmitted(gate)
    p_open = gate.p_open
    p_pre = _lookup(series, market.t_event - PRE_EVENT_LEAD, "pre-event price")
    low_t = max(market.t_open, market.t_event - window)
    p_low = _lookup(series, low_t, "window start price")
    return (p_pre - p_low) / (market.outcome - p_open)


# -- lead-time hazard ----------------------------------------------------------

@dataclass(frozen=True)
class HazardFit:
    n: int
    sum_tau: float
    lambda_hat: float  # per-day hazard rate
    ci95: tuple[float, float]
    half_life: float  # days
    ks_p: float
    ks_approximate: bool = True  # rate estimated from the same sample


def fit_hazard(taus: Sequence[float]) -> HazardFit:
    """Exponential MLE for event lead times, with exact pivot CI and KS check.

    lambda_hat = n / sum(tau); the 95% CI uses the chi-square pivot
    2*lambda*sum(tau) ~ chi2(2n).  The KS p-value is computed against the
    fitted rate and is flagged approximate: estimating the rate first makes
    the plain KS test conservative.
    """
    taus = list(taus)
    if not taus:
        raise EmptySample("no durations")
    if any(t <= 0 for t in taus):
        raise NonPositiveDuration("all durations must be > 0")
    n = len(taus)
    sum_tau = float(sum(taus))
    lam = n / sum_tau
    lo = stats.chi2.ppf(0.025, 2 * n) / (2 * sum_tau)
    hi = stats.chi2.ppf(0.975, 2 * n) / (2 * sum_tau)
    ks = stats.kstest(taus, "expon", args=(0, 1 / lam))
    return HazardFit(
        n=n,
        sum_tau=sum_tau,
        lambda_hat=lam,
        ci95=(float(lo), float(hi)),
        half_life=math.log(2) / lam,
        ks_p=float(ks.pvalue),
    )


def survival(lam: float, tau: float) -> float:
    """Exponential survival probability exp(-lam * tau)."""
    if lam <= 0:
        raise ValueError("lam must be > 0")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    return math.exp(-lam * tau)
