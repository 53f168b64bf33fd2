"""Corpus file ingestion and deterministic report emission.

Corpus files are JSON Lines (one record per line, UTF-8, RFC 3339 UTC
timestamps).  Decimal quantities travel as strings so fixtures survive the
round trip exactly.  Loading is strict: malformed lines raise ParseError
with file and line, out-of-range numerics are never clamped, and invariant
violations surface through a ValidationReport.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, fields, is_dataclass
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from enum import Enum
from pathlib import Path

from .errors import IoError, ParseError, ValidationFailed
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
    quantize_money,
    validate_tables,
)

MARKETS_FILE = "markets.jsonl"
TRADES_FILE = "trades.jsonl"
PRICES_FILE = "prices.jsonl"
ACCOUNTS_FILE = "accounts.jsonl"
EVENTS_FILE = "events.jsonl"
TRUTH_FILE = "truth.jsonl"


@dataclass(frozen=True)
class CorpusFiles:
    markets: Path
    trades: Path
    prices: Path | None = None
    accounts: Path | None = None
    events: Path | None = None

    @classmethod
    def in_dir(cls, directory: str | Path) -> "CorpusFiles":
        d = Path(directory)
        def opt(name: str) -> Path | None:
            p = d / name
            return p if p.exists() else None
        return cls(
            markets=d / MARKETS_FILE,
            trades=d / TRADES_FILE,
            prices=opt(PRICES_FILE),
            accounts=opt(ACCOUNTS_FILE),
            events=opt(EVENTS_FILE),
        )


# -- field parsing --------------------------------------------------------------

def parse_ts(raw, file: str, line: int, key: str) -> datetime:
    if not isinstance(raw, str):
        raise ParseError(file, line, f"{key}: expected RFC 3339 string, got {raw!r}")
    text = raw[:-1] + "+00:00" if raw.endswith("Z") else raw
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        raise ParseError(file, line, f"{key}: invalid timestamp {raw!r}") from None
    if dt.tzinfo is None:
        raise ParseError(file, line, f"{key}: timestamp {raw!r} lacks a timezone")
    return dt.astimezone(timezone.utc)


def _parse_decimal(raw, file: str, line: int, key: str,
                   lo: Decimal | None = None, hi: Decimal | None = None) -> Decimal:
    if isinstance(raw, bool) or not isinstance(raw, (str, int, float)):
        raise ParseError(file, line, f"{key}: expected decimal, got {raw!r}")
    try:
        value = Decimal(raw if isinstance(raw, str) else str(raw))
    except InvalidOperation:
        raise ParseError(file, line, f"{key}: invalid decimal {raw!r}") from None
    if not value.is_finite():
        raise ParseError(file, line, f"{key}: non-finite decimal {raw!r}")
    if lo is not None and value < lo:
        raise ParseError(file, line, f"{key}: value {value} below {lo}")
    if hi is not None and value > hi:
        raise ParseError(file, line, f"{key}: value {value} above {hi}")
    return value


def _parse_str(raw, file: str, line: int, key: str) -> str:
    if not isinstance(raw, str) or not raw:
        raise ParseError(file, line, f"{key}: expected non-empty string, got {raw!r}")
    return raw


def _parse_enum(raw, enum_cls, file: str, line: int, key: str):
    try:
        return enum_cls(raw)
    except ValueError:
        allowed = "|".join(e.value for e in enum_cls)
        raise ParseError(file, line, f"{key}: {raw!r} not one of {allowed}") from None


def _check_keys(obj: dict, required: set[str], optional: set[str],
                file: str, line: int) -> None:
    missing = required - obj.keys()
    if missing:
        raise ParseError(file, line, f"missing key(s): {sorted(missing)}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise ParseError(file, line, f"unknown key(s): {sorted(unknown)}")


def _iter_jsonl(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(str(path), line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise ParseError(str(path), line_no, "record is not a JSON object")
        yield line_no, obj


# -- loading ---------------------------------------------------------------------

def load_corpus(source: CorpusFiles | str | Path) -> Corpus:
    """Parse, validate and index a corpus from JSONL files.

    Accepts a CorpusFiles bundle or a directory using the standard names.
    Price series are derived from trade prints for markets without explicit
    prices; accounts missing from accounts.jsonl are derived from trades.
    Raises ParseError on malformed content and ValidationFailed (embedding
    the report) when any fatal invariant violation is found.
    """
    files = source if isinstance(source, CorpusFiles) else CorpusFiles.in_dir(source)

    markets: dict[str, Market] = {}
    fname = str(files.markets)
    for line_no, obj in _iter_jsonl(files.markets):
        _check_keys(
            obj,
            {"market_id", "event_id", "category", "t_open", "t_resolve", "outcome"},
            {"t_deadline", "t_event"},
            fname, line_no,
        )
        market_id = _parse_str(obj["market_id"], fname, line_no, "market_id")
        if market_id in markets:
            raise ParseError(fname, line_no, f"duplicate market_id {market_id}")
        outcome = obj["outcome"]
        if outcome not in (0, 1) or isinstance(outcome, bool):
            raise ParseError(fname, line_no, f"outcome: expected 0 or 1, got {outcome!r}")
        markets[market_id] = Market(
            market_id=market_id,
            event_id=_parse_str(obj["event_id"], fname, line_no, "event_id"),
            category=_parse_enum(obj["category"], Category, fname, line_no, "category"),
            t_open=parse_ts(obj["t_open"], fname, line_no, "t_open"),
            t_resolve=parse_ts(obj["t_resolve"], fname, line_no, "t_resolve"),
            outcome=outcome,
            t_deadline=(
                parse_ts(obj["t_deadline"], fname, line_no, "t_deadline")
                if obj.get("t_deadline") is not None else None
            ),
            t_event=(
                parse_ts(obj["t_event"], fname, line_no, "t_event")
                if obj.get("t_event") is not None else None
            ),
        )

    trades: list[Trade] = []
    seen_trades: set[str] = set()
    fname = str(files.trades)
    for line_no, obj in _iter_jsonl(files.trades):
        _check_keys(
            obj,
            {"trade_id", "account_id", "market_id", "side", "size", "price", "ts"},
            set(),
            fname, line_no,
        )
        trade_id = _parse_str(obj["trade_id"], fname, line_no, "trade_id")
        if trade_id in seen_trades:
            raise ParseError(fname, line_no, f"duplicate trade_id {trade_id}")
        seen_trades.add(trade_id)
        trades.append(
            Trade(
                trade_id=trade_id,
                account_id=_parse_str(obj["account_id"], fname, line_no, "account_id"),
                market_id=_parse_str(obj["market_id"], fname, line_no, "market_id"),
                side=_parse_enum(obj["side"], Side, fname, line_no, "side"),
                size=_parse_decimal(obj["size"], fname, line_no, "size", lo=Decimal(0)),
                price=_parse_decimal(
                    obj["price"], fname, line_no, "price",
                    lo=Decimal(0), hi=Decimal(1),
                ),
                ts=parse_ts(obj["ts"], fname, line_no, "ts"),
            )
        )

    accounts: dict[str, Account] = {}
    if files.accounts is not None:
        fname = str(files.accounts)
        for line_no, obj in _iter_jsonl(files.accounts):
            _check_keys(obj, {"account_id"}, {"created_at", "funding_tag"}, fname, line_no)
            account_id = _parse_str(obj["account_id"], fname, line_no, "account_id")
            if account_id in accounts:
                raise ParseError(fname, line_no, f"duplicate account_id {account_id}")
            accounts[account_id] = Account(
                account_id=account_id,
                created_at=(
                    parse_ts(obj["created_at"], fname, line_no, "created_at")
                    if obj.get("created_at") is not None else None
                ),
                funding_tag=(
                    _parse_enum(obj["funding_tag"], FundingTag, fname, line_no, "funding_tag")
                    if obj.get("funding_tag") is not None else None
                ),
            )

    declared_events: dict[str, datetime | None] = {}
    if files.events is not None:
        fname = str(files.events)
        for line_no, obj in _iter_jsonl(files.events):
            _check_keys(obj, {"event_id"}, {"t_event"}, fname, line_no)
            event_id = _parse_str(obj["event_id"], fname, line_no, "event_id")
            if event_id in declared_events:
                raise ParseError(fname, line_no, f"duplicate event_id {event_id}")
            declared_events[event_id] = (
                parse_ts(obj["t_event"], fname, line_no, "t_event")
                if obj.get("t_event") is not None else None
            )

    # Events are implied by market grouping; events.jsonl only overrides t_event.
    members: dict[str, list[str]] = {}
    for market_id in sorted(markets):
        members.setdefault(markets[market_id].event_id, []).append(market_id)
    events: dict[str, Event] = {}
    for event_id in sorted(set(members) | set(declared_events)):
        mids = tuple(members.get(event_id, ()))
        if event_id in declared_events and declared_events[event_id] is not None:
            t_event = declared_events[event_id]
        else:
            member_events = [
                markets[m].t_event for m in mids if markets[m].t_event is not None
            ]
            t_event = min(member_events) if member_events else None
        events[event_id] = Event(event_id=event_id, market_ids=mids, t_event=t_event)

    series: dict[str, PriceSeries] = {}
    if files.prices is not None:
        fname = str(files.prices)
        points: dict[str, list[tuple[datetime, float]]] = {}
        seen_ts: dict[tuple[str, datetime], int] = {}
        for line_no, obj in _iter_jsonl(files.prices):
            _check_keys(obj, {"market_id", "ts", "price"}, set(), fname, line_no)
            market_id = _parse_str(obj["market_id"], fname, line_no, "market_id")
            ts = parse_ts(obj["ts"], fname, line_no, "ts")
            price = float(
                _parse_decimal(obj["price"], fname, line_no, "price",
                               lo=Decimal(0), hi=Decimal(1))
            )
            if (market_id, ts) in seen_ts:
                raise ParseError(
                    fname, line_no,
                    f"duplicate price point for {market_id} at {ts} "
                    f"(first seen on line {seen_ts[(market_id, ts)]})",
                )
            seen_ts[(market_id, ts)] = line_no
            points.setdefault(market_id, []).append((ts, price))
        for market_id, pts in points.items():
            pts.sort(key=lambda p: p[0])
            series[market_id] = PriceSeries(
                market_id=market_id,
                timestamps=tuple(p[0] for p in pts),
                prices=tuple(p[1] for p in pts),
            )

    report = validate_tables(markets, events, accounts, trades, series)
    if not report.ok:
        raise ValidationFailed(report)

    # Markets without explicit prices fall back to last-trade-print series.
    by_market: dict[str, list[Trade]] = {}
    for tr in sorted(trades, key=lambda t: (t.ts, t.trade_id)):
        by_market.setdefault(tr.market_id, []).append(tr)
    for market_id, mtrades in by_market.items():
        if market_id in series:
            continue
        pts: dict[datetime, float] = {}
        for tr in mtrades:
            pts[tr.ts] = float(tr.price)  # same-second prints: last one wins
        ordered = sorted(pts.items())
        series[market_id] = PriceSeries(
            market_id=market_id,
            timestamps=tuple(p[0] for p in ordered),
            prices=tuple(p[1] for p in ordered),
        )

    return Corpus.build(markets, events, accounts, trades, series)


# -- canonical serialization -----------------------------------------------------

def format_ts(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def to_jsonable(obj, money_2dp: bool = True):
    """Recursively convert dataclasses/decimals/timestamps to JSON-safe values."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return obj
    if isinstance(obj, Decimal):
        return str(quantize_money(obj)) if money_2dp else str(obj)
    if isinstance(obj, datetime):
        return format_ts(obj)
    if isinstance(obj, Enum):
        return obj.value
    if is_dataclass(obj) and not isinstance(obj, type):
        out = {}
        for f in fields(obj):
            out[f.name] = to_jsonable(getattr(obj, f.name), money_2dp)
        for name in ("admitted",):  # expose key derived properties
            if hasattr(obj, name) and name not in out:
                out[name] = to_jsonable(getattr(obj, name), money_2dp)
        return out
    if isinstance(obj, dict):
        return {str(k.value if isinstance(k, Enum) else k): to_jsonable(v, money_2dp)
                for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [to_jsonable(v, money_2dp) for v in items]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_canonical(obj) -> str:
    """Byte-deterministic JSON: sorted keys, stable float repr, trailing newline."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def emit_report(report, fmt: str = "json", out_path: str | Path | None = None) -> str:
    """Serialize a report deterministically; returns the content's sha256.

    ``fmt`` is "json" for any report object, or "csv" for a pipeline report's
    review queue (queued rows first, then skipped candidates with their
    machine-readable reasons).
    """
    if fmt == "json":
        payload = dumps_canonical(report)
    elif fmt == "csv":
        payload = review_queue_csv(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    data = payload.encode("utf-8")
    if out_path is not None:
        try:
            Path(out_path).write_bytes(data)
        except OSError as exc:
            raise IoError(f"cannot write {out_path}: {exc}") from exc
    return hashlib.sha256(data).hexdigest()


def review_queue_csv(report) -> str:
    """CSV review queue for a pipeline report."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["market_id", "ils_dl", "short_window", "flagged_accounts", "holdings", "skip_reason"]
    )
    for entry in report.stage3_queue:
        writer.writerow(
            [
                entry.market_id,
                f"{entry.ils.ils_dl:.6f}",
                f"{entry.ils.short_window_value:.6f}",
                ";".join(entry.flagged_accounts),
                ";".join(f"{h:.6f}" for h in entry.holdings),
                "",
            ]
        )
    for skip in report.stage2_skipped:
        writer.writerow([skip.market_id, "", "", "", "", skip.reason])
    return buf.getvalue()


# -- corpus writing ---------------------------------------------------------------

def write_corpus(corpus: Corpus, out_dir: str | Path) -> None:
    """Write a corpus to the standard JSONL files in canonical order."""
    d = Path(out_dir)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {d}: {exc}") from exc
    tables = _corpus_tables(corpus)
    for name, lines in tables.items():
        try:
            (d / name).write_text("".join(lines), encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write {d / name}: {exc}") from exc


def _jsonl_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def _corpus_tables(corpus: Corpus) -> dict[str, list[str]]:
    market_lines = []
    for market_id in sorted(corpus.markets):
        m = corpus.markets[market_id]
        rec = {
            "market_id": m.market_id,
            "event_id": m.event_id,
            "category": m.category.value,
            "t_open": format_ts(m.t_open),
            "t_resolve": format_ts(m.t_resolve),
            "outcome": m.outcome,
        }
        if m.t_deadline is not None:
            rec["t_deadline"] = format_ts(m.t_deadline)
        if m.t_event is not None:
            rec["t_event"] = format_ts(m.t_event)
        market_lines.append(_jsonl_line(rec))

    trade_lines = []
    for tr in sorted(corpus.trades, key=lambda t: (t.ts, t.trade_id)):
        trade_lines.append(
            _jsonl_line(
                {
                    "trade_id": tr.trade_id,
                    "account_id": tr.account_id,
                    "market_id": tr.market_id,
                    "side": tr.side.value,
                    "size": str(tr.size),
                    "price": str(tr.price),
                    "ts": format_ts(tr.ts),
                }
            )
        )

    price_lines = []
    for market_id in sorted(corpus.series):
        s = corpus.series[market_id]
        for ts, price in zip(s.timestamps, s.prices):
            price_lines.append(
                _jsonl_line({"market_id": market_id, "ts": format_ts(ts), "price": price})
            )

    account_lines = []
    for account_id in sorted(corpus.accounts):
        a = corpus.accounts[account_id]
        rec: dict = {"account_id": a.account_id}
        if a.created_at is not None:
            rec["created_at"] = format_ts(a.created_at)
        if a.funding_tag is not None:
            rec["funding_tag"] = a.funding_tag.value
        account_lines.append(_jsonl_line(rec))

    event_lines = []
    for event_id in sorted(corpus.events):
        ev = corpus.events[event_id]
        rec = {"event_id": ev.event_id}
        if ev.t_event is not None:
            rec["t_event"] = format_ts(ev.t_event)
        event_lines.append(_jsonl_line(rec))

    return {
        MARKETS_FILE: market_lines,
        TRADES_FILE: trade_lines,
        PRICES_FILE: price_lines,
        ACCOUNTS_FILE: account_lines,
        EVENTS_FILE: event_lines,
    }


def corpus_digest(corpus: Corpus) -> str:
    """Content hash of the canonical corpus serialization."""
    h = hashlib.sha256()
    for name, lines in sorted(_corpus_tables(corpus).items()):
        h.update(name.encode("utf-8"))
        h.update(b"\x00")
        for line in lines:
            h.update(line.encode("utf-8"))
    return h.hexdigest()


def write_truth(truth, out_path: str | Path) -> None:
    """Write ground-truth labels as JSONL (account and market records)."""
    lines = []
    for account_id in sorted(truth.account_labels):
        lines.append(
            _jsonl_line(
                {"kind": "account", "id": account_id,
                 "label": truth.account_labels[account_id]}
            )
        )
    for market_id in sorted(truth.insider_moved):
        rec = {
            "kind": "market",
            "id": market_id,
            "insider_moved": truth.insider_moved[market_id],
        }
        if market_id in truth.informed_notional:
            rec["informed_notional"] = str(quantize_money(truth.informed_notional[market_id]))
        lines.append(_jsonl_line(rec))
    try:
        Path(out_path).write_text("".join(lines), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {out_path}: {exc}") from exc


def load_truth(path: str | Path):
    """Read a truth.jsonl written by :func:`write_truth`."""
    from .synth import GroundTruth

    labels: dict[str, str] = {}
    moved: dict[str, bool] = {}
    informed: dict[str, Decimal] = {}
    fname = str(path)
    for line_no, obj in _iter_jsonl(Path(path)):
        kind = obj.get("kind")
        if kind == "account":
            _check_keys(obj, {"kind", "id", "label"}, set(), fname, line_no)
            labels[_parse_str(obj["id"], fname, line_no, "id")] = _parse_str(
                obj["label"], fname, line_no, "label"
            )
        elif kind == "market":
            _check_keys(obj, {"kind", "id", "insider_moved"}, {"informed_notional"},
                        fname, line_no)
            mid = _parse_str(obj["id"], fname, line_no, "id")
            flag = obj["insider_moved"]
            if not isinstance(flag, bool):
                raise ParseError(fname, line_no, "insider_moved: expected boolean")
            moved[mid] = flag
            if obj.get("informed_notional") is not None:
                informed[mid] = _parse_decimal(
                    obj["informed_notional"], fname, line_no, "informed_notional"
                )
        else:
            raise ParseError(fname, line_no, f"unknown record kind {kind!r}")
    return GroundTruth(account_labels=labels, insider_moved=moved,
                       informed_notional=informed)
