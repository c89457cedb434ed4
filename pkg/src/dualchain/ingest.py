"""Hash-rate series loading, fickle-period detection, and state recovery.

The detector mirrors how fickle episodes show up in public data: miners
flood the minor chain from the moment the difficulty ratio D_B/D_A drops
below the price ratio k until it rises back above.  A symmetric
hysteresis band around k suppresses the flip-flopping that real series
exhibit when the ratio hovers near the threshold.

State recovery uses hash-rate shares: inside a detected period the
B-share observes r_f + r_b, outside it observes r_b.  A period's r_f
estimate is the median in-period share minus the median share of the
flanking non-period windows (medians, because the raw series carries
sharp peaks), and r_f is carried forward across non-period stretches
until the next period updates it.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

from .core import DualchainError, GameConfig, MiningState, Zone
from .equilibrium import ZONE_TOL, zone_of


class ParseError(DualchainError):
    code = "parse_error"

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class InvariantViolation(DualchainError):
    code = "invariant_violation"

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        super().__init__(message, field=field)
        self.line = line


class EmptySeries(DualchainError):
    code = "empty_series"


class NoBaseline(DualchainError):
    code = "no_baseline"


class UnresolvableState(DualchainError):
    code = "unresolvable_state"


SERIES_HEADER = ("timestamp", "hashrate_a", "hashrate_b", "difficulty_a",
                 "difficulty_b", "price_ratio_k")


@dataclass(frozen=True)
class SeriesRecord:
    """One observation: hash rates, difficulties, and the price ratio."""

    timestamp: int
    hashrate_a: float
    hashrate_b: float
    difficulty_a: float
    difficulty_b: float
    price_ratio_k: float


@dataclass(frozen=True)
class FicklePeriod:
    """Index span [start_index, end_index] of one fickle episode.

    trigger_ratio is the normalized D_B/D_A at entry.
    """

    start_index: int
    end_index: int
    trigger_ratio: float


class Basis(Enum):
    GRAY_PERIOD = "gray_period"
    NON_GRAY = "non_gray"


@dataclass(frozen=True)
class StateEstimate:
    """Per-record power estimate.

    `share` is the observed B fraction of the total hash rate: inside a
    period it measures r_f + r_b, outside it measures r_b.  r_f / r_b
    are filled where the period estimates resolve them; k is copied from
    the record for zone classification.
    """

    timestamp: int
    basis: Basis
    share: float
    r_f: float | None
    r_b: float | None
    k: float


@dataclass
class SeriesLoad:
    """Loaded series plus a count of out-of-order rows that were sorted."""

    records: list[SeriesRecord]
    out_of_order_count: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def load_series(path: str) -> SeriesLoad:
    """Parse and validate a series CSV; rows are sorted by timestamp.

    Out-of-order rows are tolerated (the result reports how many);
    duplicate timestamps are rejected.
    """
    records: list[SeriesRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptySeries(f"{path} is empty")
        if tuple(h.strip() for h in header) != SERIES_HEADER:
            raise ParseError(
                f"expected header {','.join(SERIES_HEADER)}, got {','.join(header)}",
                line=1,
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(SERIES_HEADER):
                raise ParseError(f"expected {len(SERIES_HEADER)} fields", line=lineno)
            try:
                rec = SeriesRecord(
                    timestamp=int(float(row[0])),
                    hashrate_a=float(row[1]),
                    hashrate_b=float(row[2]),
                    difficulty_a=float(row[3]),
                    difficulty_b=float(row[4]),
                    price_ratio_k=float(row[5]),
                )
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc
            if rec.hashrate_a < 0.0 or rec.hashrate_b < 0.0:
                raise InvariantViolation("negative hash rate", line=lineno, field="hashrate")
            if rec.hashrate_a == 0.0 and rec.hashrate_b == 0.0:
                raise InvariantViolation("both hash rates zero", line=lineno, field="hashrate")
            if rec.difficulty_a <= 0.0 or rec.difficulty_b <= 0.0:
                raise InvariantViolation("difficulty must be > 0", line=lineno, field="difficulty")
            if not (0.0 < rec.price_ratio_k <= 1.0):
                raise InvariantViolation(
                    f"price ratio {rec.price_ratio_k} outside (0, 1]",
                    line=lineno, field="price_ratio_k",
                )
            records.append(rec)

    if not records:
        raise EmptySeries(f"{path} has no data rows")
    out_of_order = sum(
        1 for a, b in zip(records, records[1:]) if b.timestamp < a.timestamp
    )
    if out_of_order:
        records.sort(key=lambda r: r.timestamp)
    for a, b in zip(records, records[1:]):
        if a.timestamp == b.timestamp:
            raise InvariantViolation(
                f"duplicate timestamp {a.timestamp}", field="timestamp"
            )
    return SeriesLoad(records, out_of_order)


def detect_fickle_periods(
    series: Sequence[SeriesRecord],
    hysteresis: float = 0.02,
    baseline: tuple[int, int] = (0, 1),
) -> list[FicklePeriod]:
    """Find spans where the difficulty ratio sits below the price ratio.

    A period opens when normalized D_B/D_A falls below k*(1 - hysteresis)
    and closes when it rises above k*(1 + hysteresis); a period still
    open at the series end closes there.  `baseline` is the [start, end)
    index window over which the chain_A difficulty is taken as the
    all-power-on-A reference; both difficulty columns are divided by
    that single scale, which requires them to share units (true for
    PoW-compatible chains).
    """
    if len(series) < 2:
        raise EmptySeries("need at least 2 records to detect periods")
    if hysteresis < 0.0:
        raise ValueError("hysteresis must be >= 0")
    lo, hi = baseline
    base = [series[i].difficulty_a for i in range(max(lo, 0), min(hi, len(series)))]
    if not base:
        raise NoBaseline(f"baseline window {baseline} selects no records")
    scale = statistics.fmean(base)

    periods: list[FicklePeriod] = []
    open_start: int | None = None
    open_ratio = 0.0
    for i, rec in enumerate(series):
        ratio = (rec.difficulty_b / scale) / (rec.difficulty_a / scale)
        k = rec.price_ratio_k
        if open_start is None:
            if ratio < k * (1.0 - hysteresis):
                open_start = i
                open_ratio = ratio
        else:
            if ratio > k * (1.0 + hysteresis):
                periods.append(FicklePeriod(open_start, i, open_ratio))
                open_start = None
    if open_start is not None and open_start < len(series) - 1:
        periods.append(FicklePeriod(open_start, len(series) - 1, open_ratio))
    return periods


def _b_share(rec: SeriesRecord) -> float:
    return rec.hashrate_b / (rec.hashrate_a + rec.hashrate_b)


def estimate_state_path(
    series: Sequence[SeriesRecord],
    periods: Sequence[FicklePeriod],
    flank: int = 24,
) -> tuple[list[StateEstimate], list[float]]:
    """Per-record state estimates plus one r_f estimate per period.

    A period's r_f is the median in-period share minus the median share
    of up to `flank` non-period records on each side, floored at 0.
    Inside a period the share observes r_f + r_b, so r_b is the share
    minus the period's r_f; outside, r_b is the share and r_f is left
    unresolved (zone_path carries the last period estimate forward).
    """
    in_period = [False] * len(series)
    for p in periods:
        for i in range(p.start_index, p.end_index + 1):
            in_period[i] = True

    period_rf: list[float] = []
    for p in periods:
        inside = [_b_share(series[i]) for i in range(p.start_index, p.end_index + 1)]
        flanking: list[float] = []
        i = p.start_index - 1
        while i >= 0 and len(flanking) < flank:
            if not in_period[i]:
                flanking.append(_b_share(series[i]))
            i -= 1
        after: list[float] = []
        i = p.end_index + 1
        while i < len(series) and len(after) < flank:
            if not in_period[i]:
                after.append(_b_share(series[i]))
            i += 1
        flanking.extend(after)
        base = statistics.median(flanking) if flanking else 0.0
        period_rf.append(max(0.0, statistics.median(inside) - base))

    estimates: list[StateEstimate] = []
    period_idx_of = {}
    for pi, p in enumerate(periods):
        for i in range(p.start_index, p.end_index + 1):
            period_idx_of[i] = pi
    for i, rec in enumerate(series):
        share = _b_share(rec)
        if in_period[i]:
            rf = period_rf[period_idx_of[i]]
            estimates.append(StateEstimate(
                rec.timestamp, Basis.GRAY_PERIOD, share,
                r_f=rf, r_b=max(0.0, share - rf), k=rec.price_ratio_k,
            ))
        else:
            estimates.append(StateEstimate(
                rec.timestamp, Basis.NON_GRAY, share,
                r_f=None, r_b=share, k=rec.price_ratio_k,
            ))
    return estimates, period_rf


def zone_path(
    estimates: Sequence[StateEstimate],
    config: GameConfig,
    tol: float = ZONE_TOL,
) -> tuple[list[Zone], list[tuple[int, Zone, Zone]]]:
    """Zone per record (using each record's own k) plus transition events.

    Non-period records inherit the most recent period's r_f.  Records
    with no observed B mining classify as zone 1: with nobody mining
    coin_B its difficulty has nowhere to fall, which is the
    coin_A-dominant downfall reading rather than the analytic near-axis
    bonanza.  A record that does carry B mining before any period has
    provided an r_f estimate is unresolvable.
    """
    zones: list[Zone] = []
    transitions: list[tuple[int, Zone, Zone]] = []
    carried_rf: float | None = None
    for i, est in enumerate(estimates):
        if est.basis is Basis.GRAY_PERIOD:
            if est.r_f is None:
                raise UnresolvableState(f"period record {i} lacks an r_f estimate")
            carried_rf = est.r_f
            r_f, r_b = est.r_f, est.r_b if est.r_b is not None else 0.0
        else:
            if est.share <= 0.0:
                if zones and Zone.ZONE1 is not zones[-1]:
                    transitions.append((i, zones[-1], Zone.ZONE1))
                zones.append(Zone.ZONE1)
                continue
            if carried_rf is None:
                raise UnresolvableState(
                    f"record {i}: B mining observed before any fickle period "
                    "provided an r_f estimate"
                )
            r_b = est.r_b if est.r_b is not None else est.share
            r_f = min(carried_rf, max(0.0, 1.0 - r_b))
        cfg = config if est.k == config.k else replace(config, k=est.k)
        r_f = min(r_f, 1.0)
        zone = zone_of(MiningState(r_f, min(r_b, 1.0 - r_f)), cfg, tol)
        if zones and zone is not zones[-1]:
            transitions.append((i, zones[-1], zone))
        zones.append(zone)
    return zones, transitions
