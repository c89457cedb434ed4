"""Block-level discrete-event simulator of two PoW-compatible chains.

Difficulties are normalized: a committed power fraction p on a chain
with difficulty d produces blocks at rate p/d per P_ag, so a chain whose
difficulty matches its power averages one block per P_ag.  Block arrival
uses an integrated-progress clock: each chain accumulates work at rate
p/d toward a threshold drawn Exp(1) (exponential mode) or fixed at 1
(deterministic expected-interval mode, for low-variance oracle runs).
Power reallocations simply change the accrual rate, which is exactly the
time-change construction of a non-homogeneous Poisson process.

Difficulty regimes:

  EpochFixed(n)        every n blocks set difficulty to the power inferred
                       from the window (blocks * d / elapsed).
  EpochWithEda(...)    EpochFixed plus an emergency decrease: when the last
                       eda_window blocks took more than eda_threshold P_ag,
                       multiply difficulty by eda_factor (re-checked per
                       block).  The trigger shape mirrors the historical
                       BCH rule; deployments differ on the numbers, so all
                       three knobs are configurable.
  PerBlockWindow(w)    every block set difficulty to the window-average
                       power (sum of per-interval difficulties / span),
                       clamped to x[0.5, 2] per block.

Every difficulty adjustment resets the measurement window, matching a
model in which the adjustment count runs from the last update.

Agents: coin-only loyalists never move; fickle agents re-evaluate the
switching predicate (to B iff d_b < min(r_f + r_b, k*d_a) or d_b <= r_b,
with r_f/r_b the roster's policy totals) on every difficulty update or
price tick; automatic agents pick argmax(1/d_a, k/d_b) on every event,
ties keeping the current coin.

Block rewards are apportioned among the agents mining the chain in
proportion to power (expected-value crediting); coin_B rewards convert
to coin_A units at the k in effect at earn time.
"""

from __future__ import annotations

import csv
import math
import random
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .core import DualchainError, GameConfig, MiningState, NegativePower, PowerSumMismatch, Strategy
from .dynamics import Schedule

_INF = math.inf


class ZeroPowerChain(DualchainError):
    code = "zero_power_chain"


class InsufficientCycles(DualchainError):
    code = "insufficient_cycles"


class Coin(Enum):
    A = "a"
    B = "b"


@dataclass(frozen=True)
class EpochFixed:
    """Difficulty recomputed every n blocks from the observed power."""

    n: int = 2016

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("epoch length must be >= 1")


@dataclass(frozen=True)
class EpochWithEda:
    """Epoch regime plus an emergency decrease on slow block windows."""

    n: int = 2016
    eda_window: int = 6
    eda_threshold: float = 12.0
    eda_factor: float = 0.8

    def __post_init__(self):
        if self.n < 1 or self.eda_window < 1:
            raise ValueError("window lengths must be >= 1")
        if not (0.0 < self.eda_factor < 1.0):
            raise ValueError("eda_factor must be in (0, 1)")
        if self.eda_threshold <= 0.0:
            raise ValueError("eda_threshold must be positive")


@dataclass(frozen=True)
class PerBlockWindow:
    """Difficulty retargeted every block from a moving interval window."""

    window: int = 144

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")


DifficultyRegime = EpochFixed | EpochWithEda | PerBlockWindow


@dataclass
class MinerAgent:
    """One miner: a fixed power fraction driven by a policy.

    current_coin is the live allocation; leave it None to start from the
    policy's own initial choice.
    """

    id: str
    power: float
    policy: Strategy
    current_coin: Coin | None = None


@dataclass(frozen=True)
class ChainWorld:
    """Initial twin-chain state: normalized difficulties and the price ratio.

    k_schedule entries are (P_ag time, k) pairs applied piecewise-constant.
    """

    difficulty_a: float
    difficulty_b: float
    k: float
    k_schedule: Schedule | None = None

    def __post_init__(self):
        if self.difficulty_a <= 0.0 or self.difficulty_b <= 0.0:
            raise ValueError("difficulties must be positive")
        if not (0.0 < self.k <= 1.0):
            raise ValueError(f"k must be in (0, 1], got {self.k}")


@dataclass
class SimReport:
    """Aggregates of one simulation run."""

    duration: float
    mode: str
    seed: int
    agent_power: dict[str, float]
    agent_policy: dict[str, Strategy]
    agent_rewards: dict[str, float]
    blocks: dict[Coin, int]
    mean_interval: dict[Coin, float | None]
    difficulty_history: dict[Coin, list[tuple[float, float]]]
    k_history: list[tuple[float, float]]
    occupancy: list[tuple[float, float, float]]
    fickle_cycles: int
    b_phase_durations: list[float]
    r_f_policy: float
    r_b_policy: float
    final_difficulty: dict[Coin, float]
    events: list[tuple] | None = None
    # Reward snapshots at the first and last fickle cycle starts, for
    # whole-cycle payoff measurement: (time, {agent: reward}).
    cycle_mark_first: tuple[float, dict[str, float]] | None = None
    cycle_mark_last: tuple[float, dict[str, float]] | None = None

    def policy_power(self) -> dict[Strategy, float]:
        totals: dict[Strategy, float] = {}
        for aid, p in self.agent_power.items():
            pol = self.agent_policy[aid]
            totals[pol] = totals.get(pol, 0.0) + p
        return totals

    def avg_b_occupancy(self, t_from: float, t_to: float) -> float:
        """Time-weighted average power allocated to coin_B on [t_from, t_to]."""
        if t_to <= t_from:
            raise ValueError("empty interval")
        total = 0.0
        steps = self.occupancy
        for i, (t, _, alloc_b) in enumerate(steps):
            t_next = steps[i + 1][0] if i + 1 < len(steps) else self.duration
            lo = max(t, t_from)
            hi = min(t_next, t_to)
            if hi > lo:
                total += alloc_b * (hi - lo)
        return total / (t_to - t_from)


EVENT_FIELDS = ("time", "chain", "event_type", "difficulty_a", "difficulty_b",
                "r_f_active", "r_b_active")

SERIES_FIELDS = ("timestamp", "hashrate_a", "hashrate_b", "difficulty_a",
                 "difficulty_b", "price_ratio_k")


class _Chain:
    __slots__ = ("coin", "regime", "difficulty", "alloc", "height", "progress",
                 "threshold", "anchor_height", "anchor_time", "window",
                 "first_ts", "last_ts")

    def __init__(self, coin: Coin, regime: DifficultyRegime, difficulty: float):
        self.coin = coin
        self.regime = regime
        self.difficulty = difficulty
        self.alloc = 0.0
        self.height = 0
        self.progress = 0.0
        self.threshold = 1.0
        self.anchor_height = 0
        self.anchor_time = 0.0
        if isinstance(regime, PerBlockWindow):
            maxlen = regime.window + 1
        elif isinstance(regime, EpochWithEda):
            maxlen = regime.eda_window + 1
        else:
            maxlen = 2
        self.window: deque[tuple[float, float]] = deque(maxlen=maxlen)
        self.first_ts: float | None = None
        self.last_ts: float | None = None

    def next_block_time(self, now: float) -> float:
        if self.alloc <= 0.0:
            return _INF
        return now + (self.threshold - self.progress) * self.difficulty / self.alloc

    def advance(self, dt: float):
        if self.alloc > 0.0:
            self.progress += self.alloc / self.difficulty * dt


def _validate_agents(agents: Sequence[MinerAgent]) -> list[MinerAgent]:
    if not agents:
        raise PowerSumMismatch("empty roster")
    seen = set()
    roster = []
    for a in agents:
        if a.id in seen:
            raise ValueError(f"duplicate agent id {a.id!r}")
        seen.add(a.id)
        if not (a.power > 0.0):
            raise NegativePower(f"agent {a.id!r} power must be > 0", field="power")
        if not isinstance(a.policy, Strategy):
            raise ValueError(f"agent {a.id!r} has no policy")
        roster.append(MinerAgent(a.id, a.power, a.policy, a.current_coin))
    total = math.fsum(a.power for a in roster)
    if abs(total - 1.0) > 1e-9:
        raise PowerSumMismatch(f"roster power sums to {total!r}, expected 1")
    return roster


def _fickle_target(d_a: float, d_b: float, k: float, r_f: float, r_b: float) -> Coin:
    if d_b < min(r_f + r_b, k * d_a) or d_b <= r_b:
        return Coin.B
    return Coin.A


def _automatic_target(d_a: float, d_b: float, k: float, current: Coin) -> Coin:
    gain_a = 1.0 / d_a
    gain_b = k / d_b
    if gain_b > gain_a:
        return Coin.B
    if gain_a > gain_b:
        return Coin.A
    return current


def run(
    world: ChainWorld,
    agents: Sequence[MinerAgent],
    regime_a: DifficultyRegime,
    regime_b: DifficultyRegime,
    duration: float,
    seed: int,
    mode: str = "exponential",
    record_events: bool = True,
) -> SimReport:
    """Run the event loop until the horizon and aggregate a report.

    mode "exponential" draws Exp(1) work thresholds per block;
    "deterministic" uses expected intervals exactly.  Identical inputs
    produce identical reports.
    """
    if duration <= 0.0:
        raise ValueError("duration must be positive")
    if mode not in ("exponential", "deterministic"):
        raise ValueError(f"unknown mode {mode!r}")
    exponential = mode == "exponential"
    rng = random.Random(seed)
    roster = _validate_agents(agents)

    r_f_policy = math.fsum(a.power for a in roster if a.policy is Strategy.FICKLE)
    r_b_policy = math.fsum(a.power for a in roster if a.policy is Strategy.B_ONLY)
    switchers = [a for a in roster if a.policy in (Strategy.FICKLE, Strategy.AUTOMATIC)]
    fickle = [a for a in roster if a.policy is Strategy.FICKLE]
    automatic = [a for a in roster if a.policy is Strategy.AUTOMATIC]

    k = world.k
    chains = {
        Coin.A: _Chain(Coin.A, regime_a, world.difficulty_a),
        Coin.B: _Chain(Coin.B, regime_b, world.difficulty_b),
    }

    # Loyalists take their coin; switchers start on A and make their first
    # decision through the regular re-evaluation below, so an opening move
    # to B shows up in the event log like any other switch.
    for a in roster:
        if a.policy is Strategy.A_ONLY:
            a.current_coin = Coin.A
        elif a.policy is Strategy.B_ONLY:
            a.current_coin = Coin.B
        elif a.current_coin is None:
            a.current_coin = Coin.A

    def recompute_alloc():
        chains[Coin.A].alloc = math.fsum(
            a.power for a in roster if a.current_coin is Coin.A
        )
        chains[Coin.B].alloc = math.fsum(
            a.power for a in roster if a.current_coin is Coin.B
        )

    recompute_alloc()

    if exponential:
        for ch in chains.values():
            ch.threshold = rng.expovariate(1.0)

    t = 0.0
    price_changes = list(world.k_schedule.entries) if world.k_schedule else []
    price_idx = 0
    while price_idx < len(price_changes) and price_changes[price_idx][0] <= 0.0:
        k = price_changes[price_idx][1]
        price_idx += 1

    rewards = {a.id: 0.0 for a in roster}
    blocks = {Coin.A: 0, Coin.B: 0}
    difficulty_history = {
        Coin.A: [(0.0, chains[Coin.A].difficulty)],
        Coin.B: [(0.0, chains[Coin.B].difficulty)],
    }
    k_history = [(0.0, k)]
    occupancy = [(0.0, chains[Coin.A].alloc, chains[Coin.B].alloc)]
    events: list[tuple] | None = [] if record_events else None
    fickle_cycles = 0
    b_phase_durations: list[float] = []
    fickle_on_b = False
    b_phase_start: float | None = None
    cycle_mark_first = None
    cycle_mark_last = None

    def log(chain_label: str, kind: str):
        if events is not None:
            events.append((
                t, chain_label, kind,
                chains[Coin.A].difficulty, chains[Coin.B].difficulty,
                r_f_policy, r_b_policy,
            ))

    def reevaluate(price_tick: bool, block_event: bool, difficulty_changed: bool) -> bool:
        """Apply agent policies after an event; True if allocation moved."""
        nonlocal fickle_on_b, b_phase_start, fickle_cycles
        nonlocal cycle_mark_first, cycle_mark_last
        moved = False
        d_a = chains[Coin.A].difficulty
        d_b = chains[Coin.B].difficulty
        if fickle and (difficulty_changed or price_tick):
            target = _fickle_target(d_a, d_b, k, r_f_policy, r_b_policy)
            if fickle[0].current_coin is not target:
                for a in fickle:
                    a.current_coin = target
                moved = True
                log("b" if target is Coin.B else "a", "switch_fickle")
                if target is Coin.B:
                    fickle_on_b = True
                    b_phase_start = t
                    mark = (t, dict(rewards))
                    if cycle_mark_first is None:
                        cycle_mark_first = mark
                    cycle_mark_last = mark
                elif fickle_on_b:
                    fickle_on_b = False
                    if b_phase_start is not None:
                        b_phase_durations.append(t - b_phase_start)
                    fickle_cycles += 1
        if automatic and (difficulty_changed or price_tick or block_event):
            for a in automatic:
                target = _automatic_target(d_a, d_b, k, a.current_coin)
                if target is not a.current_coin:
                    a.current_coin = target
                    moved = True
                    log("b" if target is Coin.B else "a", "switch_auto")
        if moved:
            recompute_alloc()
            occupancy.append((t, chains[Coin.A].alloc, chains[Coin.B].alloc))
        return moved

    def adjust_difficulty(ch: _Chain) -> bool:
        """Regime hook at each block; True when difficulty was updated."""
        regime = ch.regime
        now = ch.last_ts
        if isinstance(regime, PerBlockWindow):
            if len(ch.window) >= 2:
                span = ch.window[-1][0] - ch.window[0][0]
                if span > 0.0:
                    inferred = math.fsum(d for _, d in list(ch.window)[1:]) / span
                    new_d = min(max(inferred, 0.5 * ch.difficulty), 2.0 * ch.difficulty)
                    ch.difficulty = new_d
                    ch.anchor_height = ch.height
                    ch.anchor_time = now
                    difficulty_history[ch.coin].append((now, ch.difficulty))
                    log(ch.coin.value, "difficulty")
                    return True
            return False
        blocks_since = ch.height - ch.anchor_height
        if blocks_since >= regime.n:
            span = now - ch.anchor_time
            if span > 0.0:
                ch.difficulty = blocks_since * ch.difficulty / span
            ch.anchor_height = ch.height
            ch.anchor_time = now
            difficulty_history[ch.coin].append((now, ch.difficulty))
            log(ch.coin.value, "difficulty")
            return True
        if isinstance(regime, EpochWithEda) and len(ch.window) > regime.eda_window:
            span = ch.window[-1][0] - ch.window[0][0]
            if span > regime.eda_threshold:
                ch.difficulty *= regime.eda_factor
                ch.anchor_height = ch.height
                ch.anchor_time = now
                difficulty_history[ch.coin].append((now, ch.difficulty))
                log(ch.coin.value, "eda")
                return True
        return False

    reevaluate(price_tick=False, block_event=True, difficulty_changed=True)
    if chains[Coin.B].alloc == 0.0 and switchers and world.k_schedule is None:
        # Nobody mines coin_B and its difficulty can never decrease, so the
        # switchable power is permanently stuck waiting for a trigger.
        raise ZeroPowerChain("coin_B starts unmined and can never adjust")

    while True:
        t_a = chains[Coin.A].next_block_time(t)
        t_b = chains[Coin.B].next_block_time(t)
        t_price = price_changes[price_idx][0] if price_idx < len(price_changes) else _INF
        t_next = min(t_a, t_b, t_price)
        if t_next > duration or t_next == _INF:
            break
        dt = t_next - t
        chains[Coin.A].advance(dt)
        chains[Coin.B].advance(dt)
        t = t_next

        if t_price <= min(t_a, t_b):
            k = price_changes[price_idx][1]
            price_idx += 1
            k_history.append((t, k))
            log("-", "price")
            reevaluate(price_tick=True, block_event=False, difficulty_changed=False)
            continue

        coin = Coin.A if t_a <= t_b else Coin.B
        ch = chains[coin]
        ch.height += 1
        blocks[coin] += 1
        if ch.first_ts is None:
            ch.first_ts = t
        ch.last_ts = t
        ch.window.append((t, ch.difficulty))
        unit = 1.0 if coin is Coin.A else k
        alloc = ch.alloc
        for a in roster:
            if a.current_coin is coin:
                rewards[a.id] += unit * a.power / alloc
        ch.progress = 0.0
        ch.threshold = rng.expovariate(1.0) if exponential else 1.0
        log(coin.value, "block")
        changed = adjust_difficulty(ch)
        reevaluate(price_tick=False, block_event=True, difficulty_changed=changed)

    # Close an open fickle B-phase for cycle accounting.
    if fickle_on_b and b_phase_start is not None and duration > b_phase_start:
        pass  # open phase: not counted as a completed cycle

    mean_interval = {}
    for coin, ch in chains.items():
        if blocks[coin] >= 2:
            mean_interval[coin] = (ch.last_ts - ch.first_ts) / (blocks[coin] - 1)
        else:
            mean_interval[coin] = None

    return SimReport(
        duration=duration,
        mode=mode,
        seed=seed,
        agent_power={a.id: a.power for a in roster},
        agent_policy={a.id: a.policy for a in roster},
        agent_rewards=rewards,
        blocks=blocks,
        mean_interval=mean_interval,
        difficulty_history=difficulty_history,
        k_history=k_history,
        occupancy=occupancy,
        fickle_cycles=fickle_cycles,
        b_phase_durations=b_phase_durations,
        r_f_policy=r_f_policy,
        r_b_policy=r_b_policy,
        final_difficulty={c: chains[c].difficulty for c in chains},
        events=events,
        cycle_mark_first=cycle_mark_first,
        cycle_mark_last=cycle_mark_last,
    )


def empirical_payoffs(report: SimReport, min_cycles: int = 50) -> dict[Strategy, float]:
    """Per-policy profit density: reward per P_ag per unit power.

    Rosters containing fickle agents are measured between the first and
    last fickle cycle starts (whole cycles only) and require at least
    `min_cycles` completed cycles; loyal-only rosters use the full
    horizon.
    """
    powers = report.policy_power()
    has_fickle = Strategy.FICKLE in powers
    if has_fickle:
        if report.fickle_cycles < min_cycles or report.cycle_mark_first is None:
            raise InsufficientCycles(
                f"{report.fickle_cycles} fickle cycles < required {min_cycles}"
            )
        t0, rew0 = report.cycle_mark_first
        t1, rew1 = report.cycle_mark_last
        if t1 <= t0:
            raise InsufficientCycles("no complete fickle cycle in report")
        span = t1 - t0
        earned = {
            aid: rew1[aid] - rew0[aid] for aid in report.agent_rewards
        }
    else:
        span = report.duration
        earned = dict(report.agent_rewards)

    densities: dict[Strategy, float] = {}
    for policy, total_power in powers.items():
        total = math.fsum(
            earned[aid]
            for aid, pol in report.agent_policy.items()
            if pol is policy
        )
        densities[policy] = total / span / total_power
    return densities


def eda_expected_nde(
    state: MiningState,
    regime: EpochWithEda,
    config: GameConfig,
    seed: int,
    trials: int = 10_000,
) -> float:
    """Expected block count until the coin_B difficulty first decreases.

    Models the slow phase after a difficulty increase: only r_b power
    mines at difficulty r_f + r_b, so blocks arrive with mean interval
    (r_f + r_b) / r_b.  The count is capped by the epoch length n; with
    r_f = 0 no emergency decrease occurs (the difficulty matches the
    power) and the epoch length is returned exactly.
    """
    if state.r_b <= 0.0:
        raise ValueError("eda_expected_nde requires r_b > 0")
    if state.r_f == 0.0:
        return float(regime.n)
    rng = random.Random(seed)
    mean_dt = (state.r_f + state.r_b) / state.r_b
    rate = 1.0 / mean_dt
    w = regime.eda_window
    threshold = regime.eda_threshold
    cap = regime.n
    total = 0
    for _ in range(trials):
        window = deque()
        wsum = 0.0
        n_blocks = cap
        for i in range(1, cap + 1):
            dt = rng.expovariate(rate)
            window.append(dt)
            wsum += dt
            if len(window) > w:
                wsum -= window.popleft()
            if i >= w and wsum > threshold:
                n_blocks = i
                break
        total += n_blocks
    return total / trials


def sample_series(
    report: SimReport,
    step: float = 1.0,
    pag_seconds: int = 600,
    t0_epoch: int = 0,
) -> list[dict]:
    """Sample a run into rows matching the analyzer's input schema.

    Columns: timestamp (epoch seconds, strictly increasing), hashrate_a/b
    (allocated power fractions), difficulty_a/b (normalized units),
    price_ratio_k.  `step` is the sampling interval in P_ag.
    """
    if step <= 0.0 or step * pag_seconds < 1.0:
        raise ValueError("sampling step must map to at least one second")
    rows = []
    occ = report.occupancy
    da = report.difficulty_history[Coin.A]
    db = report.difficulty_history[Coin.B]
    ks = report.k_history
    i_occ = i_da = i_db = i_k = 0
    t = 0.0
    while t < report.duration:
        while i_occ + 1 < len(occ) and occ[i_occ + 1][0] <= t:
            i_occ += 1
        while i_da + 1 < len(da) and da[i_da + 1][0] <= t:
            i_da += 1
        while i_db + 1 < len(db) and db[i_db + 1][0] <= t:
            i_db += 1
        while i_k + 1 < len(ks) and ks[i_k + 1][0] <= t:
            i_k += 1
        rows.append({
            "timestamp": t0_epoch + round(t * pag_seconds),
            "hashrate_a": occ[i_occ][1],
            "hashrate_b": occ[i_occ][2],
            "difficulty_a": da[i_da][1],
            "difficulty_b": db[i_db][1],
            "price_ratio_k": ks[i_k][1],
        })
        t += step
    return rows


def write_series_csv(rows: Iterable[dict], path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SERIES_FIELDS)
        writer.writeheader()
        writer.writerows(rows)


def write_events_csv(report: SimReport, path: str):
    if report.events is None:
        raise ValueError("run() was called with record_events=False")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENT_FIELDS)
        writer.writerows(report.events)
