"""State-flow simulation in the (r_f, r_b) simplex.

The flow discretizes the qualitative zone dynamics: zone 1 moves (-,-),
zone 2 moves (-,+), zone 3 moves (+,-).  On a boundary the tied
strategies exchange no power and the strictly-worst group drives the
remaining axis, so boundary_13 moves (0,-) and boundary_23 moves (0,+).
Steps are L1-normalized (a diagonal move splits the migration rate
across both axes) so consecutive states never differ by more than the
rate, and are clamped to {r_f >= 0, r_b >= c_stick, r_f + r_b <= 1};
movement continues on unclamped axes.

Piecewise-constant step-indexed schedules override k and c_stick to
model price pumps and hash-war faction surges.
"""

from __future__ import annotations

import bisect
import csv
import json
import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

from .core import GameConfig, MiningState, Strategy, Zone, coexist_rb
from .equilibrium import ZONE_TOL, finite_deviation, solve_alpha, solve_beta, zone_of


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant values keyed by step index or P_ag time.

    `value_at(x, default)` returns the value of the last entry at or
    before x, or `default` before the first entry.  Linear interpolation
    is deliberately not offered.
    """

    entries: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ordered = tuple(sorted(self.entries))
        object.__setattr__(self, "entries", ordered)
        object.__setattr__(self, "_ats", tuple(at for at, _ in ordered))

    def value_at(self, x: float, default: float) -> float:
        i = bisect.bisect_right(self._ats, x)
        if i == 0:
            return default
        return self.entries[i - 1][1]

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "Schedule":
        return cls(tuple((float(a), float(v)) for a, v in pairs))

    @classmethod
    def from_file(cls, path: str) -> "Schedule":
        """Load from JSON ([[at, value], ...]) or two-column CSV."""
        if path.endswith(".json"):
            with open(path) as fh:
                return cls.from_pairs(json.load(fh))
        with open(path, newline="") as fh:
            rows = []
            for row in csv.reader(fh):
                if not row or row[0].strip().lower() in ("at", "step", "time", "t"):
                    continue
                rows.append((float(row[0]), float(row[1])))
        return cls.from_pairs(rows)


@dataclass(frozen=True)
class FlowConfig:
    """Knobs of the discretized flow.

    The migration rate is the total power fraction moved per step; the
    zone dynamics fix directions only, not speeds, so the rate is a free
    sensitivity knob.
    """

    migration_rate: float = 0.001
    max_steps: int = 1_000_000
    convergence_eps: float = 0.005
    k_schedule: Schedule | None = None
    c_stick_schedule: Schedule | None = None

    def __post_init__(self):
        if not (0.0 < self.migration_rate <= 0.1):
            raise ValueError(f"migration_rate must be in (0, 0.1], got {self.migration_rate}")
        if self.convergence_eps <= 0.0:
            raise ValueError("convergence_eps must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


class Outcome(Enum):
    COEXISTENCE = "coexistence"
    LOYAL_LACK = "loyal_lack"
    UNDECIDED = "undecided"


@dataclass
class Trajectory:
    """Recorded flow run: one state/zone/k/c_stick row per step."""

    states: list[MiningState]
    zones: list[Zone]
    ks: list[float]
    c_sticks: list[float]
    outcome: Outcome
    steps_used: int


_DIRECTIONS = {
    Zone.ZONE1: (-1, -1),
    Zone.ZONE2: (-1, 1),
    Zone.ZONE3: (1, -1),
    Zone.BOUNDARY13: (0, -1),
    Zone.BOUNDARY23: (0, 1),
    Zone.COEXIST: (0, 0),
}


def direction(state: MiningState, config: GameConfig, tol: float = ZONE_TOL):
    """Signed movement pair in {-1, 0, +1}^2 for the state's zone."""
    return _DIRECTIONS[zone_of(state, config, tol)]


def _step(state: MiningState, zone: Zone, rate: float, c_stick: float) -> MiningState:
    dx, dy = _DIRECTIONS[zone]
    active = abs(dx) + abs(dy)
    if active == 0:
        return state
    h = rate / active
    r_f = state.r_f + dx * h
    r_b = state.r_b + dy * h
    r_f = max(r_f, 0.0)
    r_b = max(r_b, c_stick)
    # Cap the sum by trimming whichever axis moved outward.
    if r_f + r_b > 1.0:
        if dx > 0:
            r_f = max(0.0, 1.0 - r_b)
        else:
            r_b = max(c_stick, 1.0 - r_f)
            r_f = min(r_f, 1.0 - r_b)
    return MiningState(r_f, r_b)


def step_flow(state: MiningState, flow: FlowConfig, config: GameConfig) -> MiningState:
    """One Euler step of the zone flow with clamping."""
    return _step(state, zone_of(state, config), flow.migration_rate, config.c_stick)


def _lack_target(config: GameConfig, cache: dict):
    """Lack-of-loyal-miners target for the active (k, c_stick); cached."""
    key = (config.k, config.n_in, config.n_de, config.c_stick)
    if key not in cache:
        c = config.c_stick
        if c == 0.0:
            cache[key] = ("segment", config.k)
        else:
            alpha = solve_alpha(config)
            top = coexist_rb(config.k)
            if c <= alpha:
                cache[key] = ("point", MiningState(1.0 - c, c))
            elif c <= top:
                cache[key] = ("point", MiningState(solve_beta(config), c))
            else:
                cache[key] = ("point", MiningState(0.0, c))
    return cache[key]


def simulate_flow(initial: MiningState, flow: FlowConfig, config: GameConfig) -> Trajectory:
    """Iterate the flow until it settles at an equilibrium or gives up.

    Outcomes: COEXISTENCE within convergence_eps (max-norm) of
    (0, k/(1+k)); LOYAL_LACK within eps of the r_b = c_stick equilibrium
    (point, or the axis segment for c_stick = 0); UNDECIDED at
    max_steps.  Schedules may keep a state moving forever, so running
    out of steps is an outcome, not an error.
    """
    states = [initial]
    zones: list[Zone] = []
    ks: list[float] = []
    c_sticks: list[float] = []
    lack_cache: dict = {}
    state = initial
    eps = flow.convergence_eps
    outcome = Outcome.UNDECIDED
    steps = 0

    for t in range(flow.max_steps):
        k_t = flow.k_schedule.value_at(t, config.k) if flow.k_schedule else config.k
        c_t = (
            flow.c_stick_schedule.value_at(t, config.c_stick)
            if flow.c_stick_schedule
            else config.c_stick
        )
        cfg = config if (k_t == config.k and c_t == config.c_stick) else replace(config, k=k_t, c_stick=c_t)

        # A c_stick surge lifts the floor under the current state.
        if state.r_b < c_t:
            r_b = min(c_t, 1.0)
            state = MiningState(min(state.r_f, 1.0 - r_b), r_b)
            states[-1] = state

        zone = zone_of(state, cfg)
        zones.append(zone)
        ks.append(k_t)
        c_sticks.append(c_t)
        steps = t

        if cfg.c_stick <= coexist_rb(k_t):
            top = coexist_rb(k_t)
            if state.r_f <= eps and abs(state.r_b - top) <= eps:
                outcome = Outcome.COEXISTENCE
                break
        kind, target = _lack_target(cfg, lack_cache)
        if kind == "segment":
            if state.r_b <= eps and state.r_f >= target - eps:
                outcome = Outcome.LOYAL_LACK
                break
        else:
            if abs(state.r_f - target.r_f) <= eps and abs(state.r_b - target.r_b) <= eps:
                outcome = Outcome.LOYAL_LACK
                break

        nxt = _step(state, zone, flow.migration_rate, c_t)
        if nxt == state:
            # Pinned with nowhere to go and not near a target: give up early.
            break
        if (
            flow.k_schedule is None
            and flow.c_stick_schedule is None
            and len(states) >= 2
            and nxt == states[-2]
        ):
            # Exact period-2 oscillation across a boundary; with constant
            # parameters it would repeat until max_steps, so stop now.
            break
        state = nxt
        states.append(state)

    if len(states) > len(zones):
        # Ran out of steps with one trailing state; keep the lists matched.
        try:
            zones.append(zone_of(states[-1], config))
        except Exception:
            zones.append(zones[-1])
        ks.append(ks[-1] if ks else config.k)
        c_sticks.append(c_sticks[-1] if c_sticks else config.c_stick)

    return Trajectory(states, zones, ks, c_sticks, outcome, steps)


def automatic_threshold(config: GameConfig) -> float:
    """Automatic-mining power fraction beyond which the loyal miners drain.

    A state with r_f >= k cannot sit in zone 2, so once a k-fraction of
    the total power switches coins automatically the state moves toward
    r_b = c_stick.
    """
    return config.k


def assignment_state(assignment: Sequence[Strategy], config: GameConfig) -> MiningState:
    """(r_f, r_b) implied by a per-player strategy assignment.

    The faction's c_stick always counts toward r_b; `assignment` aligns
    with config.powers and may not contain AUTOMATIC.
    """
    if len(assignment) != len(config.powers):
        raise ValueError(
            f"assignment length {len(assignment)} != player count {len(config.powers)}"
        )
    r_f = 0.0
    r_b = config.c_stick
    for strategy, c_i in zip(assignment, config.powers):
        if strategy is Strategy.FICKLE:
            r_f += c_i
        elif strategy is Strategy.B_ONLY:
            r_b += c_i
        elif strategy is not Strategy.A_ONLY:
            raise ValueError("assignments use FICKLE / A_ONLY / B_ONLY only")
    return MiningState(r_f, min(r_b, 1.0))


def step_best_response(
    assignment: Sequence[Strategy], config: GameConfig, seed: int | random.Random
) -> list[Strategy]:
    """One best-response update: a uniformly random player re-optimizes.

    Pass an int seed for a deterministic single step, or a
    random.Random to advance one shared stream across repeated calls.
    Ties keep the player's current strategy.
    """
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    state = assignment_state(assignment, config)
    updated = list(assignment)
    i = rng.randrange(len(updated))
    report = finite_deviation(state, config.powers[i], updated[i], config)
    updated[i] = report.best_strategy
    return updated
