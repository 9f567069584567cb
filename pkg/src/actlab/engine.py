"""Activation regimes, activation modes and step execution.

Scheduling is a pure policy over the live population: given the agents alive
at the start of a step (listed by ascending agent id) it returns the ordered
(agent, rule) firing events for that step. Models execute the events; the
synchronous regime instead buffers the whole population's decisions and
commits them together after conflict resolution.

Random-draw order within one asynchronous step is fixed:

1. one-time set-up: the persistent order for ``FixedRandomOrder`` (first use
   only) and start times for agents without an event clock
   (``ExponentialWaiting``), both by ascending agent id;
2. the rule-order shuffle (``ShuffledPerStep`` only);
3. the agent orderings, one per rule phase (or one per step);
4. model draws, event by event.
"""
from __future__ import annotations

import enum
import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import numba.core.errors
from numba import njit

from . import rng as _rng
from .rng import RngStream


class ConfigurationError(ValueError):
    """Invalid regime, mode, model or plan configuration."""


class ContractViolation(RuntimeError):
    """A model rule broke the buffered-view discipline of synchronous updating."""


class Regime(enum.IntEnum):
    SYNCHRONOUS = 0
    ORDERED_SWEEP = 1
    FIXED_RANDOM_ORDER = 2
    UNIFORM = 3
    RANDOM = 4
    EXPONENTIAL = 5
    INCENTIVE = 6


REGIME_NAMES = {
    Regime.SYNCHRONOUS: "synchronous",
    Regime.ORDERED_SWEEP: "ordered_sweep",
    Regime.FIXED_RANDOM_ORDER: "fixed_random_order",
    Regime.UNIFORM: "uniform",
    Regime.RANDOM: "random",
    Regime.EXPONENTIAL: "exponential",
    Regime.INCENTIVE: "incentive",
}
_REGIME_BY_NAME = {v: k for k, v in REGIME_NAMES.items()}

CONFLICT_POLICIES = ("random-winner", "all-lose")


@dataclass(frozen=True)
class RegimeSpec:
    """Which agents act, and in which order, within a step.

    Text form: ``synchronous[:random-winner|all-lose]``, ``exponential[:rate]``,
    or one of the bare names in ``REGIME_NAMES``.
    """

    kind: Regime
    conflict_policy: str = "random-winner"
    rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Regime(self.kind))
        if self.conflict_policy not in CONFLICT_POLICIES:
            raise ConfigurationError(
                f"conflict policy {self.conflict_policy!r} not in {CONFLICT_POLICIES}"
            )
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ConfigurationError(f"exponential rate must be positive, got {self.rate}")

    @classmethod
    def parse(cls, text: str) -> "RegimeSpec":
        if isinstance(text, RegimeSpec):
            return text
        name, _, arg = str(text).strip().partition(":")
        if name not in _REGIME_BY_NAME:
            raise ConfigurationError(
                f"unknown regime {name!r}; valid regimes: {', '.join(REGIME_NAMES.values())}"
            )
        kind = _REGIME_BY_NAME[name]
        if not arg:
            return cls(kind)
        if kind == Regime.SYNCHRONOUS:
            return cls(kind, conflict_policy=arg)
        if kind == Regime.EXPONENTIAL:
            try:
                return cls(kind, rate=float(arg))
            except ValueError:
                raise ConfigurationError(f"bad exponential rate {arg!r}") from None
        raise ConfigurationError(f"regime {name!r} takes no argument")

    def __str__(self) -> str:
        name = REGIME_NAMES[self.kind]
        if self.kind == Regime.SYNCHRONOUS and self.conflict_policy != "random-winner":
            return f"{name}:{self.conflict_policy}"
        if self.kind == Regime.EXPONENTIAL and self.rate != 1.0:
            return f"{name}:{self.rate!r}"
        return name


@dataclass(frozen=True)
class ModeSpec:
    """Activation mode plus rule-order policy.

    ``shared_phase_order`` only matters for ``by_rule``: when true one agent
    ordering is drawn per step and reused in every rule phase, otherwise each
    phase draws its own.

    Text form: ``by_agent`` or ``by_rule``, optionally followed by
    ``+shuffled`` and/or ``+shared``.
    """

    by_rule: bool = False
    shuffle_rules: bool = False
    shared_phase_order: bool = False

    @classmethod
    def parse(cls, text: str) -> "ModeSpec":
        if isinstance(text, ModeSpec):
            return text
        head, *flags = str(text).strip().split("+")
        if head not in ("by_agent", "by_rule"):
            raise ConfigurationError(f"unknown mode {head!r}; valid modes: by_agent, by_rule")
        unknown = set(flags) - {"shuffled", "shared"}
        if unknown:
            raise ConfigurationError(
                f"unknown mode flag(s) {sorted(unknown)}; valid flags: shuffled, shared"
            )
        return cls(head == "by_rule", "shuffled" in flags, "shared" in flags)

    def __str__(self) -> str:
        out = "by_rule" if self.by_rule else "by_agent"
        if self.shuffle_rules:
            out += "+shuffled"
        if self.shared_phase_order:
            out += "+shared"
        return out


@dataclass(frozen=True)
class Schedule:
    """Firing events of one step, as (agent id, rule index) pairs."""

    events: tuple[tuple[int, int], ...]
    step_length: int

    def __len__(self) -> int:
        return len(self.events)

    def agents(self) -> list[int]:
        return [a for a, _ in self.events]


@dataclass(frozen=True)
class MoveIntent:
    agent: int
    target: int


# ------------------------------------------------------------------ kernels

# registry meta slots
STEP, NEXT_ID, NEXT_RANK, FIXED_READY, EXTINCT = range(5)

Registry = namedtuple("Registry", "ids cell rank clock meta now")
"""Agent bookkeeping shared by all models.

``ids[slot]`` is the agent id in a storage slot, -1 for a free slot and -2
for an agent that died during the current step (its slot is not reused
until the step ends). ``cell`` holds grid positions, ``rank`` the persistent
random order, ``clock`` the next event time (NaN when not yet started),
``now`` the event-clock time.
"""


def new_registry(capacity: int, cells: Sequence[int]) -> Registry:
    n = len(cells)
    ids = np.full(capacity, -1, dtype=np.int64)
    ids[:n] = np.arange(n)
    cell = np.full(capacity, -1, dtype=np.int64)
    cell[:n] = np.asarray(cells, dtype=np.int64)
    rank = np.zeros(capacity, dtype=np.int64)
    rank[:n] = np.arange(n)
    clock = np.full(capacity, np.nan)
    meta = np.zeros(5, dtype=np.int64)
    meta[NEXT_ID] = n
    meta[NEXT_RANK] = n
    return Registry(ids, cell, rank, clock, meta, np.zeros(1))


@njit(cache=True)
def live_slots(ids):
    idx = np.nonzero(ids >= 0)[0]
    return idx[np.argsort(ids[idx], kind="mergesort")]


@njit(cache=True)
def add_agent(reg, cell):
    """Register a newborn at ``cell``; returns its slot."""
    ids = reg.ids
    for slot in range(ids.shape[0]):
        if ids[slot] == -1:
            ids[slot] = reg.meta[NEXT_ID]
            reg.meta[NEXT_ID] += 1
            reg.cell[slot] = cell
            reg.rank[slot] = reg.meta[NEXT_RANK]
            reg.meta[NEXT_RANK] += 1
            reg.clock[slot] = np.nan
            return slot
    raise RuntimeError("agent registry full")


@njit(cache=True)
def kill_agent(reg, slot):
    reg.ids[slot] = -2
    reg.cell[slot] = -1


@njit(cache=True)
def end_step(reg):
    ids = reg.ids
    for slot in range(ids.shape[0]):
        if ids[slot] == -2:
            ids[slot] = -1
    reg.meta[STEP] += 1


@njit(cache=True)
def _less(ta, ia, tb, ib):
    return ta < tb or (ta == tb and ia < ib)


@njit(cache=True)
def _sift_down(t, ix, pos, n):
    while True:
        left = 2 * pos + 1
        if left >= n:
            return
        m = left
        if left + 1 < n and _less(t[left + 1], ix[left + 1], t[left], ix[left]):
            m = left + 1
        if _less(t[m], ix[m], t[pos], ix[pos]):
            tt = t[m]
            t[m] = t[pos]
            t[pos] = tt
            ii = ix[m]
            ix[m] = ix[pos]
            ix[pos] = ii
            pos = m
        else:
            return


@njit(cache=True)
def exponential_order(clock, now, rate, s, count):
    """Pop ``count`` events from per-agent exponential clocks.

    ``clock[i]`` is agent ``i``'s next event time; each popped agent is
    rescheduled at ``t + Exp(rate)`` and ``now[0]`` advances to ``t``.
    """
    n = clock.shape[0]
    out = np.empty(count, dtype=np.int64)
    if n == 0:
        return out[:0]
    t = clock.copy()
    ix = np.arange(n)
    for pos in range(n // 2 - 1, -1, -1):
        _sift_down(t, ix, pos, n)
    for e in range(count):
        i = ix[0]
        out[e] = i
        now[0] = t[0]
        nt = t[0] + _rng.exponential(s, rate)
        clock[i] = nt
        t[0] = nt
        _sift_down(t, ix, 0, n)
    return out


@njit(cache=True)
def draws_with_replacement_kernel(s, n):
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = _rng.below(s, n)
    return out


@njit(cache=True)
def incentive_kernel(s, incentive):
    for i in range(incentive.shape[0]):
        if not np.isfinite(incentive[i]):
            raise ValueError("non-finite incentive")
    p = _rng.permutation(s, incentive.shape[0])
    o = np.argsort(-incentive[p], kind="mergesort")
    return p[o]


@njit(cache=True)
def order_kernel(regime, sweep_key, rank, incentive, clock, now, rate, s):
    n = sweep_key.shape[0]
    if regime == 1:
        return np.argsort(sweep_key, kind="mergesort")
    if regime == 2:
        return np.argsort(rank, kind="mergesort")
    if regime == 3:
        return _rng.permutation(s, n)
    if regime == 4:
        return draws_with_replacement_kernel(s, n)
    if regime == 5:
        return exponential_order(clock, now, rate, s, n)
    if regime == 6:
        return incentive_kernel(s, incentive)
    raise ValueError("synchronous regime has no activation order")


@njit(cache=True)
def build_kernel(regime, by_rule, shuffle_rules, shared, n_rules, rate,
                 sweep_key, rank, incentive, clock, now, s):
    """Events as (index into live list, rule) arrays."""
    n = sweep_key.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    rules = np.arange(n_rules)
    if shuffle_rules:
        _rng.shuffle(s, rules)
    ev_a = np.empty(n * n_rules, dtype=np.int64)
    ev_r = np.empty(n * n_rules, dtype=np.int64)
    if not by_rule:
        o = order_kernel(regime, sweep_key, rank, incentive, clock, now, rate, s)
        e = 0
        for i in range(n):
            for k in range(n_rules):
                ev_a[e] = o[i]
                ev_r[e] = rules[k]
                e += 1
    else:
        o = order_kernel(regime, sweep_key, rank, incentive, clock, now, rate, s)
        e = 0
        for k in range(n_rules):
            if k > 0 and not shared:
                o = order_kernel(regime, sweep_key, rank, incentive, clock, now, rate, s)
            for i in range(n):
                ev_a[e] = o[i]
                ev_r[e] = rules[k]
                e += 1
    return ev_a, ev_r


@njit(cache=True)
def prepare_live(reg, regime, rate, s):
    """Live slots by ascending id, after first-use regime set-up draws."""
    live = live_slots(reg.ids)
    n = live.shape[0]
    if regime == 2 and reg.meta[FIXED_READY] == 0:
        p = _rng.permutation(s, n)
        for i in range(n):
            reg.rank[live[p[i]]] = i
        reg.meta[NEXT_RANK] = n
        reg.meta[FIXED_READY] = 1
    if regime == 5:
        for i in range(n):
            if np.isnan(reg.clock[live[i]]):
                reg.clock[live[i]] = reg.now[0] + _rng.exponential(s, rate)
    return live


@njit(cache=True)
def schedule_for(reg, live, incentive, regime, by_rule, shuffle_rules, shared, n_rules, rate, s):
    """Step events as (slot, rule) arrays for the given live list."""
    clock = reg.clock[live]
    ev_a, ev_r = build_kernel(regime, by_rule, shuffle_rules, shared, n_rules, rate,
                              reg.cell[live], reg.rank[live], incentive, clock, reg.now, s)
    if regime == 5:
        reg.clock[live] = clock
    return live[ev_a], ev_r


@njit(cache=True)
def resolve_kernel(claimants, targets, all_lose, s):
    """Accept at most one claim per target cell.

    Claims are grouped by target in ascending cell order; within a group
    contenders are ranked by claimant key and, under random-winner, the
    winner is ``below(group size)``.
    """
    k = claimants.shape[0]
    accepted = np.zeros(k, dtype=np.bool_)
    if k == 0:
        return accepted
    by_claimant = np.argsort(claimants, kind="mergesort")
    for i in range(1, k):
        if claimants[by_claimant[i]] == claimants[by_claimant[i - 1]]:
            raise ValueError("duplicate intent from the same agent")
    order = by_claimant[np.argsort(targets[by_claimant], kind="mergesort")]
    start = 0
    while start < k:
        end = start + 1
        while end < k and targets[order[end]] == targets[order[start]]:
            end += 1
        size = end - start
        if size == 1:
            accepted[order[start]] = True
        elif not all_lose:
            accepted[order[start + _rng.below(s, size)]] = True
        start = end
    return accepted


# ------------------------------------------------------------- python API


def permutation(n: int, rng: RngStream) -> list[int]:
    """Uniform random ordering of ``0..n-1`` (draws without replacement)."""
    if n < 0:
        raise ConfigurationError("n must be non-negative")
    if n == 0:
        return []
    return _rng.permutation(rng.state, n).tolist()


def draws_with_replacement(n: int, rng: RngStream) -> list[int]:
    """``n`` independent uniform draws from ``0..n-1``."""
    if n < 0:
        raise ConfigurationError("n must be non-negative")
    return draws_with_replacement_kernel(rng.state, n).tolist()


def ordered_sweep(positions: dict[int, tuple[int, int]], width: int | None = None,
                  height: int | None = None) -> list[int]:
    """Agents in line-by-line order of their (row, col) positions."""
    for agent, pos in positions.items():
        if pos is None or len(pos) != 2:
            raise ConfigurationError(f"agent {agent} has no grid position")
        r, c = pos
        if r < 0 or c < 0 or (height is not None and r >= height) or (width is not None and c >= width):
            raise ConfigurationError(f"agent {agent} is off the grid at {pos}")
    return sorted(positions, key=lambda a: (positions[a][0], positions[a][1]))


class FixedRandomOrder:
    """A random order drawn once, kept for the whole run.

    Newborns join the tail in birth order; dead agents are skipped.
    """

    def __init__(self, initial_agents: Iterable[int], rng: RngStream):
        agents = sorted(initial_agents)
        self._order = [agents[i] for i in permutation(len(agents), rng)]

    def add(self, agent: int) -> None:
        self._order.append(agent)

    def order(self, live: Iterable[int] | None = None) -> list[int]:
        if live is None:
            return list(self._order)
        alive = set(live)
        return [a for a in self._order if a in alive]


def fixed_random_order(initial_agents: Iterable[int], rng: RngStream) -> FixedRandomOrder:
    return FixedRandomOrder(initial_agents, rng)


@dataclass
class EventClock:
    """Per-agent next-event times for exponential waiting times."""

    agents: list[int]
    times: np.ndarray
    rate: float = 1.0
    current_time: np.ndarray = field(default_factory=lambda: np.zeros(1))

    @classmethod
    def start(cls, agents: Iterable[int], rate: float, rng: RngStream) -> "EventClock":
        if not rate > 0:
            raise ConfigurationError("rate must be positive")
        agents = sorted(agents)
        times = np.array([rng.exponential(rate) for _ in agents], dtype=float)
        return cls(agents, times, rate)

    @property
    def now(self) -> float:
        return float(self.current_time[0])


def exponential_schedule(clocks: EventClock, horizon: int, rng: RngStream) -> list[int]:
    """The next ``horizon`` activations in event-time order."""
    idx = exponential_order(clocks.times, clocks.current_time, clocks.rate, rng.state, horizon)
    return [clocks.agents[i] for i in idx]


def incentive_order(incentive: dict[int, float], rng: RngStream) -> list[int]:
    """Agents by descending incentive; ties in uniformly random order."""
    agents = sorted(incentive)
    values = np.array([incentive[a] for a in agents], dtype=float)
    bad = [a for a, v in zip(agents, values) if not math.isfinite(v)]
    if bad:
        raise ConfigurationError(f"non-finite incentive for agent(s) {bad}")
    return [agents[i] for i in incentive_kernel(rng.state, values)]


def build_step_schedule(
    regime: RegimeSpec,
    mode: ModeSpec,
    rule_count: int,
    live_agents: Sequence[int],
    rng: RngStream,
    *,
    positions: dict[int, tuple[int, int]] | None = None,
    width: int | None = None,
    fixed_order: FixedRandomOrder | None = None,
    incentive: dict[int, float] | None = None,
    clocks: EventClock | None = None,
) -> Schedule:
    """Compose a regime with an activation mode into one step's events.

    ``live_agents`` are the agents alive at step start. Regime-specific
    inputs: ``positions`` for the ordered sweep, ``fixed_order`` for the
    persistent random order, ``incentive`` for incentive-based updating and
    ``clocks`` for exponential waiting times (created on first use if
    omitted).
    """
    regime = RegimeSpec.parse(regime)
    mode = ModeSpec.parse(mode)
    if regime.kind == Regime.SYNCHRONOUS:
        raise ConfigurationError("synchronous updating is executed by synchronous_step")
    if rule_count < 1:
        raise ConfigurationError("rule_count must be >= 1")
    agents = sorted(live_agents)
    n = len(agents)
    if n == 0:
        return Schedule((), 0)
    sweep_key = np.zeros(n, dtype=np.int64)
    rank = np.zeros(n, dtype=np.int64)
    inc = np.zeros(n)
    clock = np.zeros(n)
    now = np.zeros(1)
    if regime.kind == Regime.ORDERED_SWEEP:
        if positions is None:
            raise ConfigurationError("ordered sweep needs agent positions")
        ordered = ordered_sweep({a: positions.get(a) for a in agents}, width=width)
        pos_of = {a: i for i, a in enumerate(ordered)}
        sweep_key[:] = [pos_of[a] for a in agents]
    elif regime.kind == Regime.FIXED_RANDOM_ORDER:
        if fixed_order is None:
            raise ConfigurationError("fixed random order must be drawn at t=0 (fixed_random_order)")
        pos_of = {a: i for i, a in enumerate(fixed_order.order())}
        missing = [a for a in agents if a not in pos_of]
        if missing:
            raise ConfigurationError(f"agents {missing} missing from the fixed order")
        rank[:] = [pos_of[a] for a in agents]
    elif regime.kind == Regime.INCENTIVE:
        if incentive is None:
            raise ConfigurationError("incentive-based updating needs incentives")
        inc[:] = [incentive[a] for a in agents]
        if not np.all(np.isfinite(inc)):
            raise ConfigurationError("non-finite incentive")
    elif regime.kind == Regime.EXPONENTIAL:
        if clocks is None:
            clocks = EventClock.start(agents, regime.rate, rng)
        if sorted(clocks.agents) != agents:
            raise ConfigurationError("event clocks do not match the live population")
        where = {a: i for i, a in enumerate(clocks.agents)}
        clock[:] = [clocks.times[where[a]] for a in agents]
        now[0] = clocks.now
    ev_a, ev_r = build_kernel(int(regime.kind), mode.by_rule, mode.shuffle_rules,
                              mode.shared_phase_order, rule_count, regime.rate,
                              sweep_key, rank, inc, clock, now, rng.state)
    if regime.kind == Regime.EXPONENTIAL:
        for i, a in enumerate(agents):
            clocks.times[where[a]] = clock[i]
        clocks.current_time[0] = now[0]
    events = tuple((agents[a], int(r)) for a, r in zip(ev_a.tolist(), ev_r.tolist()))
    return Schedule(events, n)


def resolve_conflicts(intents: Sequence[MoveIntent], policy: str, rng: RngStream
                      ) -> tuple[list[MoveIntent], list[MoveIntent]]:
    """Split simultaneous move intents into (accepted, rejected)."""
    if policy not in CONFLICT_POLICIES:
        raise ConfigurationError(f"conflict policy {policy!r} not in {CONFLICT_POLICIES}")
    agents = [i.agent for i in intents]
    if len(set(agents)) != len(agents):
        raise ConfigurationError("duplicate intent from the same agent")
    ok = resolve_kernel(np.array(agents, dtype=np.int64),
                        np.array([i.target for i in intents], dtype=np.int64),
                        policy == "all-lose", rng.state)
    accepted = [i for i, a in zip(intents, ok) if a]
    rejected = [i for i, a in zip(intents, ok) if not a]
    return accepted, rejected


def synchronous_step(model, conflict_policy: str, rng: RngStream, visit_order=None):
    """Decide every agent's action against the t-1 state, then commit at once.

    The model receives a read-only snapshot of its state; any attempt to
    write to it raises :class:`ContractViolation`. ``visit_order`` permutes
    the internal agent iteration (the committed state does not depend on it).
    """
    if conflict_policy not in CONFLICT_POLICIES:
        raise ConfigurationError(f"conflict policy {conflict_policy!r} not in {CONFLICT_POLICIES}")
    view = model.buffered_view()
    for arr in view:
        if isinstance(arr, np.ndarray):
            arr.flags.writeable = False
    try:
        model.sync_update(view, conflict_policy, rng, visit_order)
    except (ValueError, numba.core.errors.TypingError) as exc:
        # numpy refuses the write at run time, numba at compile time
        if "read-only" in str(exc) or "readonly" in str(exc):
            raise ContractViolation(f"model wrote to the buffered t-1 view: {exc}") from exc
        raise
    return model.metrics()


def step(model, regime: RegimeSpec | str, mode: ModeSpec | str, rng: RngStream) -> dict[str, float]:
    """Advance ``model`` by one step and return its metrics."""
    regime = RegimeSpec.parse(regime)
    mode = ModeSpec.parse(mode)
    if regime.kind == Regime.SYNCHRONOUS:
        return synchronous_step(model, regime.conflict_policy, rng)
    model.async_update(regime, mode, rng)
    return model.metrics()
