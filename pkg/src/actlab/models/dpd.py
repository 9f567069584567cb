"""Demographic prisoner's dilemma on a torus.

Agents carry a fixed strategy (C or D), wealth and age, and fire three
rules in declared order: move to a random vacant von Neumann neighbour,
play one PD round with every von Neumann neighbour, give birth when wealth
reaches the threshold. Bankrupt agents (wealth < 0) die; with an age limit,
agents older than ``max_age`` die too.

Death timing: under ``by_agent`` the acting agent and the partners it just
played are checked for bankruptcy at the end of its rule block; the full
death sweep (bankruptcy, then ageing) runs at the end of every step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .. import engine
from .. import rng as _rng
from ..engine import ConfigurationError, ModeSpec, RegimeSpec
from ..grid import VON_NEUMANN, check_dims
from ..rng import RngStream
from .base import Model, check_regime, neighbour_table, placement

COOPERATE, DEFECT = 0, 1

# mutual-cooperation payoff, age limit, mutation rate
SETTINGS = {
    1: dict(reward=5.0, max_age=None, mutation_rate=0.0),
    2: dict(reward=5.0, max_age=100, mutation_rate=0.0),
    3: dict(reward=2.0, max_age=100, mutation_rate=0.0),
    4: dict(reward=1.0, max_age=100, mutation_rate=0.0),
    5: dict(reward=5.0, max_age=100, mutation_rate=0.5),
}

MOVE, PLAY, BIRTH = 0, 1, 2
BIRTHS, DEATHS = 0, 1


@dataclass(frozen=True)
class DpdConfig:
    width: int = 30
    height: int = 30
    initial_agents: int = 100
    initial_coop_fraction: float = 0.5
    initial_wealth: float = 6.0
    # payoff_matrix[own][opponent], index 0 = C, 1 = D
    payoff_matrix: tuple = ((5.0, -6.0), (6.0, -5.0))
    max_age: int | None = None
    mutation_rate: float = 0.0
    birth_threshold: float = 10.0
    child_endowment: float = 6.0

    def __post_init__(self):
        check_dims(self.width, self.height)
        pm = tuple(tuple(float(v) for v in row) for row in self.payoff_matrix)
        if len(pm) != 2 or any(len(row) != 2 for row in pm):
            raise ConfigurationError("payoff_matrix must be 2x2")
        object.__setattr__(self, "payoff_matrix", pm)
        if not 0 <= self.initial_agents <= self.width * self.height:
            raise ConfigurationError("initial_agents must fit on the grid")
        if not 0.0 <= self.initial_coop_fraction <= 1.0:
            raise ConfigurationError("initial_coop_fraction must be in [0, 1]")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigurationError("mutation_rate must be in [0, 1]")
        if self.child_endowment > self.birth_threshold:
            raise ConfigurationError("child_endowment must not exceed birth_threshold")
        if self.max_age is not None and self.max_age < 0:
            raise ConfigurationError("max_age must be non-negative or None")

    @classmethod
    def setting(cls, number: int, **overrides) -> "DpdConfig":
        """Preset for one of the five classic settings."""
        if number not in SETTINGS:
            raise ConfigurationError(f"setting must be one of {sorted(SETTINGS)}, got {number}")
        p = SETTINGS[number]
        values = dict(
            payoff_matrix=((p["reward"], -6.0), (6.0, -5.0)),
            max_age=p["max_age"],
            mutation_rate=p["mutation_rate"],
        )
        values.update(overrides)
        return cls(**values)


# ------------------------------------------------------------------ kernels


@njit(cache=True)
def vacant_neighbours(grid, nbr, cell, out):
    m = 0
    for j in range(nbr.shape[1]):
        c = nbr[cell, j]
        if grid[c] < 0:
            out[m] = c
            m += 1
    return m


@njit(cache=True)
def give_birth(reg, grid, strategy, wealth, age, counters, parent, target, flip, endowment):
    child = engine.add_agent(reg, target)
    grid[target] = child
    s = strategy[parent]
    strategy[child] = 1 - s if flip else s
    wealth[child] = endowment
    wealth[parent] -= endowment
    age[child] = 0
    counters[BIRTHS] += 1


@njit(cache=True)
def fire(reg, grid, strategy, wealth, age, counters, nbr, payoff, mutation_rate,
         threshold, endowment, slot, rule, touched, n_touched, buf, s):
    cell = reg.cell[slot]
    if rule == MOVE:
        m = vacant_neighbours(grid, nbr, cell, buf)
        if m > 0:
            target = buf[_rng.below(s, m)]
            grid[cell] = -1
            grid[target] = slot
            reg.cell[slot] = target
    elif rule == PLAY:
        me = strategy[slot]
        for j in range(nbr.shape[1]):
            other = grid[nbr[cell, j]]
            if other >= 0:
                you = strategy[other]
                wealth[slot] += payoff[me, you]
                wealth[other] += payoff[you, me]
                touched[n_touched] = other
                n_touched += 1
    else:
        if wealth[slot] >= threshold:
            m = vacant_neighbours(grid, nbr, cell, buf)
            if m > 0:
                target = buf[_rng.below(s, m)]
                flip = mutation_rate > 0.0 and _rng.uniform(s) < mutation_rate
                give_birth(reg, grid, strategy, wealth, age, counters, slot, target, flip, endowment)
    return n_touched


@njit(cache=True)
def kill(reg, grid, counters, slot):
    grid[reg.cell[slot]] = -1
    engine.kill_agent(reg, slot)
    counters[DEATHS] += 1


@njit(cache=True)
def death_sweep(reg, grid, wealth, age, counters, max_age):
    live = engine.live_slots(reg.ids)
    for i in range(live.shape[0]):
        slot = live[i]
        if wealth[slot] < 0:
            kill(reg, grid, counters, slot)
            continue
        age[slot] += 1
        if max_age >= 0 and age[slot] > max_age:
            kill(reg, grid, counters, slot)
    if engine.live_slots(reg.ids).shape[0] == 0:
        reg.meta[engine.EXTINCT] = 1
    engine.end_step(reg)


@njit(cache=True)
def async_kernel(reg, grid, strategy, wealth, age, counters, nbr, payoff, max_age,
                 mutation_rate, threshold, endowment,
                 regime, by_rule, shuffle_rules, shared, rate, s):
    live = engine.prepare_live(reg, regime, rate, s)
    n = live.shape[0]
    incentive = np.zeros(n)
    if regime == 6:
        for i in range(n):
            incentive[i] = -wealth[live[i]]
    ev_s, ev_r = engine.schedule_for(reg, live, incentive, regime, by_rule, shuffle_rules,
                                     shared, 3, rate, s)
    touched = np.empty(4 * 3, dtype=np.int64)
    buf = np.empty(nbr.shape[1], dtype=np.int64)
    n_touched = 0
    for e in range(ev_s.shape[0]):
        slot = ev_s[e]
        if reg.ids[slot] >= 0:
            n_touched = fire(reg, grid, strategy, wealth, age, counters, nbr, payoff,
                             mutation_rate, threshold, endowment, slot, ev_r[e],
                             touched, n_touched, buf, s)
        if by_rule:
            n_touched = 0
        elif e % 3 == 2:
            if reg.ids[slot] >= 0 and wealth[slot] < 0:
                kill(reg, grid, counters, slot)
            for t in range(n_touched):
                other = touched[t]
                if reg.ids[other] >= 0 and wealth[other] < 0:
                    kill(reg, grid, counters, other)
            n_touched = 0
    death_sweep(reg, grid, wealth, age, counters, max_age)


@njit(cache=True)
def sync_kernel(reg, grid, strategy, wealth, age, counters, prev_grid, prev_cell, prev_wealth,
                nbr, payoff, max_age, mutation_rate, threshold, endowment, all_lose, visit, s):
    live = engine.live_slots(reg.ids)
    n = live.shape[0]
    buf = np.empty(nbr.shape[1], dtype=np.int64)
    move_to = np.full(n, -1, dtype=np.int64)
    birth_to = np.full(n, -1, dtype=np.int64)
    flip = np.zeros(n, dtype=np.bool_)
    # draws by ascending agent id: move choice, then birth cell and mutation
    for i in range(n):
        slot = live[i]
        cell = prev_cell[slot]
        m = vacant_neighbours(prev_grid, nbr, cell, buf)
        if m > 0:
            move_to[i] = buf[_rng.below(s, m)]
            if prev_wealth[slot] >= threshold:
                birth_to[i] = buf[_rng.below(s, m)]
                flip[i] = mutation_rate > 0.0 and _rng.uniform(s) < mutation_rate
    # play against t-1 neighbours
    delta = np.zeros(wealth.shape[0])
    for v in range(n):
        slot = live[visit[v]]
        me = strategy[slot]
        cell = prev_cell[slot]
        for j in range(nbr.shape[1]):
            other = prev_grid[nbr[cell, j]]
            if other >= 0:
                you = strategy[other]
                delta[slot] += payoff[me, you]
                delta[other] += payoff[you, me]
    for i in range(n):
        wealth[live[i]] = prev_wealth[live[i]] + delta[live[i]]
    # claims on cells: key 2*id for a move, 2*id+1 for a birth
    claim_key = np.empty(2 * n, dtype=np.int64)
    claim_cell = np.empty(2 * n, dtype=np.int64)
    claim_pos = np.empty(2 * n, dtype=np.int64)
    k = 0
    for v in range(n):
        i = visit[v]
        agent = reg.ids[live[i]]
        if move_to[i] >= 0:
            claim_key[k] = 2 * agent
            claim_cell[k] = move_to[i]
            claim_pos[k] = i
            k += 1
        if birth_to[i] >= 0:
            claim_key[k] = 2 * agent + 1
            claim_cell[k] = birth_to[i]
            claim_pos[k] = i
            k += 1
    accepted = engine.resolve_kernel(claim_key[:k], claim_cell[:k], all_lose, s)
    for c in range(k):
        if accepted[c] and claim_key[c] % 2 == 0:
            slot = live[claim_pos[c]]
            grid[reg.cell[slot]] = -1
    for c in range(k):
        if accepted[c] and claim_key[c] % 2 == 0:
            slot = live[claim_pos[c]]
            grid[claim_cell[c]] = slot
            reg.cell[slot] = claim_cell[c]
    # births in ascending parent id so newborn ids are canonical
    births = np.nonzero(accepted & (claim_key[:k] % 2 == 1))[0]
    births = births[np.argsort(claim_key[births], kind="mergesort")]
    for b in births:
        i = claim_pos[b]
        give_birth(reg, grid, strategy, wealth, age, counters, live[i], claim_cell[b], flip[i],
                   endowment)
    death_sweep(reg, grid, wealth, age, counters, max_age)


# ------------------------------------------------------------------ model


class DemographicPD(Model):
    name = "dpd"
    rule_names = ("move", "play", "birth")
    metric_names = ("cooperators", "defectors", "extinct")

    def __init__(self, config: DpdConfig, rng: RngStream):
        self.config = config
        w, h = config.width, config.height
        self.nbr = neighbour_table(VON_NEUMANN, w, h)
        n = config.initial_agents
        cap = 2 * w * h
        cells = placement(rng, w, h, n)
        self.reg = engine.new_registry(cap, cells)
        self.grid = np.full(w * h, -1, dtype=np.int64)
        self.grid[cells] = np.arange(n)
        self.strategy = np.zeros(cap, dtype=np.int8)
        n_coop = int(round(config.initial_coop_fraction * n))
        self.strategy[n_coop:n] = DEFECT
        self.wealth = np.zeros(cap)
        self.wealth[:n] = config.initial_wealth
        self.age = np.zeros(cap, dtype=np.int64)
        self.counters = np.zeros(2, dtype=np.int64)
        self.payoff = np.array(config.payoff_matrix, dtype=float)
        if n == 0:
            self.reg.meta[engine.EXTINCT] = 1

    @classmethod
    def from_agents(cls, config: DpdConfig, agents) -> "DemographicPD":
        """Model holding explicit agents: iterable of (cell, strategy, wealth, age)."""
        self = cls.__new__(cls)
        self.config = config
        w, h = config.width, config.height
        self.nbr = neighbour_table(VON_NEUMANN, w, h)
        agents = list(agents)
        cap = 2 * w * h
        cells = [a[0] for a in agents]
        self.reg = engine.new_registry(cap, cells)
        self.grid = np.full(w * h, -1, dtype=np.int64)
        self.strategy = np.zeros(cap, dtype=np.int8)
        self.wealth = np.zeros(cap)
        self.age = np.zeros(cap, dtype=np.int64)
        for i, (cell, strat, wealth, age) in enumerate(agents):
            if self.grid[cell] >= 0:
                raise ConfigurationError(f"two agents on cell {cell}")
            self.grid[cell] = i
            self.strategy[i] = strat
            self.wealth[i] = wealth
            self.age[i] = age
        self.counters = np.zeros(2, dtype=np.int64)
        self.payoff = np.array(config.payoff_matrix, dtype=float)
        if not agents:
            self.reg.meta[engine.EXTINCT] = 1
        return self

    @property
    def extinct(self) -> bool:
        return bool(self.reg.meta[engine.EXTINCT])

    def _max_age(self) -> int:
        return -1 if self.config.max_age is None else int(self.config.max_age)

    def slot_of(self, agent_id: int) -> int:
        hit = np.nonzero(self.reg.ids == agent_id)[0]
        if hit.size == 0:
            raise KeyError(f"agent {agent_id} is not alive")
        return int(hit[0])

    def agent(self, agent_id: int) -> dict:
        slot = self.slot_of(agent_id)
        return dict(id=agent_id, cell=int(self.reg.cell[slot]),
                    strategy="CD"[self.strategy[slot]], wealth=float(self.wealth[slot]),
                    age=int(self.age[slot]))

    def fire_rule(self, agent_id: int, rule: str, rng: RngStream) -> None:
        """Fire one named rule for a live agent (no death check)."""
        slot = self.slot_of(agent_id)
        touched = np.empty(12, dtype=np.int64)
        buf = np.empty(4, dtype=np.int64)
        fire(self.reg, self.grid, self.strategy, self.wealth, self.age, self.counters, self.nbr,
             self.payoff, self.config.mutation_rate, self.config.birth_threshold,
             self.config.child_endowment, slot, self.rule_names.index(rule), touched, 0, buf,
             rng.state)

    def death_sweep(self) -> None:
        death_sweep(self.reg, self.grid, self.wealth, self.age, self.counters, self._max_age())

    def total_wealth(self) -> float:
        live = engine.live_slots(self.reg.ids)
        return float(self.wealth[live].sum())

    def async_update(self, regime: RegimeSpec, mode: ModeSpec, rng: RngStream) -> None:
        check_regime(regime)
        c = self.config
        async_kernel(self.reg, self.grid, self.strategy, self.wealth, self.age, self.counters,
                     self.nbr, self.payoff, self._max_age(), c.mutation_rate, c.birth_threshold,
                     c.child_endowment, *self._mode_args(regime, mode), rng.state)

    def buffered_view(self) -> tuple:
        return self.grid.copy(), self.reg.cell.copy(), self.wealth.copy()

    def sync_update(self, view, policy, rng, visit_order=None) -> None:
        prev_grid, prev_cell, prev_wealth = view
        c = self.config
        live = engine.live_slots(self.reg.ids)
        sync_kernel(self.reg, self.grid, self.strategy, self.wealth, self.age, self.counters,
                    prev_grid, prev_cell, prev_wealth, self.nbr, self.payoff, self._max_age(),
                    c.mutation_rate, c.birth_threshold, c.child_endowment, policy == "all-lose",
                    self._visit(visit_order, live), rng.state)

    def metrics(self) -> dict[str, float]:
        live = engine.live_slots(self.reg.ids)
        coop = int(np.count_nonzero(self.strategy[live] == COOPERATE))
        return {
            "cooperators": float(coop),
            "defectors": float(live.shape[0] - coop),
            "extinct": float(self.extinct),
        }

    def _state_arrays(self):
        live = engine.live_slots(self.reg.ids)
        return (self.grid, self.strategy[live], self.wealth[live], self.age[live], self.counters)
