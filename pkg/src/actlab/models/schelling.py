"""Two-colour Schelling segregation on a torus.

An agent is satisfied when at most ``tolerance`` of its eight Moore
neighbours carry the other colour (vacant cells never count). Unsatisfied
agents relocate either to a uniformly random vacant cell anywhere
(``random_everywhere``) or to a uniformly random vacant Moore neighbour
(``edmonds_hales``; no move if none is vacant).

Uniform choices index the candidates canonically: vacant cells in row-major
order for ``random_everywhere``, vacant neighbours in :data:`grid.MOORE`
order for ``edmonds_hales``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .. import engine
from .. import rng as _rng
from ..engine import ConfigurationError, ModeSpec, RegimeSpec
from ..grid import MOORE, check_dims
from ..rng import RngStream
from .base import Model, check_regime, neighbour_table, placement

MOVEMENT_RULES = ("random_everywhere", "edmonds_hales")
RANDOM_EVERYWHERE = 0
EDMONDS_HALES = 1

MOVES = 0
VACANT = 1


@dataclass(frozen=True)
class SchellingConfig:
    width: int = 50
    height: int = 50
    agents_per_color: int = 1000
    tolerance: int = 3
    movement_rule: str = "random_everywhere"
    neighbourless_share: float = 1.0

    def __post_init__(self):
        check_dims(self.width, self.height)
        if self.agents_per_color < 1:
            raise ConfigurationError("agents_per_color must be >= 1")
        if 2 * self.agents_per_color >= self.width * self.height:
            raise ConfigurationError(
                f"2*agents_per_color={2 * self.agents_per_color} leaves no vacancy on a "
                f"{self.width}x{self.height} grid"
            )
        if not 0 <= self.tolerance <= 8:
            raise ConfigurationError(f"tolerance must be in 0..8, got {self.tolerance}")
        if self.movement_rule not in MOVEMENT_RULES:
            raise ConfigurationError(
                f"movement_rule {self.movement_rule!r} not in {MOVEMENT_RULES}"
            )


# ------------------------------------------------------------------ kernels


@njit(cache=True)
def fenwick_add(tree, i, delta):
    i += 1
    n = tree.shape[0] - 1
    while i <= n:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True)
def fenwick_kth(tree, k):
    """Index of the (0-based) k-th set position."""
    n = tree.shape[0] - 1
    pos = 0
    bit = 1
    while bit * 2 <= n:
        bit *= 2
    while bit > 0:
        nxt = pos + bit
        if nxt <= n and tree[nxt] <= k:
            pos = nxt
            k -= tree[nxt]
        bit //= 2
    return pos


@njit(cache=True)
def fenwick_build(flags):
    n = flags.shape[0]
    tree = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        if flags[i]:
            fenwick_add(tree, i, 1)
    return tree


@njit(cache=True)
def unlike_count(grid, color, nbr, cell, own):
    k = 0
    for j in range(nbr.shape[1]):
        other = grid[nbr[cell, j]]
        if other >= 0 and color[other] != own:
            k += 1
    return k


@njit(cache=True)
def choose_target(grid, vac_tree, n_vacant, nbr, cell, movement_rule, s):
    if movement_rule == 0:
        return fenwick_kth(vac_tree, _rng.below(s, n_vacant))
    m = 0
    for j in range(nbr.shape[1]):
        if grid[nbr[cell, j]] < 0:
            m += 1
    if m == 0:
        return -1
    k = _rng.below(s, m)
    for j in range(nbr.shape[1]):
        c = nbr[cell, j]
        if grid[c] < 0:
            if k == 0:
                return c
            k -= 1
    return -1


@njit(cache=True)
def relocate(reg, grid, vac_tree, counters, slot, target):
    src = reg.cell[slot]
    grid[src] = -1
    grid[target] = slot
    reg.cell[slot] = target
    fenwick_add(vac_tree, src, 1)
    fenwick_add(vac_tree, target, -1)
    counters[MOVES] += 1


@njit(cache=True)
def fire_move(reg, grid, color, vac_tree, counters, nbr, tolerance, movement_rule, slot, s):
    cell = reg.cell[slot]
    if unlike_count(grid, color, nbr, cell, color[slot]) <= tolerance:
        return
    target = choose_target(grid, vac_tree, counters[VACANT], nbr, cell, movement_rule, s)
    if target >= 0:
        relocate(reg, grid, vac_tree, counters, slot, target)


@njit(cache=True)
def async_kernel(reg, grid, color, vac_tree, counters, nbr, tolerance, movement_rule,
                 regime, by_rule, shuffle_rules, shared, rate, s):
    live = engine.prepare_live(reg, regime, rate, s)
    n = live.shape[0]
    incentive = np.zeros(n)
    if regime == 6:
        for i in range(n):
            slot = live[i]
            d = unlike_count(grid, color, nbr, reg.cell[slot], color[slot]) - tolerance
            incentive[i] = max(d, 0)
    ev_s, ev_r = engine.schedule_for(reg, live, incentive, regime, by_rule, shuffle_rules,
                                     shared, 1, rate, s)
    for e in range(ev_s.shape[0]):
        slot = ev_s[e]
        if reg.ids[slot] >= 0:
            fire_move(reg, grid, color, vac_tree, counters, nbr, tolerance, movement_rule, slot, s)
    engine.end_step(reg)


@njit(cache=True)
def sync_kernel(reg, grid, color, vac_tree, counters, prev_grid, prev_cell, prev_tree, nbr,
                tolerance, movement_rule, all_lose, visit, s):
    live = engine.live_slots(reg.ids)
    n = live.shape[0]
    # draws are allocated by ascending agent id, independent of visit order
    choice = np.full(n, -1, dtype=np.int64)
    n_vacant = counters[VACANT]
    for i in range(n):
        slot = live[i]
        cell = prev_cell[slot]
        if unlike_count(prev_grid, color, nbr, cell, color[slot]) > tolerance:
            choice[i] = choose_target(prev_grid, prev_tree, n_vacant, nbr, cell, movement_rule, s)
    claimants = np.empty(n, dtype=np.int64)
    targets = np.empty(n, dtype=np.int64)
    k = 0
    for v in range(n):
        i = visit[v]
        if choice[i] >= 0:
            claimants[k] = reg.ids[live[i]]
            targets[k] = choice[i]
            k += 1
    accepted = engine.resolve_kernel(claimants[:k], targets[:k], all_lose, s)
    for v in range(k):
        if accepted[v]:
            relocate(reg, grid, vac_tree, counters, claimants[v], targets[v])
    engine.end_step(reg)


@njit(cache=True)
def satisfaction_share(grid, color, nbr, cells, neighbourless):
    n = cells.shape[0]
    if n == 0:
        return 1.0
    total = 0.0
    for i in range(n):
        cell = cells[i]
        own = color[grid[cell]]
        same = 0
        occ = 0
        for j in range(nbr.shape[1]):
            other = grid[nbr[cell, j]]
            if other >= 0:
                occ += 1
                if color[other] == own:
                    same += 1
        total += same / occ if occ > 0 else neighbourless
    return total / n


# ------------------------------------------------------------------ model


class SchellingModel(Model):
    name = "schelling"
    rule_names = ("move",)
    metric_names = ("moves", "satisfaction")

    def __init__(self, config: SchellingConfig, rng: RngStream):
        self.config = config
        w, h = config.width, config.height
        self.nbr = neighbour_table(MOORE, w, h)
        n = 2 * config.agents_per_color
        cells = placement(rng, w, h, n)
        self.reg = engine.new_registry(n, cells)
        self.color = np.zeros(n, dtype=np.int8)
        self.color[config.agents_per_color:] = 1
        self.grid = np.full(w * h, -1, dtype=np.int64)
        self.grid[cells] = np.arange(n)
        self.vac_tree = fenwick_build(self.grid < 0)
        self.counters = np.array([0, w * h - n], dtype=np.int64)
        self._movement = MOVEMENT_RULES.index(config.movement_rule)

    @classmethod
    def from_grid(cls, config: SchellingConfig, layout) -> "SchellingModel":
        """Model from an explicit layout: ``layout[row][col]`` is -1 (vacant), 0 or 1.

        Agent ids follow row-major order of the occupied cells.
        """
        layout = np.asarray(layout, dtype=np.int64).reshape(config.height, config.width)
        self = cls.__new__(cls)
        self.config = config
        w, h = config.width, config.height
        self.nbr = neighbour_table(MOORE, w, h)
        flat = layout.ravel()
        cells = np.nonzero(flat >= 0)[0]
        n = cells.shape[0]
        self.reg = engine.new_registry(n, cells)
        self.color = flat[cells].astype(np.int8)
        self.grid = np.full(w * h, -1, dtype=np.int64)
        self.grid[cells] = np.arange(n)
        self.vac_tree = fenwick_build(self.grid < 0)
        self.counters = np.array([0, w * h - n], dtype=np.int64)
        self._movement = MOVEMENT_RULES.index(config.movement_rule)
        return self

    @property
    def move_count(self) -> int:
        return int(self.counters[MOVES])

    def layout(self) -> np.ndarray:
        out = np.full(self.grid.shape[0], -1, dtype=np.int64)
        occ = self.grid >= 0
        out[occ] = self.color[self.grid[occ]]
        return out.reshape(self.config.height, self.config.width)

    def is_satisfied(self, cell: int) -> bool:
        slot = int(self.grid[cell])
        if slot < 0:
            raise engine.ContractViolation(f"cell {cell} is vacant")
        return unlike_count(self.grid, self.color, self.nbr, cell, self.color[slot]) <= self.config.tolerance

    def move_agent(self, cell: int, rng: RngStream) -> bool:
        """Fire the movement rule for the agent at ``cell``; True if it moved."""
        slot = int(self.grid[cell])
        if slot < 0:
            raise engine.ContractViolation(f"cell {cell} is vacant")
        before = self.move_count
        fire_move(self.reg, self.grid, self.color, self.vac_tree, self.counters, self.nbr,
                  self.config.tolerance, self._movement, slot, rng.state)
        return self.move_count > before

    def incentive(self) -> dict[int, float]:
        """Discomfort: differently-coloured neighbours beyond the tolerance."""
        out = {}
        for slot in engine.live_slots(self.reg.ids):
            c = self.reg.cell[slot]
            d = unlike_count(self.grid, self.color, self.nbr, c, self.color[slot])
            out[int(self.reg.ids[slot])] = float(max(d - self.config.tolerance, 0))
        return out

    def async_update(self, regime: RegimeSpec, mode: ModeSpec, rng: RngStream) -> None:
        check_regime(regime)
        async_kernel(self.reg, self.grid, self.color, self.vac_tree, self.counters, self.nbr,
                     self.config.tolerance, self._movement, *self._mode_args(regime, mode),
                     rng.state)

    def buffered_view(self) -> tuple:
        return self.grid.copy(), self.reg.cell.copy(), self.vac_tree.copy()

    def sync_update(self, view, policy, rng, visit_order=None) -> None:
        prev_grid, prev_cell, prev_tree = view
        live = engine.live_slots(self.reg.ids)
        sync_kernel(self.reg, self.grid, self.color, self.vac_tree, self.counters,
                    prev_grid, prev_cell, prev_tree, self.nbr, self.config.tolerance,
                    self._movement, policy == "all-lose", self._visit(visit_order, live),
                    rng.state)

    def satisfaction(self) -> float:
        cells = np.nonzero(self.grid >= 0)[0]
        return float(satisfaction_share(self.grid, self.color, self.nbr, cells,
                                        self.config.neighbourless_share))

    def metrics(self) -> dict[str, float]:
        return {"moves": float(self.move_count), "satisfaction": self.satisfaction()}

    def _state_arrays(self):
        return self.grid, self.color, self.counters
