"""Nowak-May spatial prisoner's dilemma.

One player per cell of a fully occupied torus. A player's score is the sum
of its one-shot payoffs (R=1, T=b, S=P=0) against its eight Moore
neighbours, plus itself when self-play is on. On activation a player adopts
the strategy of the best scorer among itself and its neighbours; on a tie
between strategies it keeps its own.

Asynchronously the scores are recomputed from the current grid at each
activation; synchronously all cells score and update from the t-1 grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .. import engine
from ..engine import ConfigurationError, ModeSpec, RegimeSpec
from ..grid import MOORE, check_dims
from ..rng import RngStream
from .base import Model, check_regime, neighbour_table, placement

COOPERATE, DEFECT = 0, 1


@dataclass(frozen=True)
class SpatialPdConfig:
    width: int = 50
    height: int = 50
    b: float = 1.85
    initial_defector_fraction: float = 0.1
    include_self_play: bool = True

    def __post_init__(self):
        check_dims(self.width, self.height)
        if not self.b > 1:
            raise ConfigurationError(f"temptation b must exceed 1, got {self.b}")
        if not 0.0 <= self.initial_defector_fraction <= 1.0:
            raise ConfigurationError("initial_defector_fraction must be in [0, 1]")


@njit(cache=True)
def score(strategy, nbr, cell, b, self_play):
    me = strategy[cell]
    total = 0.0
    if self_play and me == 0:
        total += 1.0
    for j in range(nbr.shape[1]):
        if strategy[nbr[cell, j]] == 0:
            total += 1.0 if me == 0 else b
    return total


@njit(cache=True)
def best_strategy(strategy, scores, nbr, cell):
    own = strategy[cell]
    best_own = scores[cell]
    best_other = -1.0
    for j in range(nbr.shape[1]):
        c = nbr[cell, j]
        if strategy[c] == own:
            best_own = max(best_own, scores[c])
        else:
            best_other = max(best_other, scores[c])
    return 1 - own if best_other > best_own else own


@njit(cache=True)
def local_scores(strategy, nbr, cell, b, self_play, scores):
    scores[cell] = score(strategy, nbr, cell, b, self_play)
    for j in range(nbr.shape[1]):
        c = nbr[cell, j]
        scores[c] = score(strategy, nbr, c, b, self_play)


@njit(cache=True)
def fire(strategy, nbr, cell, b, self_play, scores):
    local_scores(strategy, nbr, cell, b, self_play, scores)
    strategy[cell] = best_strategy(strategy, scores, nbr, cell)


@njit(cache=True)
def incentive_of(strategy, nbr, cell, b, self_play, scores):
    local_scores(strategy, nbr, cell, b, self_play, scores)
    gain = 0.0
    for j in range(nbr.shape[1]):
        gain = max(gain, scores[nbr[cell, j]] - scores[cell])
    return gain


@njit(cache=True)
def async_kernel(reg, strategy, nbr, b, self_play, regime, by_rule, shuffle_rules, shared, rate, s):
    live = engine.prepare_live(reg, regime, rate, s)
    n = live.shape[0]
    scores = np.zeros(strategy.shape[0])
    incentive = np.zeros(n)
    if regime == 6:
        for i in range(n):
            incentive[i] = incentive_of(strategy, nbr, reg.cell[live[i]], b, self_play, scores)
    ev_s, _ = engine.schedule_for(reg, live, incentive, regime, by_rule, shuffle_rules,
                                  shared, 1, rate, s)
    for e in range(ev_s.shape[0]):
        fire(strategy, nbr, reg.cell[ev_s[e]], b, self_play, scores)
    engine.end_step(reg)


@njit(cache=True)
def sync_kernel(reg, strategy, prev, nbr, b, self_play, visit):
    n = prev.shape[0]
    scores = np.empty(n)
    for v in range(n):
        c = visit[v]
        scores[c] = score(prev, nbr, c, b, self_play)
    for v in range(n):
        c = visit[v]
        strategy[c] = best_strategy(prev, scores, nbr, c)
    engine.end_step(reg)


class SpatialPD(Model):
    name = "spatialpd"
    rule_names = ("imitate",)
    metric_names = ("coop_fraction",)

    def __init__(self, config: SpatialPdConfig, rng: RngStream):
        self.config = config
        w, h = config.width, config.height
        n = w * h
        self.nbr = neighbour_table(MOORE, w, h)
        self.reg = engine.new_registry(n, np.arange(n))
        self.strategy = np.zeros(n, dtype=np.int8)
        k = int(round(config.initial_defector_fraction * n))
        self.strategy[placement(rng, w, h, k)] = DEFECT

    @classmethod
    def from_grid(cls, config: SpatialPdConfig, layout) -> "SpatialPD":
        """Model from ``layout[row][col]`` in {0 = C, 1 = D}."""
        self = cls.__new__(cls)
        self.config = config
        w, h = config.width, config.height
        self.nbr = neighbour_table(MOORE, w, h)
        self.reg = engine.new_registry(w * h, np.arange(w * h))
        self.strategy = np.asarray(layout, dtype=np.int8).reshape(w * h).copy()
        if not np.isin(self.strategy, (COOPERATE, DEFECT)).all():
            raise ConfigurationError("layout entries must be 0 (C) or 1 (D)")
        return self

    def layout(self) -> np.ndarray:
        return self.strategy.reshape(self.config.height, self.config.width).copy()

    def scores(self) -> np.ndarray:
        c = self.config
        return np.array([score(self.strategy, self.nbr, i, c.b, c.include_self_play)
                         for i in range(self.strategy.shape[0])])

    def async_update(self, regime: RegimeSpec, mode: ModeSpec, rng: RngStream) -> None:
        check_regime(regime)
        c = self.config
        async_kernel(self.reg, self.strategy, self.nbr, c.b, c.include_self_play,
                     *self._mode_args(regime, mode), rng.state)

    def buffered_view(self) -> tuple:
        return (self.strategy.copy(),)

    def sync_update(self, view, policy, rng, visit_order=None) -> None:
        (prev,) = view
        c = self.config
        live = engine.live_slots(self.reg.ids)
        sync_kernel(self.reg, self.strategy, prev, self.nbr, c.b, c.include_self_play,
                    self._visit(visit_order, live))

    def metrics(self) -> dict[str, float]:
        return {"coop_fraction": float(np.mean(self.strategy == COOPERATE))}

    def _state_arrays(self):
        return (self.strategy,)
