from __future__ import annotations

import abc
import hashlib
from dataclasses import fields

import numpy as np

from .. import engine
from ..engine import ConfigurationError, ModeSpec, Regime, RegimeSpec
from ..rng import RngStream


def config_from_mapping(cls, values: dict, *, presets=None):
    """Build a config dataclass, rejecting unknown keys by name."""
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError(
            f"unknown {cls.__name__} field(s) {unknown}; known fields: {sorted(known)}"
        )
    return cls(**values)


class Model(abc.ABC):
    """Common surface of the reference models.

    Subclasses own a :class:`~actlab.engine.Registry` plus model arrays and
    implement the asynchronous and synchronous updates with compiled kernels.
    """

    name: str = ""
    rule_names: tuple[str, ...] = ()
    metric_names: tuple[str, ...] = ()

    reg: engine.Registry

    @property
    def step_count(self) -> int:
        return int(self.reg.meta[engine.STEP])

    def live_agents(self) -> list[int]:
        return self.reg.ids[engine.live_slots(self.reg.ids)].tolist()

    def advance(self, regime: RegimeSpec | str, mode: ModeSpec | str, rng: RngStream) -> dict:
        return engine.step(self, regime, mode, rng)

    def run(self, regime, mode, rng: RngStream, horizon: int, sample_at=()) -> dict[int, dict]:
        """Advance to ``horizon``; return metrics at each requested step."""
        regime = RegimeSpec.parse(regime)
        mode = ModeSpec.parse(mode)
        wanted = set(sample_at)
        out = {}
        if 0 in wanted:
            out[0] = self.metrics()
        while self.step_count < horizon:
            metrics = engine.step(self, regime, mode, rng)
            if self.step_count in wanted:
                out[self.step_count] = metrics
        return out

    def _mode_args(self, regime: RegimeSpec, mode: ModeSpec):
        return (int(regime.kind), mode.by_rule, mode.shuffle_rules, mode.shared_phase_order,
                float(regime.rate))

    @staticmethod
    def _visit(visit_order, live: np.ndarray) -> np.ndarray:
        """Positions into ``live`` to iterate over during a synchronous pass."""
        if visit_order is None:
            return np.arange(live.shape[0])
        pos = {int(s): i for i, s in enumerate(live)}
        order = np.array([pos[int(s)] for s in visit_order], dtype=np.int64)
        if sorted(order.tolist()) != list(range(live.shape[0])):
            raise ConfigurationError("visit_order must permute the live slots")
        return order

    @abc.abstractmethod
    def async_update(self, regime: RegimeSpec, mode: ModeSpec, rng: RngStream) -> None: ...

    @abc.abstractmethod
    def buffered_view(self) -> tuple: ...

    @abc.abstractmethod
    def sync_update(self, view: tuple, policy: str, rng: RngStream, visit_order=None) -> None: ...

    @abc.abstractmethod
    def metrics(self) -> dict[str, float]: ...

    @abc.abstractmethod
    def _state_arrays(self) -> tuple[np.ndarray, ...]: ...

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (*self.reg, *self._state_arrays()):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def neighbour_table(offsets: np.ndarray, width: int, height: int) -> np.ndarray:
    from ..grid import neighbours

    table = np.empty((width * height, offsets.shape[0]), dtype=np.int64)
    for c in range(width * height):
        neighbours(c, offsets, width, height, table[c])
    return table


def placement(rng: RngStream, width: int, height: int, count: int) -> np.ndarray:
    """``count`` distinct uniformly random cells (prefix of a cell permutation)."""
    return np.asarray(engine.permutation(width * height, rng)[:count], dtype=np.int64)


def check_regime(regime: RegimeSpec) -> None:
    if regime.kind == Regime.SYNCHRONOUS:
        raise ConfigurationError("synchronous regime goes through synchronous_step")
