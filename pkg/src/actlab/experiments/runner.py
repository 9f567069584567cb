from __future__ import annotations

import logging
import multiprocessing
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable

from ..models import build_model
from ..rng import RngStream
from .plan import ExperimentPlan, RunDescriptor, expand_plan

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunRecord:
    """Result of one run: sampled metrics as (step, metric, value) rows."""

    run_index: int
    model: str
    sweep_name: str
    sweep_value: object
    movement_rule: str | None
    setting: int | None
    regime: str
    mode: str
    seed: int
    samples: tuple[tuple[int, str, float], ...]
    plan_hash: str = ""
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def cell(self) -> tuple:
        return (self.model, self.sweep_name, self.sweep_value, self.movement_rule,
                self.setting, self.regime, self.mode)

    def value(self, metric: str, sample_t: int | None = None) -> float:
        times = [t for t, m, _ in self.samples if m == metric]
        if not times:
            raise KeyError(metric)
        t = max(times) if sample_t is None else sample_t
        for tt, m, v in self.samples:
            if tt == t and m == metric:
                return v
        raise KeyError((metric, t))


def run_one(desc: RunDescriptor, plan_hash: str = "") -> RunRecord:
    """Execute a single run; exceptions become a failed record."""
    base = dict(run_index=desc.run_index, model=desc.model, sweep_name=desc.sweep_name,
                sweep_value=desc.sweep_value, movement_rule=desc.movement_rule,
                setting=desc.setting, regime=str(desc.regime), mode=str(desc.mode),
                seed=desc.seed, plan_hash=plan_hash)
    try:
        rng = RngStream(desc.master_seed, desc.run_index)
        model = build_model(desc.model, desc.config, rng)
        sampled = model.run(desc.regime, desc.mode, rng, desc.horizon, desc.sample_at)
        rows = tuple((t, name, float(v)) for t in sorted(sampled)
                     for name, v in sampled[t].items())
        return RunRecord(samples=rows, **base)
    except Exception as exc:  # a failed run must not abort the sweep
        detail = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        return RunRecord(samples=(), error=detail, **base)


def _run_packed(args):
    return run_one(*args)


def execute_plan(plan: ExperimentPlan, parallelism: int = 1,
                 progress: Callable[[int, int], None] | None = None) -> list[RunRecord]:
    """Run every descriptor of ``plan``; records come back in run_index order.

    Results do not depend on ``parallelism``: each run owns its RNG stream.
    """
    descs = expand_plan(plan)
    return execute_runs(descs, parallelism, plan.digest(), progress)


def execute_runs(descs: Iterable[RunDescriptor], parallelism: int = 1, plan_hash: str = "",
                 progress: Callable[[int, int], None] | None = None) -> list[RunRecord]:
    descs = list(descs)
    total = len(descs)
    records: list[RunRecord] = []
    if parallelism <= 1 or total <= 1:
        for i, d in enumerate(descs):
            records.append(run_one(d, plan_hash))
            if progress:
                progress(i + 1, total)
    else:
        # warm the compiled kernels once so forked workers inherit them
        if descs:
            run_one(_smoke(descs[0]))
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=parallelism, mp_context=ctx) as pool:
            chunk = max(1, total // (parallelism * 8))
            for i, rec in enumerate(pool.map(_run_packed, ((d, plan_hash) for d in descs),
                                             chunksize=chunk)):
                records.append(rec)
                if progress:
                    progress(i + 1, total)
    records.sort(key=lambda r: r.run_index)
    failures = [r for r in records if r.failed]
    if failures:
        log.warning("%d of %d runs failed", len(failures), total)
    return records


def _smoke(desc: RunDescriptor) -> RunDescriptor:
    return RunDescriptor(**{**desc.__dict__, "horizon": min(desc.horizon, 1),
                            "sample_at": tuple(t for t in desc.sample_at if t <= 1)})
