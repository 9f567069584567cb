"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v`` or
``python tests/test_acceptance.py``. Runs are spread over all cores.
"""
import itertools
import os
from collections import Counter
from functools import lru_cache

import numpy as np
import pytest
from scipy import stats

from actlab import RngStream
from actlab.cli import load_plan_source, main
from actlab.engine import EventClock, build_step_schedule, draws_with_replacement, exponential_schedule
from actlab.experiments import execute_plan, parse_plan
from actlab.experiments.stats import welch
from actlab.models.dpd import DpdConfig
from actlab.models.schelling import SchellingConfig, SchellingModel
from oracles import PyRng, RefSchelling

ALPHA = 0.01
WORKERS = os.cpu_count() or 1
DPD_CELLS = [(r, m) for r in ("uniform", "random") for m in ("by_rule", "by_agent")]


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def plan_text(model, config, sweep, values, regimes, modes, seeds, horizon, rules=None):
    lines = [f"model:\n  id: {model}\n  config: {config}"]
    if rules:
        lines.append(f"  movement_rules: [{', '.join(rules)}]")
    lines += [f"regimes: [{', '.join(regimes)}]", f"modes: [{', '.join(modes)}]",
              f"sweep: {{name: {sweep}, values: {list(values)}}}", f"seeds: {seeds}",
              "master_seed: 2010", f"horizon: {horizon}", f"sample_at: [{horizon}]"]
    return "\n".join(lines) + "\n"


@lru_cache(maxsize=None)
def run_plan(text):
    records = execute_plan(parse_plan(text), parallelism=WORKERS)
    assert not any(r.failed for r in records), [r.error for r in records if r.failed]
    return records


def cell_values(records, metric, **where):
    out = [r for r in records if all(str(getattr(r, k)) == str(v) for k, v in where.items())]
    return np.array([r.value(metric) for r in out])


# ---------------------------------------------------------------- 1


def test_criterion_1_scheduling_statistics(report):
    n, steps = 10, 10_000
    rng = RngStream(1)
    once = True
    for _ in range(steps):
        for mode in ("by_agent", "by_rule"):
            sched = build_step_schedule("uniform", mode, 3, range(n), rng)
            counts = Counter(sched.events)
            once &= len(counts) == 3 * n and set(counts.values()) == {1}

    rnd = np.zeros((steps, n), dtype=np.int64)
    r2 = RngStream(2)
    for t in range(steps):
        np.add.at(rnd[t], draws_with_replacement(n, r2), 1)
    # per-agent totals over T steps are multinomial with equal cells: each Binomial(nT, 1/n)
    p_totals = stats.chisquare(rnd.sum(axis=0)).pvalue
    kmax = 4
    obs = np.bincount(np.minimum(rnd.ravel(), kmax), minlength=kmax + 1)
    pmf = stats.binom.pmf(np.arange(kmax), n, 1 / n)
    p_step = stats.chisquare(obs, obs.sum() * np.append(pmf, 1 - pmf.sum())).pvalue

    r3 = RngStream(3)
    clocks = EventClock.start(range(n), 1.0, r3)
    exp = np.zeros((steps, n), dtype=np.int64)
    for t in range(steps):
        np.add.at(exp[t], exponential_schedule(clocks, n, r3), 1)
    table = np.array([np.bincount(np.minimum(c.ravel(), kmax), minlength=kmax + 1)
                      for c in (exp, rnd)])
    p_exp = stats.chi2_contingency(table).pvalue

    ok = once and min(p_totals, p_step, p_exp) > ALPHA
    report(1, ok, f"exactly_once={once} p_binomial_totals={p_totals:.3g} "
                  f"p_binomial_per_step={p_step:.3g} p_exponential_vs_random={p_exp:.3g}")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_2_schelling_tolerance_eight(report):
    text = plan_text("schelling", "{width: 50, height: 50, agents_per_color: 1000}", "tolerance",
                     [8], ["uniform", "random"], ["by_agent"], 20, 1000,
                     rules=["random_everywhere", "edmonds_hales"])
    records = run_plan(text)
    moves = [r.value("moves") for r in records]
    ok = len(records) == 80 and max(moves) == 0.0
    report(2, ok, f"runs={len(records)} max_moves={max(moves)}")
    assert ok


# ---------------------------------------------------------------- 3


SCHELLING_3 = plan_text("schelling", "{width: 50, height: 50, agents_per_color: 1000}",
                        "tolerance", range(9), ["uniform", "random"], ["by_agent"], 30, 1000,
                        rules=["random_everywhere", "edmonds_hales"])


def test_criterion_3_schelling_robustness(report):
    records = run_plan(SCHELLING_3)
    pvals = []
    for tol in range(9):
        a = cell_values(records, "moves", movement_rule="random_everywhere", regime="uniform",
                        sweep_value=tol)
        b = cell_values(records, "moves", movement_rule="random_everywhere", regime="random",
                        sweep_value=tol)
        pvals.append(welch(a, b)[2])
    agree = sum(p > ALPHA for p in pvals)
    monotone = {}
    for rule, regime in itertools.product(("random_everywhere", "edmonds_hales"),
                                          ("uniform", "random")):
        means = [cell_values(records, "moves", movement_rule=rule, regime=regime,
                             sweep_value=t).mean() for t in range(9)]
        monotone[f"{rule}/{regime}"] = all(x >= y for x, y in zip(means, means[1:]))
    ok = agree >= 7 and all(monotone.values())
    report(3, ok, f"welch_p_gt_0.01={agree}/9 p={[float(f'{p:.3g}') for p in pvals]} "
                  f"non_increasing={monotone}")
    assert ok


# ---------------------------------------------------------------- 4-6


def dpd_records(setting):
    return run_plan(plan_text("dpd", "{}", "setting", [setting], ["uniform", "random"],
                              ["by_rule", "by_agent"], 30, 1000))


def dpd_cells(setting, metric):
    records = dpd_records(setting)
    return {f"{r}/{m}": cell_values(records, metric, regime=r, mode=m) for r, m in DPD_CELLS}


def test_criterion_4_dpd_setting_one_similarity(report):
    cells = dpd_cells(1, "cooperators")
    means = {k: float(v.mean()) for k, v in cells.items()}
    factor = max(means.values()) / min(means.values())
    pairs = list(itertools.combinations(cells, 2))
    pvals = {f"{a} vs {b}": welch(cells[a], cells[b])[2] for a, b in pairs}
    keep = sum(p >= 0.001 for p in pvals.values())
    ok = factor <= 2.0 and keep > len(pairs) / 2
    report(4, ok, f"means={ {k: round(v, 1) for k, v in means.items()} } factor={factor:.3f} "
                  f"non_rejecting={keep}/{len(pairs)} p={ {k: float(f'{v:.3g}') for k, v in pvals.items()} }")
    assert ok


def test_criterion_5_dpd_setting_four_sensitivity(report):
    fractions = {k: float(v.mean()) for k, v in dpd_cells(4, "extinct").items()}
    ok = max(fractions.values()) >= 0.9 and min(fractions.values()) <= 0.5
    report(5, ok, f"extinction_fraction={fractions}")
    assert ok


def cooperator_share_spread(setting):
    """Largest pairwise gap between cell means of cooperators per lattice site."""
    config = DpdConfig()
    sites = config.width * config.height
    means = [v.mean() / sites for v in dpd_cells(setting, "cooperators").values()]
    return max(abs(a - b) for a, b in itertools.combinations(means, 2)), means


def test_criterion_6_dpd_mutation_collapses_sensitivity(report):
    spread4, means4 = cooperator_share_spread(4)
    spread5, means5 = cooperator_share_spread(5)
    ok = spread5 < spread4
    report(6, ok, f"setting4_spread={spread4:.4f} means={np.round(means4, 4).tolist()} "
                  f"setting5_spread={spread5:.4f} means={np.round(means5, 4).tolist()}")
    assert ok


# ---------------------------------------------------------------- 7


def test_criterion_7_nowak_may_synchrony(report):
    plan = load_plan_source("nowakmay_sync_vs_async")
    assert plan.seeds == 10 and plan.sweep_values == (1.85,)
    records = execute_plan(plan, parallelism=WORKERS)
    asyn = np.array([r.value("coop_fraction", 200) for r in records if str(r.regime) == "uniform"])
    sync = np.array([r.value("coop_fraction", 200) for r in records
                     if str(r.regime) == "synchronous"])
    inside = int(np.sum((sync > 0.05) & (sync < 0.95)))
    collapsed = int(np.sum(asyn < 0.05))
    ok = inside >= 8 and collapsed >= 8
    report(7, ok, f"sync_inside={inside}/10 async_below_0.05={collapsed}/10 "
                  f"sync={np.round(sync, 3).tolist()} async={np.round(asyn, 3).tolist()}")
    assert ok


# ---------------------------------------------------------------- 8

TOY = plan_text("dpd", "{width: 12, height: 12, initial_agents: 40, setting: 5}", "setting",
                [2, 5], ["uniform", "exponential"], ["by_rule", "by_agent"], 3, 40)


def _sweep_and_plot(tmp_path, name, parallelism):
    plan = tmp_path / "plan.yaml"
    plan.write_text(TOY)
    out = tmp_path / name
    assert main(["sweep", str(plan), "--out", str(out), "--parallelism", str(parallelism)]) == 0
    assert main(["plot", str(out / "summary.csv"), "--kind", "grouped-bar",
                 "--metric", "cooperators", "--metric", "defectors",
                 "--out", str(out / "fig.svg")]) == 0
    return [(out / f).read_bytes() for f in ("records.csv", "summary.csv", "fig.svg")]


def test_criterion_8_determinism(report, tmp_path):
    first = _sweep_and_plot(tmp_path, "a", 1)
    again = _sweep_and_plot(tmp_path, "b", 1)
    wide = _sweep_and_plot(tmp_path, "c", 8)
    ok = first == again == wide
    report(8, ok, f"identical across runs={first == again} across parallelism={first == wide} "
                  f"bytes={[len(b) for b in first]}")
    assert ok


# ---------------------------------------------------------------- 9

REGIMES_9 = ("synchronous", "synchronous:all-lose", "ordered_sweep", "fixed_random_order",
             "uniform", "random", "exponential", "incentive")


def test_criterion_9_oracle_equivalence(report):
    mismatches = []
    for rule, regime, seed in itertools.product(("random_everywhere", "edmonds_hales"),
                                                REGIMES_9, range(100)):
        config = SchellingConfig(width=4, height=4, agents_per_color=3, tolerance=1,
                                 movement_rule=rule)
        engine_rng, ref_rng = RngStream(seed), PyRng(seed, 0)
        model = SchellingModel(config, engine_rng)
        ref = RefSchelling(4, 4, 3, 1, rule, ref_rng)
        model.advance(regime, "by_agent", engine_rng)
        if regime.startswith("synchronous"):
            ref.sync_step(regime.endswith("all-lose"), ref_rng)
        else:
            ref.async_step(regime, ref_rng)
        same = (model.layout().tolist() == ref.layout() and model.move_count == ref.moves
                and list(engine_rng.state[:4]) == ref_rng.s)
        if not same:
            mismatches.append((rule, regime, seed))
    ok = not mismatches
    report(9, ok, f"cases={2 * len(REGIMES_9) * 100} mismatches={mismatches[:5]}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
