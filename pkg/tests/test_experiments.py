import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from actlab.experiments import (
    ExperimentPlan,
    compare,
    execute_plan,
    expand_plan,
    parse_plan,
    read_plan,
    read_records_csv,
    read_summary_csv,
    summarize,
    write_plan,
    write_records_csv,
    write_summary_csv,
)
from actlab.experiments.io import RECORD_COLUMNS, records_csv_text
from actlab.experiments.plan import PlanError, dump_plan
from actlab.experiments.runner import RunRecord, run_one
from actlab.experiments.stats import SummaryError, welch
from oracles import welch_closed_form

TOY = """\
model:
  id: schelling
  config: {width: 8, height: 8, agents_per_color: 20}
regimes: [uniform, random]
modes: [by_agent, by_rule]
sweep:
  name: tolerance
  values: [3]
seeds: 3
master_seed: 11
horizon: 10
sample_at: [5, 10]
"""


def toy(**overrides):
    plan = parse_plan(TOY)
    return ExperimentPlan(**{**plan.__dict__, **overrides})


# ---------------------------------------------------------------- plans


def test_expansion_cardinality_and_order():
    plan = toy()
    descs = expand_plan(plan)
    assert len(descs) == 12 == plan.run_count
    assert [d.run_index for d in descs] == list(range(12))
    assert [(str(d.regime), str(d.mode), d.seed) for d in descs[:4]] == [
        ("uniform", "by_agent", 0), ("uniform", "by_agent", 1), ("uniform", "by_agent", 2),
        ("uniform", "by_rule", 0)]
    assert expand_plan(plan) == descs


def test_schelling_preset_cardinality():
    from actlab.cli import load_plan_source

    plan = load_plan_source("schelling_fig2")
    assert plan.run_count == 3600 == len(expand_plan(plan))
    assert load_plan_source("dpd_fig3").run_count == 5 * 2 * 2 * 100


def test_movement_rules_dimension():
    plan = toy(movement_rules=("random_everywhere", "edmonds_hales"))
    descs = expand_plan(plan)
    assert len(descs) == 24
    assert {d.movement_rule for d in descs[:12]} == {"random_everywhere"}
    assert descs[12].config["movement_rule"] == "edmonds_hales"


def test_plan_roundtrip(tmp_path):
    plan = toy(movement_rules=("edmonds_hales",))
    path = tmp_path / "plan.yaml"
    write_plan(plan, path)
    assert read_plan(path) == plan
    assert parse_plan(dump_plan(plan)).digest() == plan.digest()


@pytest.mark.parametrize("edit,needle", [
    (lambda t: t.replace("seeds: 3\n", ""), "'seeds'"),
    (lambda t: t.replace("seeds: 3", "seeds: 0"), "seeds"),
    (lambda t: t.replace("regimes: [uniform, random]", "regimes: []"), "regimes"),
    (lambda t: t.replace("sample_at: [5, 10]", "sample_at: [50]"), "sample_at"),
    (lambda t: t.replace("regimes: [uniform, random]", "regimes: [unifrom]"), "unifrom"),
    (lambda t: t.replace("id: schelling", "id: sugarscape"), "sugarscape"),
    (lambda t: t.replace("values: [3]", "values: [11]"), "tolerance"),
])
def test_plan_validation_errors(edit, needle):
    with pytest.raises(PlanError) as info:
        parse_plan(edit(TOY))
    assert needle in str(info.value)


def test_unknown_field_reports_line():
    text = TOY.replace("horizon: 10", "horizon: 10\nhorizn: 5")
    with pytest.raises(PlanError) as info:
        parse_plan(text)
    assert "line 12" in str(info.value) and "horizn" in str(info.value)
    with pytest.raises(PlanError) as info:
        parse_plan(TOY.replace("agents_per_color: 20", "agents_per_colour: 20"))
    assert "agents_per_colour" in str(info.value)


def test_malformed_yaml():
    with pytest.raises(PlanError):
        parse_plan("model: [unclosed")
    with pytest.raises(PlanError):
        parse_plan("")


# ---------------------------------------------------------------- execution


def test_execute_is_parallelism_independent(tmp_path):
    plan = toy()
    one = execute_plan(plan, parallelism=1)
    many = execute_plan(plan, parallelism=4)
    assert one == many
    assert len(one) == 12 and not any(r.failed for r in one)
    write_records_csv(one, tmp_path / "a.csv")
    write_records_csv(many, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_failed_run_is_recorded_not_raised():
    plan = toy()
    desc = expand_plan(plan)[0]
    broken = desc.__class__(**{**desc.__dict__, "config": {"tolerance": 3, "width": 1}})
    rec = run_one(broken)
    assert rec.failed and "3x3" in rec.error
    assert records_csv_text([rec]) == ",".join(RECORD_COLUMNS) + "\n"


def test_tolerance_eight_records_zero_moves():
    plan = toy(sweep_values=(8,), seeds=2)
    for rec in execute_plan(plan):
        assert rec.value("moves") == 0.0


def test_seeds_one_gives_one_record_per_cell():
    records = execute_plan(toy(seeds=1))
    assert len({r.cell() for r in records}) == len(records) == 4


# ---------------------------------------------------------------- CSV


def test_records_csv_roundtrip(tmp_path):
    records = execute_plan(toy())
    path = tmp_path / "records.csv"
    write_records_csv(records, path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == ",".join(RECORD_COLUMNS)
    assert len(lines) == 1 + 12 * 2 * 2
    back = read_records_csv(path)
    assert [r.samples for r in back] == [r.samples for r in records]
    write_records_csv(back, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == raw


def test_empty_records_header_only(tmp_path):
    write_records_csv([], tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == ",".join(RECORD_COLUMNS) + "\n"


def test_summary_roundtrip(tmp_path):
    table = summarize(execute_plan(toy()))
    write_summary_csv(table, tmp_path / "s.csv")
    assert read_summary_csv(tmp_path / "s.csv") == table


def _rec(k, value, regime="uniform", t=10):
    return RunRecord(k, "m", "x", 1, None, None, regime, "by_agent", k, ((t, "v", value),))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e12, 1e12, allow_nan=False), min_size=1, max_size=8))
def test_float_values_roundtrip_exactly(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("rt") / "r.csv"
    records = [_rec(k, v) for k, v in enumerate(values)]
    write_records_csv(records, path)
    assert [r.value("v") for r in read_records_csv(path)] == values


# ---------------------------------------------------------------- summaries


def test_summary_hand_values():
    table = summarize([_rec(k, v) for k, v in enumerate([1.0, 2.0, 3.0])])
    (row,) = table.rows
    assert (row.n, row.mean, row.std, row.min, row.max) == (3, 2.0, 1.0, 1.0, 3.0)
    table = summarize([_rec(k, 7.5) for k in range(100)])
    assert table.rows[0].mean == 7.5 and table.rows[0].std == 0.0


def test_summary_single_value_flagged():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        table = summarize([_rec(0, 4.0)])
    assert table.rows[0].std == 0.0 and table.rows[0].n == 1
    assert any("n=1" in str(w.message) for w in caught)


def test_summary_missing_time_names_available():
    with pytest.raises(SummaryError) as info:
        summarize([_rec(0, 1.0)], sample_time=99)
    assert "[10]" in str(info.value)


# ---------------------------------------------------------------- Welch


def test_welch_identical_samples():
    t, df, p = welch([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert t == 0.0 and p == 1.0
    assert welch([2.0] * 4, [2.0] * 4)[2] == 1.0


def test_welch_separated_samples():
    a = [0.0, 0.001, -0.001, 0.0005]
    b = [10.0, 10.001, 9.999, 10.0005]
    t, df, p = welch(a, b)
    t0, df0 = welch_closed_form(a, b)
    assert t == pytest.approx(t0) and df == pytest.approx(df0)
    assert p < 1e-6
    assert welch([0.0] * 4, [10.0] * 4)[2] == 0.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=20),
       st.lists(st.floats(-100, 100), min_size=2, max_size=20))
def test_welch_matches_scipy_and_is_symmetric(a, b):
    if min(np.ptp(a), np.ptp(b)) < 1e-3:
        return
    t, df, p = welch(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert t == pytest.approx(ref.statistic, rel=1e-9, abs=1e-9)
    assert p == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-12)
    t2, df2, p2 = welch(b, a)
    assert t2 == pytest.approx(-t) and p2 == pytest.approx(p) and df2 == pytest.approx(df)
    assert 0.0 <= p <= 1.0


def test_welch_needs_two():
    with pytest.raises(SummaryError):
        welch([1.0], [1.0, 2.0])


def test_compare_selectors():
    records = [_rec(k, float(k % 5), "uniform" if k < 10 else "random") for k in range(20)]
    res = compare(records, {"regime": "uniform"}, {"regime": "random"}, "v")
    assert res.n_a == res.n_b == 10
    assert res.p_value == 1.0 and res.mean_difference == 0.0
    same = compare(records, {"regime": "uniform"}, {"regime": "uniform"}, "v")
    assert same.p_value == 1.0
    with pytest.raises(SummaryError):
        compare(records, {"regime": "exponential"}, {"regime": "random"}, "v")


def test_calibration_same_configuration():
    """Two cells from one configuration reject at 1% about 1% of the time."""
    rng = np.random.default_rng(2024)
    trials = 2000
    rejections = 0
    for _ in range(trials):
        a = rng.normal(3.0, 2.0, 30)
        b = rng.normal(3.0, 2.0, 30)
        rejections += welch(a, b)[2] < 0.01
    # binomial upper bound for a nominal 1% rate
    assert rejections <= stats.binom.ppf(0.999, trials, 0.01)


def test_calibration_on_model_runs():
    """Disjoint seed ranges of one Schelling cell, 100 repeated comparisons."""
    trials, per_cell = 100, 15
    plan = toy(regimes=("uniform",), modes=("by_agent",), seeds=trials * 2 * per_cell,
               horizon=5, sample_at=(5,))
    records = execute_plan(plan)
    rejections = 0
    for k in range(trials):
        lo = 2 * per_cell * k
        cell_a = [r for r in records if lo <= r.seed < lo + per_cell]
        cell_b = [r for r in records if lo + per_cell <= r.seed < lo + 2 * per_cell]
        p = welch([r.value("moves") for r in cell_a], [r.value("moves") for r in cell_b])[2]
        rejections += p < 0.01
    assert rejections <= stats.binom.ppf(0.999, trials, 0.01)
