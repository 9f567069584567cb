"""Sweep plans, deterministic execution, CSV persistence and cell statistics."""
from .io import (
    read_records_csv,
    read_summary_csv,
    write_failures_csv,
    write_records_csv,
    write_summary_csv,
)
from .plan import (
    ExperimentPlan,
    PlanError,
    RunDescriptor,
    dump_plan,
    expand_plan,
    parse_plan,
    read_plan,
    write_plan,
)
from .runner import RunRecord, execute_plan, execute_runs, run_one
from .stats import ComparisonResult, SummaryTable, compare, summarize, welch
