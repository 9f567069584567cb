"""CSV persistence for run records and summaries (UTF-8, LF, header always)."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence

from .runner import RunRecord
from .stats import SummaryRow, SummaryTable, field_text

RECORD_COLUMNS = ("model", "sweep_name", "sweep_value", "movement_rule", "setting", "regime",
                  "mode", "seed", "run_index", "sample_t", "metric", "value")
SUMMARY_STATS = ("metric", "n", "mean", "std", "min", "max")
FAILURE_COLUMNS = ("run_index", "model", "sweep_value", "movement_rule", "setting", "regime",
                   "mode", "seed", "error")


class CsvFormatError(ValueError):
    pass


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def records_csv_text(records: Iterable[RunRecord]) -> str:
    buf = io.StringIO()
    w = _writer(buf)
    w.writerow(RECORD_COLUMNS)
    for r in records:
        if r.failed:
            continue
        head = [r.model, r.sweep_name, field_text(r.sweep_value), field_text(r.movement_rule),
                field_text(r.setting), r.regime, r.mode, str(r.seed), str(r.run_index)]
        for t, metric, value in r.samples:
            w.writerow(head + [str(t), metric, repr(float(value))])
    return buf.getvalue()


def write_records_csv(records: Iterable[RunRecord], path: str | Path) -> None:
    Path(path).write_text(records_csv_text(records), encoding="utf-8", newline="")


def _check_header(header, expected, path):
    if header is None or tuple(header) != tuple(expected):
        raise CsvFormatError(f"{path}: expected header {','.join(expected)}, got {header}")


def read_records_csv(path: str | Path) -> list[RunRecord]:
    """Records back from CSV; text fields come back as strings."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.reader(fh)
        _check_header(next(rows, None), RECORD_COLUMNS, path)
        grouped: dict[int, dict] = {}
        for lineno, row in enumerate(rows, start=2):
            if len(row) != len(RECORD_COLUMNS):
                raise CsvFormatError(f"{path}:{lineno}: expected {len(RECORD_COLUMNS)} fields")
            d = dict(zip(RECORD_COLUMNS, row))
            try:
                k = int(d["run_index"])
                sample = (int(d["sample_t"]), d["metric"], float(d["value"]))
                seed = int(d["seed"])
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: {exc}") from None
            rec = grouped.setdefault(k, dict(
                run_index=k, model=d["model"], sweep_name=d["sweep_name"],
                sweep_value=d["sweep_value"], movement_rule=d["movement_rule"] or None,
                setting=int(d["setting"]) if d["setting"] else None, regime=d["regime"],
                mode=d["mode"], seed=seed, samples=[]))
            rec["samples"].append(sample)
    return [RunRecord(**{**d, "samples": tuple(d["samples"])})
            for _, d in sorted(grouped.items())]


def write_failures_csv(records: Iterable[RunRecord], path: str | Path) -> int:
    failed = [r for r in records if r.failed]
    buf = io.StringIO()
    w = _writer(buf)
    w.writerow(FAILURE_COLUMNS)
    for r in failed:
        w.writerow([r.run_index, r.model, field_text(r.sweep_value), field_text(r.movement_rule),
                    field_text(r.setting), r.regime, r.mode, r.seed, r.error])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")
    return len(failed)


def summary_csv_text(table: SummaryTable) -> str:
    buf = io.StringIO()
    w = _writer(buf)
    w.writerow(tuple(table.group_keys) + SUMMARY_STATS)
    for row in table.rows:
        w.writerow([v for _, v in row.keys]
                   + [row.metric, str(row.n), repr(row.mean), repr(row.std), repr(row.min),
                      repr(row.max)])
    return buf.getvalue()


def write_summary_csv(table: SummaryTable, path: str | Path) -> None:
    Path(path).write_text(summary_csv_text(table), encoding="utf-8", newline="")


def read_summary_csv(path: str | Path) -> SummaryTable:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or tuple(header[-len(SUMMARY_STATS):]) != SUMMARY_STATS:
            raise CsvFormatError(f"{path}: not a summary CSV (header {header})")
        keys = tuple(header[:-len(SUMMARY_STATS)])
        out = []
        for lineno, row in enumerate(rows, start=2):
            if len(row) != len(header):
                raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields")
            k = len(keys)
            try:
                out.append(SummaryRow(tuple(zip(keys, row[:k])), row[k], int(row[k + 1]),
                                      float(row[k + 2]), float(row[k + 3]), float(row[k + 4]),
                                      float(row[k + 5])))
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: {exc}") from None
    return SummaryTable(keys, tuple(out))


def summary_rows_as_dicts(table: SummaryTable) -> Sequence[dict]:
    return [dict(r.keys, metric=r.metric, n=r.n, mean=r.mean, std=r.std, min=r.min, max=r.max)
            for r in table.rows]
