from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as _st

from .runner import RunRecord

GROUP_KEYS = ("model", "sweep_name", "sweep_value", "movement_rule", "setting", "regime", "mode")


class SummaryError(ValueError):
    pass


@dataclass(frozen=True)
class SummaryRow:
    keys: tuple[tuple[str, str], ...]
    metric: str
    n: int
    mean: float
    std: float
    min: float
    max: float

    def key(self, name: str) -> str:
        return dict(self.keys)[name]


@dataclass(frozen=True)
class SummaryTable:
    group_keys: tuple[str, ...]
    rows: tuple[SummaryRow, ...]

    def metrics(self) -> list[str]:
        return sorted({r.metric for r in self.rows})

    def select(self, metric: str) -> list[SummaryRow]:
        return [r for r in self.rows if r.metric == metric]


def field_text(value) -> str:
    """Canonical text of a record field (empty for a missing dimension)."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def record_field(rec: RunRecord, name: str) -> str:
    return field_text(getattr(rec, name))


def final_values(records: Iterable[RunRecord], metric: str, sample_time: int | None = None
                 ) -> list[float]:
    return [r.value(metric, sample_time) for r in records]


def _available_times(records: Sequence[RunRecord], metric: str) -> list[int]:
    return sorted({t for r in records for t, m, _ in r.samples if m == metric})


def summarize(records: Sequence[RunRecord], group_keys: Sequence[str] = GROUP_KEYS,
              metrics: Sequence[str] | str | None = None, sample_time: int | None = None
              ) -> SummaryTable:
    """Mean, sample std (n-1), n, min and max per group at one sample time.

    ``sample_time=None`` uses the latest time present. Failed runs are skipped.
    A group of one value gets std 0 and a warning.
    """
    records = [r for r in records if not r.failed]
    if isinstance(metrics, str):
        metrics = [metrics]
    if metrics is None:
        metrics = sorted({m for r in records for _, m, _ in r.samples})
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault(tuple(record_field(r, k) for k in group_keys), []).append(r)
    rows = []
    for metric in metrics:
        times = _available_times(records, metric)
        if not times:
            raise SummaryError(f"metric {metric!r} not present in records")
        t = times[-1] if sample_time is None else sample_time
        if t not in times:
            raise SummaryError(f"sample time {t} not recorded for {metric!r}; available: {times}")
        for key, recs in groups.items():
            vals = np.array([r.value(metric, t) for r in recs], dtype=float)
            if vals.size == 0:
                raise SummaryError(f"empty group {key}")
            if vals.size == 1:
                warnings.warn(f"group {key} has n=1; std reported as 0", stacklevel=2)
                std = 0.0
            else:
                std = float(np.std(vals, ddof=1))
            rows.append(SummaryRow(tuple(zip(group_keys, key)), metric, int(vals.size),
                                   float(np.mean(vals)), std, float(vals.min()), float(vals.max())))
    return SummaryTable(tuple(group_keys), tuple(rows))


@dataclass(frozen=True)
class ComparisonResult:
    cell_a: tuple[tuple[str, str], ...]
    cell_b: tuple[tuple[str, str], ...]
    metric: str
    statistic: float
    df: float
    p_value: float
    mean_difference: float
    n_a: int
    n_b: int


def welch(a: Sequence[float], b: Sequence[float]) -> tuple[float, float, float]:
    """Welch's unequal-variance t-test: (t, Welch-Satterthwaite df, two-sided p)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise SummaryError(f"Welch test needs n >= 2 per cell, got {na} and {nb}")
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    qa, qb = va / na, vb / nb
    se2 = qa + qb
    if se2 == 0.0:
        if ma == mb:
            return 0.0, float(na + nb - 2), 1.0
        return math.copysign(math.inf, ma - mb), float(na + nb - 2), 0.0
    t = (ma - mb) / math.sqrt(se2)
    df = se2 ** 2 / (qa ** 2 / (na - 1) + qb ** 2 / (nb - 1))
    p = float(min(1.0, 2.0 * _st.t.sf(abs(t), df)))
    return float(t), float(df), p


def select(records: Iterable[RunRecord], selector: Mapping[str, str]) -> list[RunRecord]:
    """Records matching every ``key=value`` of ``selector``.

    Keys are record fields, or the sweep parameter's own name (``tolerance=2``
    matches records whose sweep is over tolerance with value 2).
    """
    records = [r for r in records if not r.failed]
    fields = set(GROUP_KEYS) | {"seed", "run_index"}
    sweep_names = {r.sweep_name for r in records}
    unknown = [k for k in selector if k not in fields and k not in sweep_names]
    if unknown:
        raise SummaryError(f"unknown selector key(s) {unknown}; use {sorted(fields | sweep_names)}")

    def field(r, k):
        if k in fields:
            return record_field(r, k)
        return record_field(r, "sweep_value") if r.sweep_name == k else None

    return [r for r in records if all(field(r, k) == str(v) for k, v in selector.items())]


def compare(records: Sequence[RunRecord], cell_a: Mapping[str, str], cell_b: Mapping[str, str],
            metric: str, sample_time: int | None = None) -> ComparisonResult:
    """Welch test of ``metric`` between two selected cells at the final sample."""
    ra, rb = select(records, cell_a), select(records, cell_b)
    for name, sel, recs in (("A", cell_a, ra), ("B", cell_b, rb)):
        if not recs:
            raise SummaryError(f"cell {name} selector {dict(sel)} matches no records")
    a = final_values(ra, metric, sample_time)
    b = final_values(rb, metric, sample_time)
    t, df, p = welch(a, b)
    return ComparisonResult(tuple(cell_a.items()), tuple(cell_b.items()), metric, t, df, p,
                            float(np.mean(a) - np.mean(b)), len(a), len(b))
