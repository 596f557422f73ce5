"""Confusion-matrix group fairness metrics and conditional subsetting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cohort import SubjectSet
from .data_pipeline import Dataset, ResponseSet


@dataclass(frozen=True)
class ConfusionCounts:
    """``n_ab`` counts subjects with y = a and yhat = b."""

    n00: int
    n01: int
    n10: int
    n11: int

    def __post_init__(self):
        if min(self.n00, self.n01, self.n10, self.n11) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.n00 + self.n01 + self.n10 + self.n11

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.n00 + other.n00, self.n01 + other.n01, self.n10 + other.n10, self.n11 + other.n11
        )


@dataclass(frozen=True)
class RateBundle:
    """Rates derived from confusion counts; ``None`` marks an undefined rate."""

    fpr: float | None
    fnr: float | None
    ppv: float | None
    prevalence: float | None


def _subset_rows(subjects, n: int) -> np.ndarray:
    if subjects is None:
        return np.arange(n)
    if isinstance(subjects, SubjectSet):
        return subjects.indices
    arr = np.asarray(subjects)
    return np.flatnonzero(arr) if arr.dtype == bool else arr.astype(np.int64)


def confusion(y, yhat, subjects=None) -> ConfusionCounts:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    for name, v in (("y", y), ("yhat", yhat)):
        if not np.isin(v, (0.0, 1.0)).all():
            raise ValueError(f"{name} must be binary for confusion counts")
    rows = _subset_rows(subjects, len(y))
    a, b = y[rows].astype(np.int64), yhat[rows].astype(np.int64)
    counts = np.bincount(2 * a + b, minlength=4)
    return ConfusionCounts(*(int(c) for c in counts))


def _ratio(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


def rates(c: ConfusionCounts) -> RateBundle:
    return RateBundle(
        fpr=_ratio(c.n01, c.n00 + c.n01),
        fnr=_ratio(c.n10, c.n10 + c.n11),
        ppv=_ratio(c.n11, c.n01 + c.n11),
        prevalence=_ratio(c.n10 + c.n11, c.total),
    )


def verify_rate_identity(rb: RateBundle) -> float:
    """|FPR - p/(1-p) (1-PPV)/PPV (1-FNR)|: how far the rates are from the error-rate identity."""
    if None in (rb.fpr, rb.fnr, rb.ppv, rb.prevalence):
        raise ValueError("rate identity needs FPR, FNR, PPV and prevalence all defined")
    p = rb.prevalence
    if p >= 1 or rb.ppv <= 0:
        raise ValueError("rate identity needs prevalence < 1 and PPV > 0")
    rhs = p / (1 - p) * (1 - rb.ppv) / rb.ppv * (1 - rb.fnr)
    return abs(rb.fpr - rhs)


# ---------------------------------------------------------------------------
# group report

REPORT_METRICS = ("size", "yhat", "y", "residual", "fp", "fn", "fpr", "fnr", "ppv", "prevalence")


@dataclass(frozen=True)
class GroupRow:
    grouping: str
    group: str
    values: dict

    def __getitem__(self, metric: str):
        return self.values[metric]


@dataclass(frozen=True)
class GroupReport:
    rows: tuple[GroupRow, ...]

    def row(self, group: str, grouping: str | None = None) -> GroupRow:
        for r in self.rows:
            if r.group == group and (grouping is None or r.grouping == grouping):
                return r
        raise KeyError(group)

    @property
    def population(self) -> GroupRow:
        return self.row("all", "population")

    def flat(self) -> list[tuple[str, str, str, float | None]]:
        """(grouping, group, metric, value) records; undefined rates are None."""
        return [(r.grouping, r.group, m, r.values[m]) for r in self.rows for m in REPORT_METRICS]


def _row_metrics(responses: ResponseSet, rows: np.ndarray) -> dict:
    size = len(rows)
    out: dict = {"size": size}
    for name in ("yhat", "y", "residual", "fp", "fn"):
        out[name] = math.fsum(responses[name][rows]) / size if size else None
    if size:
        rb = rates(confusion(responses.y, responses.yhat, rows))
    else:
        rb = RateBundle(None, None, None, None)
    out.update(fpr=rb.fpr, fnr=rb.fnr, ppv=rb.ppv, prevalence=rb.prevalence)
    return out


def group_groups(ds: Dataset, grouping: Sequence[str]) -> list[tuple[str, np.ndarray]]:
    """(label, mask) for every level combination of the grouping features."""
    cols = [ds.feature_index(g) for g in grouping]
    levels = [range(ds.specs[j].n_levels) for j in cols]
    out = []
    for combo in np.ndindex(*[len(lv) for lv in levels]):
        mask = np.ones(ds.n, dtype=bool)
        for j, level in zip(cols, combo):
            mask &= ds.codes[:, j] == level
        label = "-".join(ds.specs[j].levels[level] for j, level in zip(cols, combo))
        out.append((label, mask))
    return out


def group_metric_report(
    ds: Dataset, responses: ResponseSet, grouping_features: Sequence[str | Sequence[str]]
) -> GroupReport:
    """Group means of yhat, y, residual, FP, FN plus FPR/FNR/PPV/prevalence.

    Each entry of ``grouping_features`` is a feature name or a tuple of names
    (crossed groups). The population row comes first.
    """
    rows = [GroupRow("population", "all", _row_metrics(responses, np.arange(ds.n)))]
    for g in grouping_features:
        names = (g,) if isinstance(g, str) else tuple(g)
        for label, mask in group_groups(ds, names):
            rows.append(GroupRow("+".join(names), label, _row_metrics(responses, np.flatnonzero(mask))))
    return GroupReport(tuple(rows))


def _fmt(v) -> str:
    if v is None:
        return "undef"
    if isinstance(v, int):
        return str(v)
    return f"{v:.3f}"


def render_report(report: GroupReport) -> str:
    header = ["grouping", "group", *REPORT_METRICS]
    table = [header] + [[r.grouping, r.group, *(_fmt(r.values[m]) for m in REPORT_METRICS)] for r in report.rows]
    widths = [max(len(row[k]) for row in table) for k in range(len(header))]
    lines = []
    for i, row in enumerate(table):
        cells = [c.ljust(w) if k < 2 else c.rjust(w) for k, (c, w) in enumerate(zip(row, widths))]
        lines.append("  ".join(cells).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# conditional subsetting


def parse_condition(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep or not name.strip() or not value.strip():
        raise ValueError(f"condition must look like 'response=value', got {text!r}")
    return name.strip(), float(value)


def conditional_subset(
    ds: Dataset, responses: ResponseSet, condition: str | tuple[str, float] | None
) -> tuple[Dataset, ResponseSet, np.ndarray]:
    """Subjects whose binary response equals the given value.

    Returns the restricted dataset, its responses, and the row indices into
    the inputs. Cohorts built on the result are relative to the subset.
    """
    if condition is None:
        rows = np.arange(ds.n)
        return ds.subset(rows), responses.subset(rows), rows
    name, value = parse_condition(condition) if isinstance(condition, str) else condition
    r = responses[name]
    if not np.isin(r, (0.0, 1.0)).all():
        raise ValueError(f"conditioning response {name!r} is not binary")
    rows = np.flatnonzero(r == value)
    if len(rows) == 0:
        raise ValueError(f"no subjects satisfy {name}={value:g}")
    return ds.subset(rows), responses.subset(rows), rows
