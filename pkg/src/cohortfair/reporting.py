"""Mean-impact tables and histogram data for impact matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .data_pipeline import Dataset
from .fairness import group_groups
from .shapley import ImpactMatrix, aggregate_impacts

DEFAULT_BINS = 40


def parse_groupings(spec: str | Sequence) -> list[tuple[str, ...]]:
    """``"race_factor,gender_factor,race_factor+gender_factor"`` -> crossed tuples."""
    if isinstance(spec, str):
        items = [s.strip() for s in spec.split(",") if s.strip()]
    else:
        items = list(spec)
    out = []
    for item in items:
        if isinstance(item, str):
            out.append(tuple(p.strip() for p in item.split("+")))
        else:
            out.append(tuple(item))
    return out


def grouping_label(names: Sequence[str]) -> str:
    return "+".join(names)


def make_groups(ds: Dataset, groupings: Sequence[Sequence[str]]) -> list[tuple[str, str, np.ndarray]]:
    """(grouping label, group label, mask) for every level combination."""
    out = []
    for names in groupings:
        for label, mask in group_groups(ds, names):
            out.append((grouping_label(names), label, mask))
    return out


def mean_impact_table(im: ImpactMatrix, ds: Dataset, groupings: Sequence[Sequence[str]]) -> pd.DataFrame:
    """Long table: grouping, group, size, feature, mean impact. Empty groups are omitted."""
    records = []
    for grouping, group, mask in make_groups(ds, groupings):
        if not mask.any():
            continue
        summary = aggregate_impacts(im, mask, label=group)
        for feature, value in zip(im.feature_names, summary.means):
            records.append(
                {
                    "response": im.response,
                    "grouping": grouping,
                    "group": group,
                    "size": summary.size,
                    "feature": feature,
                    "value": float(value),
                }
            )
    return pd.DataFrame(records)


def fmt3(v: float) -> str:
    return f"{v:.3f}"


def render_mean_impact(table: pd.DataFrame, title: str = "") -> str:
    """Text layout: one block for single-feature groupings, one per crossing."""
    if table.empty:
        return title + "\n(no groups)\n"
    features = list(dict.fromkeys(table["feature"]))
    singles = [g for g in dict.fromkeys(table["grouping"]) if "+" not in g]
    crosses = [g for g in dict.fromkeys(table["grouping"]) if "+" in g]
    blocks = []
    if singles:
        blocks.append(table[table["grouping"].isin(singles)])
    blocks.extend(table[table["grouping"] == g] for g in crosses)
    out = [title] if title else []
    for block in blocks:
        groups = list(dict.fromkeys(block["group"]))
        cells = [["Variable", *groups]]
        lookup = {(r.group, r.feature): r.value for r in block.itertuples()}
        for f in features:
            cells.append([f, *(fmt3(lookup[(g, f)]) for g in groups)])
        widths = [max(len(row[k]) for row in cells) for k in range(len(cells[0]))]
        for i, row in enumerate(cells):
            line = "  ".join(c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in enumerate(zip(row, widths)))
            out.append(line.rstrip())
            if i == 0:
                out.append("  ".join("-" * w for w in widths))
        out.append("")
    return "\n".join(out)


@dataclass(frozen=True, eq=False)
class HistogramTable:
    """Histogram panel: impacts of ``feature`` split by levels of ``conditioning``.

    All levels share ``edges``; ``counts[k]`` belongs to ``levels[k]``.
    """

    response: str
    feature: str
    conditioning: str
    levels: tuple[str, ...]
    edges: np.ndarray
    counts: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        nb = len(self.edges) - 1
        return pd.DataFrame(
            {
                "response": self.response,
                "feature": self.feature,
                "conditioning": self.conditioning,
                "level": np.repeat(self.levels, nb),
                "bin_lo": np.tile(self.edges[:-1], len(self.levels)),
                "bin_hi": np.tile(self.edges[1:], len(self.levels)),
                "count": self.counts.reshape(-1),
            }
        )


def histogram(
    im: ImpactMatrix,
    ds: Dataset,
    feature: str,
    conditioning: str,
    bins: int = DEFAULT_BINS,
    half_range: float | None = None,
) -> HistogramTable:
    """Equal-width bins on [-M, M] with M = max |impact of feature| (1.0 if all zero)."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    values = im.column(feature)
    m = float(np.abs(values).max()) if half_range is None else float(half_range)
    if m == 0.0:
        m = 1.0
    edges = np.linspace(-m, m, bins + 1)
    c = ds.feature_index(conditioning)
    spec = ds.specs[c]
    counts = np.zeros((spec.n_levels, bins), dtype=np.int64)
    for level in range(spec.n_levels):
        sel = values[ds.codes[:, c] == level]
        counts[level], _ = np.histogram(sel, bins=edges)
    return HistogramTable(im.response, feature, conditioning, spec.levels, edges, counts)


def histogram_grid(im: ImpactMatrix, ds: Dataset, bins: int = DEFAULT_BINS) -> list[HistogramTable]:
    """Every (analyzed feature, conditioning feature) panel: the d x d grid."""
    return [histogram(im, ds, f, c, bins) for c in ds.feature_names for f in ds.feature_names]
