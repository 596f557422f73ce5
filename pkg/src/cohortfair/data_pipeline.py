"""Ingest delimited tables, apply the ProPublica COMPAS filters and binning,
and produce an encoded :class:`Dataset` plus its :class:`ResponseSet`.

Everything here is deterministic: the same input file and recipe give
byte-identical artifacts.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Raised for unreadable input or rows that violate the schema."""


# column -> cell type for the ProPublica two-years extract
COMPAS_SCHEMA = {
    "id": "int",
    "age": "int",
    "age_cat": "text",
    "sex": "text",
    "race": "text",
    "priors_count": "int",
    "decile_score": "int",
    "days_b_screening_arrest": "int",
    "c_charge_degree": "text",
    "is_recid": "int",
    "score_text": "text",
    "two_year_recid": "int",
    "compas_screening_date": "date",
}

PROPUBLICA_FILTER_COLUMNS = ("days_b_screening_arrest", "is_recid", "c_charge_degree", "score_text")
COMPAS_RACES = ("Caucasian", "African-American")


@dataclass(frozen=True)
class RawTable:
    """Typed rows of a delimited file. Missing cells are ``NA``."""

    frame: pd.DataFrame
    source: str = ""

    @property
    def columns(self) -> list[str]:
        return list(self.frame.columns)

    @property
    def n_rows(self) -> int:
        return len(self.frame)

    def __len__(self) -> int:
        return len(self.frame)

    def require(self, columns: Iterable[str], context: str = "") -> None:
        missing = [c for c in columns if c not in self.frame.columns]
        if missing:
            where = f" ({context})" if context else ""
            raise DataError(f"missing required column(s){where}: {', '.join(missing)}")

    def _derive(self, frame: pd.DataFrame) -> "RawTable":
        return RawTable(frame.reset_index(drop=True), self.source)


def _dedupe_header(header: Sequence[str]) -> list[str]:
    # the ProPublica file repeats decile_score and priors_count
    seen: dict[str, int] = {}
    out = []
    for name in header:
        if name in seen:
            seen[name] += 1
            out.append(f"{name}.{seen[name]}")
        else:
            seen[name] = 0
            out.append(name)
    return out


def _convert(series: pd.Series, kind: str, column: str) -> pd.Series:
    if kind == "text":
        return series
    if kind == "int":
        converted = pd.to_numeric(series, errors="coerce")
        bad = series.notna() & (converted.isna() | (converted % 1 != 0))
    elif kind == "float":
        converted = pd.to_numeric(series, errors="coerce")
        bad = series.notna() & converted.isna()
    elif kind == "date":
        converted = pd.to_datetime(series, errors="coerce", format="mixed")
        bad = series.notna() & converted.isna()
    else:
        raise ValueError(f"unknown cell type {kind!r} for column {column!r}")
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(
            f"row {row + 2}: column {column!r} value {series.iloc[row]!r} is not a valid {kind}"
        )
    if kind == "int":
        return converted.astype("Int64")
    return converted


def load_table(
    path: str | Path,
    delimiter: str = ",",
    schema: Mapping[str, str] | None = None,
    required: Iterable[str] = (),
) -> RawTable:
    """Read a delimited UTF-8 file with a header row.

    Cells are text unless ``schema`` names a type (``int``, ``float``,
    ``date``) for the column. Empty cells become missing values. Row numbers
    in errors are 1-based file lines (the header is line 1).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file (no header row)") from None
        header = _dedupe_header(header)
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: malformed row at line {reader.line_num}: "
                    f"expected {len(header)} cells, got {len(row)}"
                )
            rows.append(row)
    frame = pd.DataFrame(rows, columns=header, dtype=object)
    frame = frame.mask(frame == "")
    table = RawTable(frame, str(path))
    table.require(required, context=str(path))
    for column, kind in (schema or {}).items():
        if column in frame.columns:
            frame[column] = _convert(frame[column], kind, column)
    return table


def filter_propublica(raw: RawTable) -> RawTable:
    """Keep rows passing the four ProPublica screening filters.

    Day gap between screening and arrest within [-30, 30], recidivism flag
    not -1, charge degree not ``O`` and score text not ``N/A``. Rows with a
    missing value in any of these columns are dropped.
    """
    raw.require(PROPUBLICA_FILTER_COLUMNS, context="ProPublica filters")
    f = raw.frame
    gap = pd.to_numeric(f["days_b_screening_arrest"], errors="coerce")
    recid = pd.to_numeric(f["is_recid"], errors="coerce")
    keep = (
        gap.between(-30, 30)
        & recid.notna()
        & (recid != -1)
        & f["c_charge_degree"].notna()
        & (f["c_charge_degree"] != "O")
        & f["score_text"].notna()
        & (f["score_text"] != "N/A")
    )
    keep = keep.fillna(False).astype(bool)
    return raw._derive(f[keep.to_numpy()])


def restrict_races(raw: RawTable, kept: Iterable[str], column: str = "race") -> RawTable:
    kept = set(kept)
    raw.require([column], context="race restriction")
    mask = raw.frame[column].isin(kept).to_numpy()
    out = raw._derive(raw.frame[mask])
    if len(out) == 0:
        logger.warning("race restriction to %s left no rows", sorted(kept))
    return out


def drop_incomplete(raw: RawTable, columns: Iterable[str]) -> tuple[RawTable, int]:
    """Drop rows with a missing cell in any of ``columns``; logs each reason."""
    columns = list(columns)
    raw.require(columns, context="feature/response columns")
    na = raw.frame[columns].isna()
    bad = na.any(axis=1).to_numpy()
    for row in np.flatnonzero(bad):
        cols = [c for c in columns if na.iloc[row][c]]
        logger.info("dropping row %d: missing %s", row, ", ".join(cols))
    return raw._derive(raw.frame[~bad]), int(bad.sum())


# ---------------------------------------------------------------------------
# encoded dataset


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    levels: tuple[str, ...]

    def __post_init__(self):
        if len(self.levels) < 1:
            raise ValueError(f"feature {self.name!r} needs at least one level")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError(f"feature {self.name!r} has duplicate level labels")

    @property
    def n_levels(self) -> int:
        return len(self.levels)


@dataclass(frozen=True, eq=False)
class Dataset:
    """n subjects by d categorical features, stored as integer level codes.

    ``parent_index`` records the rows of the originating dataset when this
    one is a subset view.
    """

    specs: tuple[FeatureSpec, ...]
    codes: np.ndarray
    subject_ids: tuple[str, ...]
    parent_index: np.ndarray | None = None

    def __post_init__(self):
        codes = np.ascontiguousarray(self.codes, dtype=np.int64)
        if codes.ndim != 2:
            raise ValueError("codes must be an n x d matrix")
        n, d = codes.shape
        if n < 1 or d < 1:
            raise ValueError(f"dataset must have n >= 1 and d >= 1, got {n} x {d}")
        if d != len(self.specs):
            raise ValueError(f"{d} code columns but {len(self.specs)} feature specs")
        if len(self.subject_ids) != n:
            raise ValueError("subject id count does not match rows")
        if len(set(self.subject_ids)) != n:
            raise ValueError("subject ids must be unique")
        for j, spec in enumerate(self.specs):
            col = codes[:, j]
            if col.min() < 0 or col.max() >= spec.n_levels:
                raise ValueError(f"feature {spec.name!r} has codes outside 0..{spec.n_levels - 1}")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "subject_ids", tuple(str(s) for s in self.subject_ids))

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def d(self) -> int:
        return self.codes.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [s.name for s in self.specs]

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}; have {self.feature_names}") from None

    def labels(self, j: int) -> np.ndarray:
        return np.asarray(self.specs[j].levels, dtype=object)[self.codes[:, j]]

    def subset(self, rows: np.ndarray) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        parent = rows if self.parent_index is None else self.parent_index[rows]
        return Dataset(
            self.specs,
            self.codes[rows],
            tuple(self.subject_ids[i] for i in rows),
            parent_index=parent,
        )

    def to_frame(self) -> pd.DataFrame:
        data = {"subject_id": list(self.subject_ids)}
        for j, spec in enumerate(self.specs):
            data[spec.name] = self.labels(j)
        return pd.DataFrame(data)


RESPONSE_NAMES = ("y", "yhat", "residual", "fp", "fn")


@dataclass(frozen=True, eq=False)
class ResponseSet:
    """Aligned per-subject responses; residual, fp and fn are derived."""

    y: np.ndarray
    yhat: np.ndarray
    residual: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    extra: Mapping[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_binary(cls, y, yhat, extra: Mapping[str, np.ndarray] | None = None) -> "ResponseSet":
        y = np.asarray(y, dtype=float)
        yhat = np.asarray(yhat, dtype=float)
        if y.shape != yhat.shape or y.ndim != 1:
            raise ValueError("y and yhat must be aligned 1-d vectors")
        for name, v in (("y", y), ("yhat", yhat)):
            if not np.isin(v, (0.0, 1.0)).all():
                raise ValueError(f"{name} must be binary")
        fp = ((y == 0) & (yhat == 1)).astype(float)
        fn = ((y == 1) & (yhat == 0)).astype(float)
        extra = {k: np.asarray(v, dtype=float) for k, v in (extra or {}).items()}
        for k, v in extra.items():
            if k in RESPONSE_NAMES:
                raise ValueError(f"custom response name {k!r} clashes with a built-in")
            if v.shape != y.shape:
                raise ValueError(f"custom response {k!r} has wrong length")
        out = cls(y, yhat, y - yhat, fp, fn, extra)
        for v in (out.y, out.yhat, out.residual, out.fp, out.fn, *extra.values()):
            v.setflags(write=False)
        return out

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def names(self) -> list[str]:
        return [*RESPONSE_NAMES, *self.extra]

    def __getitem__(self, name: str) -> np.ndarray:
        if name in RESPONSE_NAMES:
            return getattr(self, name)
        try:
            return self.extra[name]
        except KeyError:
            raise KeyError(f"unknown response {name!r}; have {self.names}") from None

    def subset(self, rows: np.ndarray) -> "ResponseSet":
        rows = np.asarray(rows, dtype=np.int64)
        return ResponseSet.from_binary(
            self.y[rows], self.yhat[rows], {k: v[rows] for k, v in self.extra.items()}
        )

    def to_frame(self, subject_ids: Sequence[str]) -> pd.DataFrame:
        data = {"subject_id": list(subject_ids)}
        for name in self.names:
            data[name] = self[name]
        return pd.DataFrame(data)


# ---------------------------------------------------------------------------
# binning


@dataclass(frozen=True)
class Bin:
    """Closed interval [lo, hi]; ``None`` means unbounded on that side."""

    label: str
    lo: float | None = None
    hi: float | None = None

    def contains(self, values: np.ndarray) -> np.ndarray:
        ok = np.ones(len(values), dtype=bool)
        if self.lo is not None:
            ok &= values >= self.lo
        if self.hi is not None:
            ok &= values <= self.hi
        return ok


@dataclass(frozen=True)
class FeatureBinning:
    """How one raw column becomes a categorical feature.

    Either ``bins`` (numeric column, closed intervals) or ``mapping``
    (raw text value -> level label) must be given.
    """

    name: str
    column: str
    bins: tuple[Bin, ...] = ()
    mapping: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if bool(self.bins) == bool(self.mapping):
            raise ValueError(f"feature {self.name!r}: give exactly one of bins or mapping")

    @property
    def levels(self) -> tuple[str, ...]:
        if self.bins:
            return tuple(b.label for b in self.bins)
        return tuple(dict.fromkeys(label for _, label in self.mapping))

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureBinning":
        name = d["name"]
        column = d.get("column", name)
        if "bins" in d:
            bins = tuple(Bin(str(b["label"]), b.get("min"), b.get("max")) for b in d["bins"])
            return cls(name, column, bins=bins)
        mapping = d.get("mapping")
        if mapping is None:
            levels = d.get("levels")
            if levels is None:
                raise ValueError(f"feature {name!r}: need bins, mapping or levels")
            mapping = {str(v): str(v) for v in levels}
        return cls(name, column, mapping=tuple((str(k), str(v)) for k, v in mapping.items()))

    def encode(self, raw: pd.Series, subject_ids: Sequence[str]) -> np.ndarray:
        codes = np.full(len(raw), -1, dtype=np.int64)
        if self.bins:
            values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float, na_value=np.nan)
            for k, b in enumerate(self.bins):
                hit = b.contains(values) & (codes == -1)
                codes[hit] = k
        else:
            lookup = {raw_value: self.levels.index(label) for raw_value, label in self.mapping}
            codes = np.array([lookup.get(str(v), -1) if pd.notna(v) else -1 for v in raw], dtype=np.int64)
        bad = np.flatnonzero(codes < 0)
        if len(bad):
            i = int(bad[0])
            raise DataError(
                f"subject {subject_ids[i]}: {self.column}={raw.iloc[i]!r} falls outside every "
                f"level of feature {self.name!r}"
            )
        return codes


def bin_features(
    raw: RawTable, binning: Sequence[FeatureBinning], id_column: str | None = "id"
) -> Dataset:
    raw.require([b.column for b in binning], context="binning")
    if id_column is not None and id_column in raw.frame.columns:
        ids = [str(v) for v in raw.frame[id_column]]
    else:
        ids = [str(i) for i in range(len(raw))]
    if len(raw) == 0:
        raise DataError("cannot build a dataset from zero rows")
    codes = np.column_stack([b.encode(raw.frame[b.column], ids) for b in binning])
    specs = tuple(FeatureSpec(b.name, b.levels) for b in binning)
    return Dataset(specs, codes, tuple(ids))


def compas_binning(age_source: str = "age") -> tuple[FeatureBinning, ...]:
    """Features for the COMPAS audit.

    ``age_source="age"`` bins the numeric age with 25-45 inclusive on both
    ends; ``"age_cat"`` uses ProPublica's own category column, which places
    age 45 in ">45".
    """
    priors = FeatureBinning(
        "priors_count",
        "priors_count",
        bins=(Bin("0", 0, 0), Bin("1-3", 1, 3), Bin("4-6", 4, 6), Bin("7-10", 7, 10), Bin(">10", 11, None)),
    )
    crime = FeatureBinning("crime_factor", "c_charge_degree", mapping=(("F", "Felony"), ("M", "Misdemeanor")))
    if age_source == "age":
        age = FeatureBinning("age_factor", "age", bins=(Bin("<25", None, 24), Bin("25-45", 25, 45), Bin(">45", 46, None)))
    elif age_source == "age_cat":
        age = FeatureBinning(
            "age_factor",
            "age_cat",
            mapping=(("Less than 25", "<25"), ("25 - 45", "25-45"), ("Greater than 45", ">45")),
        )
    else:
        raise ValueError(f"age_source must be 'age' or 'age_cat', got {age_source!r}")
    race = FeatureBinning("race_factor", "race", mapping=(("Caucasian", "White"), ("African-American", "Black")))
    gender = FeatureBinning("gender_factor", "sex", mapping=(("Male", "Male"), ("Female", "Female")))
    return (priors, crime, age, race, gender)


def derive_responses(
    raw: RawTable,
    threshold: int | None = 5,
    outcome_column: str = "two_year_recid",
    score_column: str = "decile_score",
    score_range: tuple[int, int] | None = (1, 10),
    custom: Mapping[str, str] | None = None,
) -> ResponseSet:
    """Outcome ``y`` copied, prediction ``yhat = 1{score >= threshold}``.

    With ``threshold=None`` the score column must already be binary.
    ``custom`` maps extra response names to numeric columns.
    """
    raw.require([outcome_column, score_column, *(custom or {}).values()], context="responses")
    y = pd.to_numeric(raw.frame[outcome_column], errors="coerce").to_numpy(dtype=float, na_value=np.nan)
    score = pd.to_numeric(raw.frame[score_column], errors="coerce").to_numpy(dtype=float, na_value=np.nan)
    for name, v in ((outcome_column, y), (score_column, score)):
        if np.isnan(v).any():
            raise DataError(f"row {int(np.flatnonzero(np.isnan(v))[0])}: missing {name}")
    if not np.isin(y, (0.0, 1.0)).all():
        i = int(np.flatnonzero(~np.isin(y, (0.0, 1.0)))[0])
        raise DataError(f"row {i}: outcome {outcome_column}={y[i]} is not 0/1")
    if threshold is None:
        yhat = score
        if not np.isin(yhat, (0.0, 1.0)).all():
            raise DataError(f"prediction column {score_column!r} must be binary when no threshold is set")
    else:
        if score_range is not None:
            lo, hi = score_range
            out = (score < lo) | (score > hi)
            if out.any():
                i = int(np.flatnonzero(out)[0])
                raise DataError(f"row {i}: {score_column}={score[i]:g} outside {lo}..{hi}")
        yhat = (score >= threshold).astype(float)
    extra = {}
    for name, column in (custom or {}).items():
        extra[name] = pd.to_numeric(raw.frame[column], errors="raise").to_numpy(dtype=float)
    return ResponseSet.from_binary(y, yhat, extra)


# ---------------------------------------------------------------------------
# recipes


@dataclass(frozen=True)
class Recipe:
    """Everything needed to turn a raw file into a Dataset and ResponseSet."""

    kind: str = "compas"
    delimiter: str = ","
    id_column: str | None = "id"
    propublica_filters: bool = True
    race_column: str = "race"
    kept_races: tuple[str, ...] | None = COMPAS_RACES
    binning: tuple[FeatureBinning, ...] = ()
    outcome_column: str = "two_year_recid"
    score_column: str = "decile_score"
    threshold: int | None = 5
    score_range: tuple[int, int] | None = (1, 10)
    age_source: str = "age"
    schema: Mapping[str, str] = field(default_factory=dict)
    custom_responses: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def compas(cls, **overrides) -> "Recipe":
        age_source = overrides.pop("age_source", "age")
        return cls(binning=compas_binning(age_source), age_source=age_source, schema=COMPAS_SCHEMA, **overrides)

    @classmethod
    def from_dict(cls, d: Mapping) -> "Recipe":
        kind = d.get("recipe", d.get("kind", "compas"))
        common = {}
        if "threshold" in d:
            common["threshold"] = d["threshold"]
        if "delimiter" in d:
            common["delimiter"] = d["delimiter"]
        if "custom_responses" in d:
            common["custom_responses"] = dict(d["custom_responses"])
        if kind == "compas":
            if "age_source" in d:
                common["age_source"] = d["age_source"]
            if "kept_races" in d:
                common["kept_races"] = tuple(d["kept_races"])
            return cls.compas(**common)
        if kind != "generic":
            raise ValueError(f"unknown dataset recipe {kind!r}")
        kept = d.get("keep")
        return cls(
            kind="generic",
            id_column=d.get("id_column"),
            propublica_filters=bool(d.get("propublica_filters", False)),
            race_column=(kept or {}).get("column", "race"),
            kept_races=tuple(kept["values"]) if kept else None,
            binning=tuple(FeatureBinning.from_dict(f) for f in d["features"]),
            outcome_column=d.get("outcome_column", "y"),
            score_column=d.get("score_column", "score"),
            score_range=tuple(d["score_range"]) if d.get("score_range") else None,
            schema=dict(d.get("schema", {})),
            **common,
        )

    def to_dict(self) -> dict:
        """Canonical, JSON-serializable form (hashed into manifests)."""
        return {
            "kind": self.kind,
            "delimiter": self.delimiter,
            "id_column": self.id_column,
            "propublica_filters": self.propublica_filters,
            "race_column": self.race_column,
            "kept_races": list(self.kept_races) if self.kept_races is not None else None,
            "binning": [
                {
                    "name": b.name,
                    "column": b.column,
                    "bins": [[x.label, x.lo, x.hi] for x in b.bins],
                    "mapping": [list(m) for m in b.mapping],
                }
                for b in self.binning
            ],
            "outcome_column": self.outcome_column,
            "score_column": self.score_column,
            "threshold": self.threshold,
            "score_range": list(self.score_range) if self.score_range else None,
            "age_source": self.age_source,
            "custom_responses": dict(sorted(self.custom_responses.items())),
        }


@dataclass(frozen=True)
class PipelineResult:
    dataset: Dataset
    responses: ResponseSet
    funnel: dict[str, int]
    ambiguities: tuple[str, ...] = ()


def _age_ambiguity(table: RawTable, recipe: Recipe) -> tuple[str, ...]:
    if recipe.kind != "compas" or "age" not in table.frame.columns:
        return ()
    at_45 = int((pd.to_numeric(table.frame["age"], errors="coerce") == 45).sum())
    if at_45 == 0:
        return ()
    placed = "25-45" if recipe.age_source == "age" else ">45"
    return (
        f"age boundary: {at_45} subjects aged exactly 45 are placed in {placed}; "
        "the inclusive 25-45 rule and ProPublica's age_cat column disagree at 45",
    )


def run_pipeline(path: str | Path, recipe: Recipe) -> PipelineResult:
    """load -> filters -> race restriction -> drop incomplete -> bin + responses."""
    raw = load_table(path, delimiter=recipe.delimiter, schema=recipe.schema)
    counts = {"raw": len(raw)}
    table = filter_propublica(raw) if recipe.propublica_filters else raw
    counts["filtered"] = len(table)
    if recipe.kept_races is not None:
        table = restrict_races(table, recipe.kept_races, recipe.race_column)
    counts["restricted"] = len(table)
    needed = [b.column for b in recipe.binning] + [recipe.outcome_column, recipe.score_column]
    needed += list(recipe.custom_responses.values())
    table, dropped = drop_incomplete(table, dict.fromkeys(needed))
    counts["incomplete_dropped"] = dropped
    counts["final"] = len(table)
    dataset = bin_features(table, recipe.binning, recipe.id_column)
    responses = derive_responses(
        table,
        threshold=recipe.threshold,
        outcome_column=recipe.outcome_column,
        score_column=recipe.score_column,
        score_range=recipe.score_range,
        custom=recipe.custom_responses,
    )
    return PipelineResult(dataset, responses, counts, _age_ambiguity(table, recipe))
