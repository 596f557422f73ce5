"""Cohort Shapley impacts: exact subset enumeration, permutation sampling,
a d!-order brute-force reference, and group aggregation."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .cohort import MatchIndex, SubjectSet, cohort_value

EXACT_MAX_D = 20
BRUTE_FORCE_MAX_D = 8


@dataclass(frozen=True, eq=False)
class ValueTable:
    """``values[u]`` is val(u) for the feature subset with bitmask ``u``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        size = len(v)
        if size < 2 or size & (size - 1):
            raise ValueError(f"value table needs 2**d entries with d >= 1, got {size}")
        if not np.isfinite(v).all():
            raise ValueError("value table has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return len(self.values).bit_length() - 1

    def __add__(self, other: "ValueTable") -> "ValueTable":
        return ValueTable(self.values + other.values)


@dataclass(frozen=True, eq=False)
class ImpactVector:
    phi: np.ndarray
    target: int | None = None
    stderr: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.phi)


@dataclass(frozen=True, eq=False)
class ImpactMatrix:
    """Row t holds the impacts of every feature for subject t on one response."""

    values: np.ndarray
    response: str
    feature_names: tuple[str, ...]
    subject_ids: tuple[str, ...]
    mode: str = "exact"
    samples: int | None = None
    seed: int | None = None
    stderr: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def column(self, feature: str | int) -> np.ndarray:
        j = feature if isinstance(feature, int) else self.feature_names.index(feature)
        return self.values[:, j]


@dataclass(frozen=True, eq=False)
class GroupSummary:
    label: str
    size: int
    means: np.ndarray
    feature_names: tuple[str, ...] = field(default=())

    def __getitem__(self, feature: str) -> float:
        return float(self.means[self.feature_names.index(feature)])


@lru_cache(maxsize=None)
def shapley_weights(d: int) -> np.ndarray:
    """Weight of val(j|u) for |u| = k: k! (d-1-k)! / d!, rounded once from exact rationals."""
    total = math.factorial(d)
    return np.array(
        [float(Fraction(math.factorial(k) * math.factorial(d - 1 - k), total)) for k in range(d)]
    )


@lru_cache(maxsize=32)
def _lattice(d: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    # for each j: subsets u not containing j, and the Shapley weight of each
    u = np.arange(1 << d, dtype=np.int64)
    size = np.bitwise_count(u).astype(np.int64)
    w = shapley_weights(d)
    out = []
    for j in range(d):
        base = u[((u >> j) & 1) == 0]
        out.append((base, w[size[base]]))
    return tuple(out)


def shapley_from_values(vt: ValueTable, max_d: int = EXACT_MAX_D) -> ImpactVector:
    d = vt.d
    if d > max_d:
        raise ValueError(
            f"exact enumeration over 2**{d} subsets exceeds the cap d <= {max_d}; "
            "use permutation_estimate instead"
        )
    val = vt.values
    phi = np.empty(d)
    for j, (base, weight) in enumerate(_lattice(d)):
        phi[j] = math.fsum(weight * (val[base | (1 << j)] - val[base]))
    return ImpactVector(phi)


def brute_force_oracle(vt: ValueTable) -> ImpactVector:
    """Average increment of each player over all d! join orders (test reference)."""
    d = vt.d
    if d > BRUTE_FORCE_MAX_D:
        raise ValueError(f"brute force over {d}! orders is too large (d <= {BRUTE_FORCE_MAX_D})")
    val = vt.values.tolist()
    increments: list[list[float]] = [[] for _ in range(d)]
    for order in itertools.permutations(range(d)):
        u = 0
        for j in order:
            increments[j].append(val[u | (1 << j)] - val[u])
            u |= 1 << j
    orders = math.factorial(d)
    return ImpactVector(np.array([math.fsum(inc) / orders for inc in increments]))


def _check_weights(w: np.ndarray | None, n: int) -> np.ndarray | None:
    if w is None:
        return None
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weight vector has shape {w.shape}, expected ({n},)")
    if (w < 0).any() or not np.isfinite(w).all():
        raise ValueError("weights must be finite and non-negative")
    if not w.any():
        raise ValueError("weights are all zero")
    return w


class _Values:
    """Memoized val(u) lookups for one (response, weights) pair."""

    def __init__(self, idx: MatchIndex, r: np.ndarray, w: np.ndarray | None):
        self.idx = idx
        self.r = np.asarray(r, dtype=float)
        if self.r.shape != (idx.n,):
            raise ValueError(f"response has shape {self.r.shape}, expected ({idx.n},)")
        self.w = _check_weights(w, idx.n)
        self._memo: dict[int, float] = {}

    def __call__(self, codes: np.ndarray, u: int) -> float:
        c = self.idx.cohort_for_codes(codes, u)
        key = id(c)
        v = self._memo.get(key)
        if v is None:
            v = cohort_value(c, self.r, self.w)
            self._memo[key] = v
        return v

    def table(self, codes: np.ndarray) -> ValueTable:
        return ValueTable(np.array([self(codes, u) for u in range(1 << self.idx.d)]))


def value_table(idx: MatchIndex, t: int, r: np.ndarray, w: np.ndarray | None = None) -> ValueTable:
    return _Values(idx, r, w).table(idx.codes[t])


def cohort_shapley_exact(
    t: int, r: np.ndarray, idx: MatchIndex, w: np.ndarray | None = None
) -> ImpactVector:
    if idx.d > EXACT_MAX_D:
        raise ValueError(f"d={idx.d} exceeds the exact cap {EXACT_MAX_D}; use permutation_estimate")
    vt = value_table(idx, t, r, w)
    return ImpactVector(shapley_from_values(vt).phi, target=t)


def _unique_patterns(idx: MatchIndex) -> tuple[np.ndarray, np.ndarray]:
    cached = getattr(idx, "_patterns", None)
    if cached is None:
        patterns, inverse = np.unique(idx.codes, axis=0, return_inverse=True)
        cached = (patterns, inverse.reshape(-1))
        idx._patterns = cached
    return cached


def cohort_shapley_all(
    r: np.ndarray,
    idx: MatchIndex,
    w: np.ndarray | None = None,
    response: str = "",
) -> ImpactMatrix:
    """Exact impacts for every subject.

    Subjects with identical feature codes share every cohort, hence an
    identical value table; each distinct code pattern is solved once.
    """
    if idx.d > EXACT_MAX_D:
        raise ValueError(f"d={idx.d} exceeds the exact cap {EXACT_MAX_D}; use sampled mode")
    values = _Values(idx, r, w)
    patterns, inverse = _unique_patterns(idx)
    phis = np.array([shapley_from_values(values.table(p)).phi for p in patterns])
    ds = idx.dataset
    return ImpactMatrix(phis[inverse], response, tuple(ds.feature_names), ds.subject_ids)


def _target_rng(seed: int, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(t)]))


def _permutation_increments(values: _Values, codes: np.ndarray, orders) -> np.ndarray:
    d = len(codes)
    rows = []
    for order in orders:
        inc = np.empty(d)
        u = 0
        prev = values(codes, 0)
        for j in order:
            u |= 1 << int(j)
            cur = values(codes, u)
            inc[j] = cur - prev
            prev = cur
        rows.append(inc)
    return np.array(rows)


def _permutation_vector(values: _Values, t: int, m: int, seed: int, exhaustive: bool) -> ImpactVector:
    d = values.idx.d
    codes = values.idx.codes[t]
    if exhaustive:
        inc = _permutation_increments(values, codes, itertools.permutations(range(d)))
        phi = np.array([math.fsum(col) / len(inc) for col in inc.T])
        return ImpactVector(phi, target=t, stderr=np.zeros(d))
    if m < 1:
        raise ValueError("sample count m must be >= 1")
    rng = _target_rng(seed, t)
    inc = _permutation_increments(values, codes, (rng.permutation(d) for _ in range(m)))
    phi = np.array([math.fsum(col) / m for col in inc.T])
    stderr = inc.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.full(d, np.nan)
    return ImpactVector(phi, target=t, stderr=stderr)


def permutation_estimate(
    t: int,
    r: np.ndarray,
    idx: MatchIndex,
    m: int,
    seed: int,
    w: np.ndarray | None = None,
    exhaustive: bool = False,
) -> ImpactVector:
    """Monte Carlo Shapley over ``m`` uniformly random feature orders.

    The generator for target ``t`` is keyed by ``(seed, t)``, so results do
    not depend on which other targets are computed or in what order.
    ``exhaustive=True`` visits all d! orders exactly once instead.
    """
    return _permutation_vector(_Values(idx, r, w), t, m, seed, exhaustive)


def cohort_shapley_sampled(
    r: np.ndarray,
    idx: MatchIndex,
    m: int,
    seed: int,
    w: np.ndarray | None = None,
    response: str = "",
    targets: np.ndarray | None = None,
) -> ImpactMatrix:
    values = _Values(idx, r, w)
    targets = np.arange(idx.n) if targets is None else np.asarray(targets)
    phi = np.zeros((idx.n, idx.d))
    se = np.zeros((idx.n, idx.d))
    for t in targets:
        iv = _permutation_vector(values, int(t), m, seed, exhaustive=False)
        phi[t], se[t] = iv.phi, iv.stderr
    ds = idx.dataset
    return ImpactMatrix(
        phi, response, tuple(ds.feature_names), ds.subject_ids, mode="sampled", samples=m, seed=seed, stderr=se
    )


def _as_rows(subjects, n: int) -> np.ndarray:
    if isinstance(subjects, SubjectSet):
        return subjects.indices
    arr = np.asarray(subjects)
    if arr.dtype == bool:
        return np.flatnonzero(arr)
    return arr.astype(np.int64)


def aggregate_impacts(
    im: ImpactMatrix, subjects=None, w: np.ndarray | None = None, label: str = ""
) -> GroupSummary:
    """Per-feature (weighted) mean impact over a subset of target subjects.

    ``subjects`` may be a SubjectSet, a boolean mask or index array; None
    means everyone.
    """
    rows = np.arange(im.n) if subjects is None else _as_rows(subjects, im.n)
    if len(rows) == 0:
        raise ValueError(f"cannot aggregate over an empty subject set {label!r}".rstrip())
    block = im.values[rows]
    if w is None:
        means = np.array([math.fsum(col) / len(rows) for col in block.T])
    else:
        wv = np.asarray(w, dtype=float)[rows]
        mass = math.fsum(wv)
        if not mass > 0:
            raise ValueError("aggregation weights sum to zero")
        means = np.array([math.fsum(wv * col) / mass for col in block.T])
    return GroupSummary(label, len(rows), means, im.feature_names)
