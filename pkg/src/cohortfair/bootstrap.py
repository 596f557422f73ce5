"""Bayesian bootstrap of group-aggregated cohort Shapley impacts.

Each replicate reweights subjects by independent unit-mean exponential
draws. The weights enter twice: in the cohort means that define the value
function, and in the group averages over target subjects.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .cohort import MatchIndex, build_match_index
from .data_pipeline import Dataset
from .shapley import aggregate_impacts, cohort_shapley_all

_MANTISSA = 2**53


def draw_weights(n: int, seed: int, replicate: int) -> np.ndarray:
    """n iid Exp(1) weights from a Philox stream keyed by ``(seed, replicate)``.

    Subject i always receives the i-th draw of that stream. Uniforms are
    taken at bin centres of a 53-bit grid, so every weight is strictly
    positive.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    bitgen = np.random.Philox(np.random.SeedSequence([int(seed), int(replicate)]))
    k = np.random.Generator(bitgen).integers(0, _MANTISSA, size=n, dtype=np.int64)
    u = (k.astype(np.float64) + 0.5) / _MANTISSA
    return -np.log(u)


@dataclass(frozen=True, eq=False)
class ReplicateSet:
    """``values[b, g, j]``: replicate b's mean impact of feature j in group g."""

    values: np.ndarray
    point: np.ndarray
    groups: tuple[str, ...]
    feature_names: tuple[str, ...]
    seed: int
    response: str = ""

    @property
    def B(self) -> int:
        return self.values.shape[0]


def aggregate_all(idx: MatchIndex, r: np.ndarray, groups, w: np.ndarray | None) -> np.ndarray:
    """(groups x features) weighted mean impacts for one weight vector."""
    im = cohort_shapley_all(r, idx, w)
    return np.array([aggregate_impacts(im, mask, w, label).means for label, mask in groups])


_worker_state: dict = {}


def _init_worker(ds: Dataset, r: np.ndarray, groups, seed: int) -> None:
    _worker_state.update(idx=build_match_index(ds), r=r, groups=groups, seed=seed)


def _run_replicate(b: int) -> np.ndarray:
    s = _worker_state
    w = draw_weights(s["idx"].n, s["seed"], b)
    return aggregate_all(s["idx"], s["r"], s["groups"], w)


def bootstrap_aggregates(
    ds: Dataset,
    r: np.ndarray,
    groups: Sequence[tuple[str, np.ndarray]],
    B: int,
    seed: int,
    response: str = "",
    weights_override: np.ndarray | None = None,
    workers: int = 1,
) -> ReplicateSet:
    """B reweighted recomputations of group mean impacts, plus the unweighted point estimate.

    ``weights_override`` replaces every replicate's draw (used to check
    that unit weights reproduce the point estimate). Replicates are gathered
    by index, so ``workers`` never changes the result.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    groups = [(label, np.asarray(mask)) for label, mask in groups]
    for label, mask in groups:
        if not np.asarray(mask).any():
            raise ValueError(f"group {label!r} is empty")
    idx = build_match_index(ds)
    r = np.asarray(r, dtype=float)
    point = aggregate_all(idx, r, groups, None)
    if weights_override is not None:
        reps = [aggregate_all(idx, r, groups, weights_override) for _ in range(B)]
    elif workers > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(ds, r, groups, seed)) as pool:
            reps = list(pool.map(_run_replicate, range(B), chunksize=max(1, B // (4 * workers))))
    else:
        reps = [aggregate_all(idx, r, groups, draw_weights(ds.n, seed, b)) for b in range(B)]
    return ReplicateSet(
        np.array(reps), point, tuple(g for g, _ in groups), tuple(ds.feature_names), int(seed), response
    )


def summarize_replicates(
    rs: ReplicateSet, quantiles: Sequence[float] = (0.025, 0.5, 0.975), bins: int | None = None
) -> tuple[pd.DataFrame, pd.DataFrame | None]:
    """Per (group, feature): point estimate, mean, sd and quantiles.

    With ``bins`` set, also returns binned replicate counts (violin data).
    Quantiles use linear interpolation between order statistics.
    """
    if rs.B < 1:
        raise ValueError("empty replicate set")
    qs = [float(q) for q in quantiles]
    bad = [q for q in qs if not 0.0 <= q <= 1.0]
    if bad:
        raise ValueError(f"quantiles must lie in [0, 1], got {bad}")
    records = []
    density = []
    for g, group in enumerate(rs.groups):
        for j, feature in enumerate(rs.feature_names):
            col = rs.values[:, g, j]
            rec = {
                "group": group,
                "feature": feature,
                "point": float(rs.point[g, j]),
                "mean": math.fsum(col) / len(col),
                "sd": float(np.std(col, ddof=1)) if len(col) > 1 else 0.0,
            }
            for q in qs:
                rec[f"q{q:g}"] = float(np.quantile(col, q))
            records.append(rec)
            if bins:
                lo, hi = float(col.min()), float(col.max())
                if lo == hi:
                    lo, hi = lo - 0.5, hi + 0.5
                counts, edges = np.histogram(col, bins=bins, range=(lo, hi))
                for k, c in enumerate(counts):
                    density.append(
                        {"group": group, "feature": feature, "bin_lo": edges[k], "bin_hi": edges[k + 1], "count": int(c)}
                    )
    return pd.DataFrame(records), (pd.DataFrame(density) if bins else None)


def replicates_frame(rs: ReplicateSet) -> pd.DataFrame:
    B, G, d = rs.values.shape
    return pd.DataFrame(
        {
            "replicate": np.repeat(np.arange(B), G * d),
            "group": np.tile(np.repeat(rs.groups, d), B),
            "feature": np.tile(rs.feature_names, B * G),
            "value": rs.values.reshape(-1),
        }
    )
