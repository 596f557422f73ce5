"""Bit-vector cohort index.

Each (feature, level) pair owns a packed bit-vector of the subjects at that
level. A cohort for target ``t`` and feature subset ``u`` is the word-wise
AND of the vectors for ``t``'s levels on ``u``. Cohorts depend on ``t`` only
through its codes on ``u``, so they are cached by ``(u, codes on u)`` and
built bottom-up: ``cohort(u + j) = cohort(u) & match[j][x_tj]``.
"""

from __future__ import annotations

import math
from functools import cached_property
from typing import Iterable

import numpy as np

from .data_pipeline import Dataset

_WORD = 64


class DegenerateWeightsError(ValueError):
    """A cohort carries zero total weight, so its weighted mean is undefined."""


def _as_mask(u: int | Iterable[int]) -> int:
    if isinstance(u, (int, np.integer)):
        return int(u)
    mask = 0
    for j in u:
        mask |= 1 << int(j)
    return mask


def mask_members(mask: int) -> list[int]:
    """Feature indices whose bit is set in ``mask``, ascending."""
    out = []
    j = 0
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return out


class SubjectSet:
    """Fixed-length set of subject indices packed into 64-bit words."""

    __slots__ = ("bits", "n", "__dict__")

    def __init__(self, bits: np.ndarray, n: int):
        self.bits = bits
        self.n = n

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "SubjectSet":
        mask = np.asarray(mask, dtype=bool)
        n = len(mask)
        padded = np.zeros(-(-n // _WORD) * _WORD, dtype=bool)
        padded[:n] = mask
        bits = np.packbits(padded, bitorder="little").view(np.uint64)
        return cls(bits, n)

    @classmethod
    def from_indices(cls, indices: Iterable[int], n: int) -> "SubjectSet":
        mask = np.zeros(n, dtype=bool)
        mask[list(indices)] = True
        return cls.from_mask(mask)

    @classmethod
    def full(cls, n: int) -> "SubjectSet":
        return cls.from_mask(np.ones(n, dtype=bool))

    def __and__(self, other: "SubjectSet") -> "SubjectSet":
        if self.n != other.n:
            raise ValueError("subject sets over different populations")
        return SubjectSet(np.bitwise_and(self.bits, other.bits), self.n)

    def __or__(self, other: "SubjectSet") -> "SubjectSet":
        if self.n != other.n:
            raise ValueError("subject sets over different populations")
        return SubjectSet(np.bitwise_or(self.bits, other.bits), self.n)

    @cached_property
    def cardinality(self) -> int:
        return int(np.bitwise_count(self.bits).sum())

    def __len__(self) -> int:
        return self.cardinality

    @cached_property
    def mask(self) -> np.ndarray:
        m = np.unpackbits(self.bits.view(np.uint8), bitorder="little")[: self.n].astype(bool)
        m.setflags(write=False)
        return m

    @cached_property
    def indices(self) -> np.ndarray:
        idx = np.flatnonzero(self.mask)
        idx.setflags(write=False)
        return idx

    def __contains__(self, i: int) -> bool:
        return bool(self.bits[i // _WORD] >> np.uint64(i % _WORD) & np.uint64(1))

    def issubset(self, other: "SubjectSet") -> bool:
        return bool(np.all(np.bitwise_and(self.bits, ~other.bits) == 0))

    def __eq__(self, other) -> bool:
        return isinstance(other, SubjectSet) and self.n == other.n and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.n, self.bits.tobytes()))

    def __repr__(self) -> str:
        shown = self.indices[:8].tolist()
        more = ", ..." if self.cardinality > 8 else ""
        return f"SubjectSet(n={self.n}, size={self.cardinality}, {shown}{more})"


class MatchIndex:
    """Per-(feature, level) match sets for one Dataset.

    The index itself never changes after construction; the cohort cache only
    grows and every entry is a pure function of its key.
    """

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        self.codes = dataset.codes
        self.n, self.d = self.codes.shape
        self.sets: list[list[SubjectSet]] = [
            [SubjectSet.from_mask(self.codes[:, j] == level) for level in range(spec.n_levels)]
            for j, spec in enumerate(dataset.specs)
        ]
        self._full = SubjectSet.full(self.n)
        self._cohorts: dict[tuple[int, tuple[int, ...]], SubjectSet] = {}

    def match_set(self, j: int, level: int) -> SubjectSet:
        return self.sets[j][level]

    def cohort_for_codes(self, codes: np.ndarray, u: int) -> SubjectSet:
        """Subjects whose codes agree with ``codes`` on every feature in ``u``."""
        if u == 0:
            return self._full
        members = mask_members(u)
        key = (u, tuple(int(codes[j]) for j in members))
        hit = self._cohorts.get(key)
        if hit is not None:
            return hit
        top = members[-1]
        parent = self.cohort_for_codes(codes, u & ~(1 << top))
        out = parent & self.sets[top][int(codes[top])]
        self._cohorts[key] = out
        return out

    def cohort(self, t: int, u: int | Iterable[int]) -> SubjectSet:
        if not 0 <= t < self.n:
            raise IndexError(f"target {t} outside 0..{self.n - 1}")
        u = _as_mask(u)
        if u >> self.d:
            raise ValueError(f"feature subset {u:#b} references features beyond d={self.d}")
        return self.cohort_for_codes(self.codes[t], u)


def build_match_index(ds: Dataset) -> MatchIndex:
    return MatchIndex(ds)


def cohort(idx: MatchIndex, t: int, u: int | Iterable[int]) -> SubjectSet:
    return idx.cohort(t, u)


def cohort_value(c: SubjectSet, r: np.ndarray, w: np.ndarray | None = None) -> float:
    """Weighted mean of ``r`` over the cohort (plain mean when ``w`` is None).

    Sums are exactly rounded (``math.fsum``), so the result does not depend
    on member order.
    """
    members = c.indices
    if len(members) == 0:
        raise ValueError("cohort is empty")
    rv = np.asarray(r, dtype=float)[members]
    if w is None:
        return math.fsum(rv) / len(members)
    wv = np.asarray(w, dtype=float)[members]
    mass = math.fsum(wv)
    if not mass > 0:
        raise DegenerateWeightsError(
            f"cohort of {len(members)} subjects has zero total weight (degenerate bootstrap draw)"
        )
    return math.fsum(wv * rv) / mass
