import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohortfair.cohort import (
    DegenerateWeightsError,
    SubjectSet,
    build_match_index,
    cohort,
    cohort_value,
)
from cohortfair.data_pipeline import Dataset, FeatureSpec


@st.composite
def datasets(draw, max_n=40, max_d=5):
    n = draw(st.integers(1, max_n))
    d = draw(st.integers(1, max_d))
    levels = [draw(st.integers(1, 3)) for _ in range(d)]
    codes = np.array([[draw(st.integers(0, k - 1)) for k in levels] for _ in range(n)]).reshape(n, d)
    specs = tuple(FeatureSpec(f"x{j}", tuple(map(str, range(k)))) for j, k in enumerate(levels))
    return Dataset(specs, codes, tuple(map(str, range(n))))


def naive_cohort(ds, t, u):
    return {i for i in range(ds.n) if all(ds.codes[i, j] == ds.codes[t, j] for j in u)}


class TestSubjectSet:
    def test_roundtrip_mask(self):
        mask = np.zeros(130, dtype=bool)
        mask[[0, 63, 64, 129]] = True
        s = SubjectSet.from_mask(mask)
        assert len(s) == 4
        assert s.indices.tolist() == [0, 63, 64, 129]
        assert 64 in s and 65 not in s

    def test_and_or_subset(self):
        a = SubjectSet.from_indices([1, 2, 3], 10)
        b = SubjectSet.from_indices([2, 3, 4], 10)
        assert (a & b).indices.tolist() == [2, 3]
        assert (a | b).indices.tolist() == [1, 2, 3, 4]
        assert (a & b).issubset(a) and not a.issubset(b)

    def test_population_mismatch(self):
        with pytest.raises(ValueError):
            SubjectSet.full(3) & SubjectSet.full(4)


class TestMatchIndex:
    def test_partition_compas(self, compas, compas_index):
        j = compas.dataset.feature_index("race_factor")
        sizes = [len(s) for s in compas_index.sets[j]]
        assert sum(sizes) == 5278
        assert sizes == [(compas.dataset.labels(j) == lv).sum() for lv in ("White", "Black")]

    def test_single_subject(self):
        ds = Dataset((FeatureSpec("a", ("x", "y")),), np.array([[1]]), ("only",))
        idx = build_match_index(ds)
        assert idx.sets[0][1].indices.tolist() == [0]
        assert len(idx.sets[0][0]) == 0

    def test_single_level_feature(self):
        ds = Dataset((FeatureSpec("a", ("x",)),), np.zeros((5, 1), dtype=int), tuple("abcde"))
        assert len(build_match_index(ds).sets[0][0]) == 5

    @given(datasets())
    def test_levels_partition(self, ds):
        idx = build_match_index(ds)
        for j in range(ds.d):
            union = SubjectSet.from_mask(np.zeros(ds.n, dtype=bool))
            total = 0
            for s in idx.sets[j]:
                union = union | s
                total += len(s)
            assert total == ds.n and len(union) == ds.n


class TestCohort:
    def test_empty_subset_is_everyone(self, four_subjects):
        idx = build_match_index(four_subjects)
        assert len(cohort(idx, 2, [])) == 4

    def test_hand_example(self, four_subjects):
        idx = build_match_index(four_subjects)
        assert cohort(idx, 0, [0]).indices.tolist() == [0, 1]
        assert cohort(idx, 0, 0b10).indices.tolist() == [0, 2]
        assert cohort(idx, 0, [0, 1]).indices.tolist() == [0]

    def test_bad_target(self, four_subjects):
        with pytest.raises(IndexError):
            cohort(build_match_index(four_subjects), 4, [0])

    @given(datasets(), st.data())
    def test_matches_row_scan(self, ds, data):
        idx = build_match_index(ds)
        t = data.draw(st.integers(0, ds.n - 1))
        u = data.draw(st.sets(st.integers(0, ds.d - 1)))
        c = cohort(idx, t, u)
        assert set(c.indices.tolist()) == naive_cohort(ds, t, u)
        assert t in c

    @given(datasets(), st.data())
    def test_monotone(self, ds, data):
        idx = build_match_index(ds)
        t = data.draw(st.integers(0, ds.n - 1))
        u = data.draw(st.sets(st.integers(0, ds.d - 1)))
        for j in set(range(ds.d)) - u:
            assert cohort(idx, t, u | {j}).issubset(cohort(idx, t, u))


class TestCohortValue:
    def test_global_mean(self):
        r = np.array([1.0, 0, 1, 1])
        assert cohort_value(SubjectSet.full(4), r) == 0.75

    def test_hand_example(self, four_subjects):
        idx = build_match_index(four_subjects)
        assert cohort_value(cohort(idx, 0, [0]), np.array([1.0, 0, 0, 0])) == 0.5

    def test_singleton(self, four_subjects):
        idx = build_match_index(four_subjects)
        r = np.array([0.3, -2.0, 5.0, 1.25])
        for t in range(4):
            assert cohort_value(cohort(idx, t, [0, 1]), r) == r[t]

    def test_weighted(self):
        c = SubjectSet.from_indices([0, 2], 3)
        assert cohort_value(c, np.array([1.0, 9.0, 3.0]), np.array([1.0, 5.0, 3.0])) == pytest.approx(2.5)

    def test_zero_mass_raises(self):
        c = SubjectSet.from_indices([0, 1], 3)
        with pytest.raises(DegenerateWeightsError):
            cohort_value(c, np.ones(3), np.array([0.0, 0.0, 1.0]))

    def test_empty_cohort_raises(self):
        with pytest.raises(ValueError):
            cohort_value(SubjectSet.from_mask(np.zeros(3, bool)), np.ones(3))

    @settings(max_examples=200)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=300))
    def test_mean_against_exact_rational(self, values):
        r = np.array(values)
        exact = sum(Fraction(v) for v in values) / len(values)
        got = cohort_value(SubjectSet.full(len(r)), r)
        assert abs(got - float(exact)) <= 1e-12 * max(1.0, abs(float(exact)))

    @given(
        st.lists(st.tuples(st.floats(-100, 100), st.floats(0.01, 100)), min_size=1, max_size=50),
        st.floats(1e-3, 1e3),
    )
    def test_weight_scale_invariance(self, pairs, alpha):
        r = np.array([p[0] for p in pairs])
        w = np.array([p[1] for p in pairs])
        c = SubjectSet.full(len(r))
        assert math.isclose(cohort_value(c, r, alpha * w), cohort_value(c, r, w), rel_tol=1e-12, abs_tol=1e-12)

    def test_unit_weights_bitwise_equal_unweighted(self):
        rng = np.random.default_rng(5)
        r = rng.normal(size=501)
        c = SubjectSet.from_mask(rng.random(501) < 0.4)
        assert cohort_value(c, r, np.ones(501)) == cohort_value(c, r)
