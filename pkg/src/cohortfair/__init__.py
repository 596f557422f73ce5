"""Cohort Shapley fairness auditing for categorical tabular data."""

from .cohort import MatchIndex, SubjectSet, build_match_index, cohort, cohort_value
from .data_pipeline import Dataset, FeatureSpec, Recipe, ResponseSet, run_pipeline
from .shapley import (
    ImpactMatrix,
    ImpactVector,
    ValueTable,
    aggregate_impacts,
    brute_force_oracle,
    cohort_shapley_all,
    cohort_shapley_exact,
    permutation_estimate,
    shapley_from_values,
)

__all__ = [
    "Dataset",
    "FeatureSpec",
    "ImpactMatrix",
    "ImpactVector",
    "MatchIndex",
    "Recipe",
    "ResponseSet",
    "SubjectSet",
    "ValueTable",
    "aggregate_impacts",
    "brute_force_oracle",
    "build_match_index",
    "cohort",
    "cohort_shapley_all",
    "cohort_shapley_exact",
    "cohort_value",
    "permutation_estimate",
    "run_pipeline",
    "shapley_from_values",
]
