import os
from pathlib import Path

import numpy as np
import pytest

from cohortfair.cohort import build_match_index
from cohortfair.data_pipeline import Dataset, FeatureSpec, Recipe, ResponseSet, run_pipeline
from cohortfair.shapley import cohort_shapley_all

ROOT = Path(__file__).resolve().parents[1]
COMPAS_CSV = Path(os.environ.get("COHORTFAIR_COMPAS", ROOT / "data" / "compas-scores-two-years.csv"))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def compas_path():
    if not COMPAS_CSV.is_file():
        pytest.skip(f"COMPAS extract not found at {COMPAS_CSV} (set COHORTFAIR_COMPAS)")
    return COMPAS_CSV


@pytest.fixture(scope="session")
def compas(compas_path):
    return run_pipeline(compas_path, Recipe.compas())


@pytest.fixture(scope="session")
def compas_index(compas):
    return build_match_index(compas.dataset)


@pytest.fixture(scope="session")
def compas_impacts(compas, compas_index):
    return {
        name: cohort_shapley_all(compas.responses[name], compas_index, response=name)
        for name in ("yhat", "y", "residual", "fp", "fn")
    }


@pytest.fixture
def four_subjects():
    """Features (A,A), (A,B), (B,A), (B,B)."""
    specs = (FeatureSpec("f0", ("A", "B")), FeatureSpec("f1", ("A", "B")))
    codes = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
    return Dataset(specs, codes, ("s0", "s1", "s2", "s3"))


def random_dataset(rng: np.random.Generator, n: int, d: int, max_levels: int = 3) -> Dataset:
    levels = rng.integers(1, max_levels + 1, size=d)
    codes = np.column_stack([rng.integers(0, k, size=n) for k in levels])
    specs = tuple(FeatureSpec(f"x{j}", tuple(str(v) for v in range(k))) for j, k in enumerate(levels))
    return Dataset(specs, codes, tuple(str(i) for i in range(n)))


def binary_responses(rng: np.random.Generator, n: int) -> ResponseSet:
    return ResponseSet.from_binary(rng.integers(0, 2, n), rng.integers(0, 2, n))
