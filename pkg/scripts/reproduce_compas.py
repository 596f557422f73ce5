"""Recompute the COMPAS mean-impact tables and compare them with published values.

    python scripts/reproduce_compas.py [--data data/compas-scores-two-years.csv]
        [--age-source age|age_cat] [--out results/compas]

Writes one long CSV with our value, the published value and the difference
for every (response, group, feature), and prints the rendered tables plus a
miss count at two tolerances.
"""

import argparse
import time
from pathlib import Path

import pandas as pd

from cohortfair.cohort import build_match_index
from cohortfair.data_pipeline import RESPONSE_NAMES, Recipe, run_pipeline
from cohortfair.fairness import group_metric_report, render_report
from cohortfair.reporting import mean_impact_table, render_mean_impact
from cohortfair.shapley import cohort_shapley_all

ROOT = Path(__file__).resolve().parents[1]
GROUPINGS = [("race_factor",), ("gender_factor",), ("race_factor", "gender_factor")]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", default=ROOT / "data" / "compas-scores-two-years.csv")
    ap.add_argument("--reference", default=ROOT / "data" / "published_mean_impacts.csv")
    ap.add_argument("--age-source", default="age", choices=["age", "age_cat"])
    ap.add_argument("--out", default=ROOT / "results" / "compas")
    args = ap.parse_args()

    res = run_pipeline(args.data, Recipe.compas(age_source=args.age_source))
    print("funnel:", res.funnel)
    for note in res.ambiguities:
        print("note:", note)

    t0 = time.perf_counter()
    idx = build_match_index(res.dataset)
    tables = []
    for name in RESPONSE_NAMES:
        im = cohort_shapley_all(res.responses[name], idx, response=name)
        table = mean_impact_table(im, res.dataset, GROUPINGS)
        tables.append(table)
        print(render_mean_impact(table, f"mean impact on {name}"))
    print(f"exact impacts for {len(RESPONSE_NAMES)} responses: {time.perf_counter() - t0:.2f} s\n")

    ours = pd.concat(tables, ignore_index=True)
    ref = pd.read_csv(args.reference)
    cmp = ref.merge(ours[["response", "group", "feature", "value"]], on=["response", "group", "feature"],
                    suffixes=("_published", "_ours"))
    cmp["diff"] = cmp["value_ours"] - cmp["value_published"]
    for tol in (0.0005, 0.003):
        n_miss = int((cmp["diff"].abs() > tol).sum())
        print(f"entries off by more than {tol}: {n_miss}/{len(cmp)}")
    worst = cmp.reindex(cmp["diff"].abs().sort_values(ascending=False).index).head(10)
    print(worst.to_string(index=False, float_format=lambda v: f"{v:+.4f}"))

    print()
    print(render_report(group_metric_report(res.dataset, res.responses, GROUPINGS)))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cmp.to_csv(out / f"comparison_{args.age_source}.csv", index=False)
    print("wrote", out / f"comparison_{args.age_source}.csv")


if __name__ == "__main__":
    main()
