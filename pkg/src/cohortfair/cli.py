"""``cohortfair`` command line: preprocess, shapley, aggregate, histogram,
bootstrap, report.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from . import artifacts
from .artifacts import StaleArtifactError
from .bootstrap import bootstrap_aggregates, replicates_frame, summarize_replicates
from .cohort import DegenerateWeightsError, build_match_index
from .config import ConfigError, RunConfig, load_config
from .data_pipeline import DataError, run_pipeline
from .fairness import conditional_subset, group_metric_report, render_report
from .reporting import grouping_label, histogram_grid, make_groups, mean_impact_table, render_mean_impact
from .shapley import cohort_shapley_all, cohort_shapley_sampled

logger = logging.getLogger("cohortfair")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_inputs(cfg: RunConfig):
    """Dataset and responses from the preprocess step, restricted by ``condition``."""
    ds, resp, manifest = artifacts.load_pipeline(cfg.out_dir)
    try:
        sub_ds, sub_resp, rows = conditional_subset(ds, resp, cfg.condition)
    except KeyError as exc:
        raise UsageError(str(exc)) from exc
    return sub_ds, sub_resp, manifest


def _check_features(ds, cfg: RunConfig) -> None:
    names = set(ds.feature_names)
    for g in cfg.group_by:
        for f in g:
            if f not in names:
                raise UsageError(f"unknown grouping feature {f!r}; have {sorted(names)}")


def _check_responses(resp, names) -> None:
    for r in names:
        if r not in resp.names:
            raise UsageError(f"unknown response {r!r}; have {resp.names}")


def _impact_path(cfg: RunConfig, response: str) -> Path:
    return cfg.out("impacts", cfg.condition_tag, f"impacts_{response}.csv")


def cmd_preprocess(cfg: RunConfig) -> int:
    if not cfg.input:
        raise UsageError("preprocess needs --input (or 'input' in the config)")
    result = run_pipeline(cfg.input, cfg.recipe)
    meta = artifacts.save_pipeline(cfg.out_dir, result, cfg.recipe.to_dict(), cfg.input)
    f = result.funnel
    print(f"rows: raw {f['raw']} -> filtered {f['filtered']} -> restricted {f['restricted']}"
          f" (final {f['final']}, dropped incomplete {f['incomplete_dropped']})")
    for note in result.ambiguities:
        print(f"note: {note}")
    print(f"wrote {cfg.out(artifacts.DATASET_FILE)} (dataset hash {meta['dataset_hash']})")
    return EXIT_OK


def cmd_shapley(cfg: RunConfig) -> int:
    ds, resp, manifest = _load_inputs(cfg)
    _check_responses(resp, cfg.responses)
    idx = build_match_index(ds)
    for name in cfg.responses:
        if cfg.mode == "exact":
            im = cohort_shapley_all(resp[name], idx, response=name)
        else:
            im = cohort_shapley_sampled(resp[name], idx, cfg.samples, cfg.seed, response=name)
        meta = {
            "dataset_hash": manifest["dataset_hash"],
            "config_hash": manifest["config_hash"],
            "condition": cfg.condition,
            "boundary_ambiguities": manifest.get("boundary_ambiguities", []),
        }
        path = artifacts.save_impacts(_impact_path(cfg, name), im, meta)
        print(f"wrote {path} ({im.n} x {im.d}, {im.mode})")
    return EXIT_OK


def _load_impacts(cfg: RunConfig, manifest: dict, name: str):
    path = _impact_path(cfg, name)
    if not path.is_file():
        raise DataError(f"missing {path}; run 'shapley' first")
    im, meta = artifacts.load_impacts(path, expect_dataset_hash=manifest["dataset_hash"])
    if meta.get("condition") != cfg.condition:
        raise StaleArtifactError(f"{path} was computed under condition {meta.get('condition')!r}")
    return im, meta


def cmd_aggregate(cfg: RunConfig) -> int:
    ds, resp, manifest = _load_inputs(cfg)
    _check_features(ds, cfg)
    for name in cfg.responses:
        im, meta = _load_impacts(cfg, manifest, name)
        table = mean_impact_table(im, ds, cfg.group_by)
        base = cfg.out("tables", cfg.condition_tag, f"mean_impact_{name}")
        artifacts.write_table(
            base.with_suffix(".csv"),
            table,
            {
                "artifact": "mean_impact",
                "response": name,
                "dataset_hash": manifest["dataset_hash"],
                "condition": cfg.condition,
                "group_by": [grouping_label(g) for g in cfg.group_by],
                "impacts_sha256": meta["sha256"],
            },
        )
        text = render_mean_impact(table, f"Mean cohort Shapley impact of groups on {name}")
        base.with_suffix(".txt").write_text(text)
        print(text)
    return EXIT_OK


def cmd_histogram(cfg: RunConfig) -> int:
    ds, resp, manifest = _load_inputs(cfg)
    for name in cfg.responses:
        im, meta = _load_impacts(cfg, manifest, name)
        panels = histogram_grid(im, ds, cfg.bins)
        frame = pd.concat([p.to_frame() for p in panels], ignore_index=True)
        path = artifacts.write_table(
            cfg.out("histograms", cfg.condition_tag, f"hist_{name}.csv"),
            frame,
            {
                "artifact": "histograms",
                "response": name,
                "bins": cfg.bins,
                "dataset_hash": manifest["dataset_hash"],
                "condition": cfg.condition,
                "impacts_sha256": meta["sha256"],
            },
        )
        print(f"wrote {path} ({len(panels)} panels)")
    return EXIT_OK


def cmd_bootstrap(cfg: RunConfig) -> int:
    ds, resp, manifest = _load_inputs(cfg)
    _check_features(ds, cfg)
    _check_responses(resp, cfg.bootstrap_responses)
    groups = [(f"{g}:{label}", mask) for g, label, mask in make_groups(ds, cfg.group_by) if mask.any()]
    for name in cfg.bootstrap_responses:
        rs = bootstrap_aggregates(
            ds, resp[name], groups, cfg.replicates, cfg.bootstrap_seed, response=name, workers=cfg.workers
        )
        summary, density = summarize_replicates(rs, cfg.quantiles, bins=cfg.bins)
        meta = {
            "artifact": "bootstrap",
            "response": name,
            "B": rs.B,
            "seed": rs.seed,
            "group_by": [grouping_label(g) for g in cfg.group_by],
            "quantiles": list(cfg.quantiles),
            "dataset_hash": manifest["dataset_hash"],
            "condition": cfg.condition,
        }
        out = cfg.out("bootstrap", cfg.condition_tag)
        artifacts.write_table(out / f"replicates_{name}.csv", replicates_frame(rs), meta)
        artifacts.write_table(out / f"summary_{name}.csv", summary, meta)
        artifacts.write_table(out / f"density_{name}.csv", density, meta)
        print(summary.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    ds, resp, manifest = _load_inputs(cfg)
    _check_features(ds, cfg)
    report = group_metric_report(ds, resp, cfg.group_by)
    flat = pd.DataFrame(report.flat(), columns=["grouping", "group", "metric", "value"])
    out = cfg.out("report", cfg.condition_tag)
    artifacts.write_table(
        out / "group_metrics.csv",
        flat,
        {"artifact": "group_metrics", "dataset_hash": manifest["dataset_hash"], "condition": cfg.condition},
    )
    text = render_report(report)
    (out / "group_metrics.txt").write_text(text)
    print(text)
    return EXIT_OK


COMMANDS = {
    "preprocess": cmd_preprocess,
    "shapley": cmd_shapley,
    "aggregate": cmd_aggregate,
    "histogram": cmd_histogram,
    "bootstrap": cmd_bootstrap,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--input", help="raw delimited input file")
    common.add_argument("--out-dir", dest="out_dir", help="artifact directory (default: out)")
    common.add_argument("--response", dest="responses", help="comma-separated responses (y,yhat,residual,fp,fn,...)")
    common.add_argument("--group-by", dest="group_by", help="comma-separated groupings; join features with '+' to cross")
    common.add_argument("--condition", help="restrict subjects, e.g. y=0")
    common.add_argument("--mode", choices=["exact", "sample"])
    common.add_argument("--samples", type=int, help="permutations per subject in sample mode")
    common.add_argument("--seed", type=int, help="seed for sample mode")
    common.add_argument("--replicates", type=int, help="bootstrap replicates B")
    common.add_argument("--bootstrap-seed", dest="bootstrap_seed", type=int)
    common.add_argument("--bins", type=int, help="histogram / violin bins")
    common.add_argument("--quantiles", help="comma-separated quantiles for bootstrap summaries")
    common.add_argument("--workers", type=int, help="processes for bootstrap replicates")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = _Parser(prog="cohortfair", description="Cohort Shapley fairness audit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = load_config(args.config, **overrides)
        return COMMANDS[args.command](cfg)
    except (ConfigError, UsageError, KeyError) as exc:
        print(f"cohortfair {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, StaleArtifactError, DegenerateWeightsError, FileNotFoundError, ValueError) as exc:
        print(f"cohortfair {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
