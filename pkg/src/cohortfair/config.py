from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .data_pipeline import RESPONSE_NAMES, Recipe
from .reporting import DEFAULT_BINS, parse_groupings


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    input: str | None = None
    out_dir: str = "out"
    dataset: Mapping[str, Any] = field(default_factory=lambda: {"recipe": "compas"})
    responses: tuple[str, ...] = RESPONSE_NAMES
    group_by: tuple[tuple[str, ...], ...] = (("race_factor",), ("gender_factor",), ("race_factor", "gender_factor"))
    condition: str | None = None
    mode: str = "exact"
    samples: int = 1000
    seed: int = 0
    replicates: int = 1000
    bootstrap_seed: int = 2022
    bootstrap_responses: tuple[str, ...] = ("residual",)
    bins: int = DEFAULT_BINS
    quantiles: tuple[float, ...] = (0.025, 0.5, 0.975)
    workers: int = 1

    def __post_init__(self):
        if self.mode not in ("exact", "sample"):
            raise ConfigError(f"mode must be 'exact' or 'sample', got {self.mode!r}")
        for name in ("samples", "replicates", "bins", "workers"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for q in self.quantiles:
            if not 0 <= q <= 1:
                raise ConfigError(f"quantile {q} outside [0, 1]")

    @property
    def recipe(self) -> Recipe:
        try:
            return Recipe.from_dict(self.dataset)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad dataset recipe: {exc}") from exc

    @property
    def condition_tag(self) -> str:
        if not self.condition:
            return "all"
        name, _, value = self.condition.partition("=")
        return f"{name.strip()}_{float(value):g}"

    def out(self, *parts: str) -> Path:
        return Path(self.out_dir).joinpath(*parts)


def _split(value) -> tuple:
    if isinstance(value, str):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    return tuple(value)


def _normalize(raw: Mapping[str, Any]) -> dict:
    out = dict(raw)
    boot = out.pop("bootstrap", None)
    if isinstance(boot, Mapping):
        if "replicates" in boot:
            out["replicates"] = boot["replicates"]
        if "seed" in boot:
            out["bootstrap_seed"] = boot["seed"]
        if "responses" in boot:
            out["bootstrap_responses"] = boot["responses"]
    if "responses" in out:
        out["responses"] = _split(out["responses"])
    if "bootstrap_responses" in out:
        out["bootstrap_responses"] = _split(out["bootstrap_responses"])
    if "group_by" in out:
        out["group_by"] = tuple(parse_groupings(out["group_by"]))
    if "quantiles" in out:
        out["quantiles"] = tuple(float(q) for q in _split(out["quantiles"]))
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(out) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return out


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
        if not isinstance(data, Mapping):
            raise ConfigError(f"{p} must contain a mapping")
    data = _normalize(data)
    data.update(_normalize({k: v for k, v in overrides.items() if v is not None}))
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    return replace(cfg, **_normalize({k: v for k, v in overrides.items() if v is not None}))
