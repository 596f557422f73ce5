"""On-disk artifacts: comma-separated tables with a JSON sidecar manifest.

Floats are written with ``repr`` so reading a table back reproduces the
in-memory values exactly. Manifests carry no timestamps; reruns are
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import pandas as pd

from .data_pipeline import Dataset, FeatureSpec, PipelineResult, ResponseSet, RESPONSE_NAMES
from .shapley import ImpactMatrix

DATASET_FILE = "dataset.csv"
RESPONSES_FILE = "responses.csv"


class StaleArtifactError(RuntimeError):
    """Artifacts were produced from a different dataset or configuration."""


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, (tuple, set)):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def config_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _float_repr(x) -> str:
    return repr(float(x))


def manifest_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def write_table(path: str | Path, frame: pd.DataFrame, manifest: Mapping[str, Any] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = frame.to_csv(index=False, lineterminator="\n", float_format=_float_repr)
    path.write_text(text, encoding="utf-8")
    if manifest is not None:
        meta = dict(manifest)
        meta["file"] = path.name
        meta["sha256"] = file_hash(path)
        manifest_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def read_manifest(path: str | Path) -> dict:
    mp = manifest_path(path)
    if not mp.is_file():
        raise FileNotFoundError(f"missing manifest for {path}: {mp}")
    return json.loads(mp.read_text())


def read_table(path: str | Path, verify: bool = True, dtype=None) -> tuple[pd.DataFrame, dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"artifact not found: {path}")
    manifest = read_manifest(path)
    if verify and manifest.get("sha256") != file_hash(path):
        raise StaleArtifactError(f"{path} does not match the checksum in its manifest")
    frame = pd.read_csv(
        path, dtype=dtype or {"subject_id": str}, keep_default_na=False, na_values=[""], float_precision="round_trip"
    )
    return frame, manifest


# ---------------------------------------------------------------------------
# dataset + responses


def save_pipeline(out_dir: str | Path, result: PipelineResult, recipe_dict: Mapping, input_path: str) -> dict:
    out_dir = Path(out_dir)
    ds, resp = result.dataset, result.responses
    chash = config_hash(recipe_dict)
    base = {
        "config_hash": chash,
        "recipe": recipe_dict,
        "input": Path(input_path).name,
        "funnel": result.funnel,
        "boundary_ambiguities": list(result.ambiguities),
    }
    dpath = write_table(
        out_dir / DATASET_FILE,
        ds.to_frame(),
        {**base, "artifact": "dataset", "features": [{"name": s.name, "levels": list(s.levels)} for s in ds.specs]},
    )
    rpath = write_table(
        out_dir / RESPONSES_FILE,
        resp.to_frame(ds.subject_ids),
        {**base, "artifact": "responses", "responses": resp.names},
    )
    return {"dataset_hash": dataset_hash(dpath, rpath), **base}


def dataset_hash(dpath: Path, rpath: Path) -> str:
    return hashlib.sha256((file_hash(dpath) + file_hash(rpath)).encode()).hexdigest()[:16]


def load_pipeline(out_dir: str | Path) -> tuple[Dataset, ResponseSet, dict]:
    """Read dataset.csv/responses.csv back; the manifest gains ``dataset_hash``."""
    out_dir = Path(out_dir)
    dframe, dman = read_table(out_dir / DATASET_FILE, dtype=str)
    rframe, rman = read_table(out_dir / RESPONSES_FILE)
    if dman.get("config_hash") != rman.get("config_hash"):
        raise StaleArtifactError("dataset and responses were produced by different configurations")
    specs = tuple(FeatureSpec(f["name"], tuple(f["levels"])) for f in dman["features"])
    codes = np.column_stack(
        [dframe[s.name].map({lv: k for k, lv in enumerate(s.levels)}).to_numpy() for s in specs]
    )
    ds = Dataset(specs, codes.astype(np.int64), tuple(dframe["subject_id"].astype(str)))
    if list(rframe["subject_id"].astype(str)) != list(ds.subject_ids):
        raise StaleArtifactError("responses.csv rows are not aligned with dataset.csv")
    extra = {c: rframe[c].to_numpy(dtype=float) for c in rframe.columns if c not in ("subject_id", *RESPONSE_NAMES)}
    resp = ResponseSet.from_binary(rframe["y"].to_numpy(dtype=float), rframe["yhat"].to_numpy(dtype=float), extra)
    dman["dataset_hash"] = dataset_hash(out_dir / DATASET_FILE, out_dir / RESPONSES_FILE)
    return ds, resp, dman


# ---------------------------------------------------------------------------
# impact matrices


def impacts_frame(im: ImpactMatrix) -> pd.DataFrame:
    data = {"subject_id": list(im.subject_ids)}
    for j, name in enumerate(im.feature_names):
        data[name] = im.values[:, j]
    return pd.DataFrame(data)


def save_impacts(path: str | Path, im: ImpactMatrix, manifest: Mapping[str, Any]) -> Path:
    meta = {
        "artifact": "impacts",
        "response": im.response,
        "mode": im.mode,
        "samples": im.samples,
        "seed": im.seed,
        "features": list(im.feature_names),
        "n": im.n,
        **manifest,
    }
    return write_table(path, impacts_frame(im), meta)


def load_impacts(path: str | Path, expect_dataset_hash: str | None = None) -> tuple[ImpactMatrix, dict]:
    frame, meta = read_table(path)
    if expect_dataset_hash is not None and meta.get("dataset_hash") != expect_dataset_hash:
        raise StaleArtifactError(
            f"{path} was computed from a different dataset (hash {meta.get('dataset_hash')} != "
            f"{expect_dataset_hash}); rerun 'shapley'"
        )
    features = tuple(meta["features"])
    im = ImpactMatrix(
        frame[list(features)].to_numpy(dtype=float),
        meta["response"],
        features,
        tuple(frame["subject_id"].astype(str)),
        mode=meta.get("mode", "exact"),
        samples=meta.get("samples"),
        seed=meta.get("seed"),
    )
    return im, meta
