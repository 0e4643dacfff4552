"""Experiment configuration files (YAML).

Top-level keys: ``seed``, ``out``, ``dataset``, ``metric``, ``codec``,
``isometry``, ``flow``, ``generate``, ``evaluate`` and ``analogue``. Only
``dataset`` is mandatory; other sections fall back to defaults. See
``configs/`` for complete examples.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .flows import MODES, FlowTrainConfig
from .isometry import ConfigError, IsometryTrainConfig

DATASET_KINDS = ("arch", "swiss_roll", "sequences", "csv", "sequence_csv")
METRIC_KINDS = ("isomap", "custom", "file")

_DATASET_DEFAULTS = {
    "arch": {"n": 500, "noise_sigma": 0.1},
    "swiss_roll": {"n": 500, "noise_sigma": 0.0, "scale": 0.1, "height": 10.0, "t_min": 1.5, "t_max": 4.5, "rotate": True},
    "sequences": {"n": 200, "alphabet": "AKLE", "n_families": 12, "min_len": 4, "max_len": 10, "mutation_rate": 0.15},
    "csv": {"path": None},
    "sequence_csv": {"path": None, "max_len": 25},
}


@dataclass
class ExperimentConfig:
    seed: int
    out: str
    dataset: dict
    metric: dict
    codec: dict
    isometry: IsometryTrainConfig
    flow: FlowTrainConfig
    flow_mode: str
    generate: dict
    evaluate: dict
    analogue: dict
    raw: dict = field(default_factory=dict)

    @property
    def is_sequence(self) -> bool:
        return self.dataset["kind"] in ("sequences", "sequence_csv")

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()[:16]


def _section(raw, name, defaults):
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected a mapping, got {type(sec).__name__}")
    unknown = set(sec) - set(defaults)
    if unknown:
        raise ConfigError(f"{name}: unknown field(s) {sorted(unknown)}")
    return {**defaults, **sec}


def _wrap(section, fn):
    try:
        return fn()
    except ConfigError as err:
        raise ConfigError(f"{section}.{err}") from None
    except TypeError as err:
        raise ConfigError(f"{section}: {err}") from None


def parse_config(raw: dict, seed: int | None = None, out: str | None = None, base_dir=".") -> ExperimentConfig:
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out"] = out
    known = {"seed", "out", "dataset", "metric", "codec", "isometry", "flow", "generate", "evaluate", "analogue"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    s = int(raw.get("seed", 0))
    raw["seed"] = s

    ds = raw.get("dataset")
    if not isinstance(ds, dict) or ds.get("kind") not in DATASET_KINDS:
        raise ConfigError(f"dataset.kind must be one of {DATASET_KINDS}")
    kind = ds["kind"]
    ds = _section({"dataset": {k: v for k, v in ds.items() if k != "kind"}}, "dataset", _DATASET_DEFAULTS[kind])
    ds["kind"] = kind
    if kind in ("csv", "sequence_csv"):
        if not ds["path"]:
            raise ConfigError("dataset.path is required for file datasets")
        p = Path(base_dir) / ds["path"]
        if not p.exists():
            raise ConfigError(f"dataset.path: file {p} does not exist")
        ds["path"] = str(p)
    elif ds["n"] < 2:
        raise ConfigError(f"dataset.n must be >= 2, got {ds['n']}")

    metric = _section(raw, "metric", {"kind": "isomap" if kind not in ("sequences", "sequence_csv") else "custom", "k": 5, "path": None})
    if metric["kind"] not in METRIC_KINDS:
        raise ConfigError(f"metric.kind must be one of {METRIC_KINDS}, got {metric['kind']!r}")
    if metric["kind"] == "isomap" and int(metric["k"]) < 1:
        raise ConfigError(f"metric.k must be >= 1, got {metric['k']}")
    if metric["kind"] == "file":
        if not metric["path"] or not (Path(base_dir) / metric["path"]).exists():
            raise ConfigError(f"metric.path: file {metric['path']!r} does not exist")
        metric["path"] = str(Path(base_dir) / metric["path"])

    codec = _section(raw, "codec", {"dim": 8, "length": 25, "scale": 1.0})
    if codec["dim"] < 1 or codec["length"] < 1:
        raise ConfigError("codec.dim and codec.length must be >= 1")
    if codec["scale"] <= 0:
        raise ConfigError(f"codec.scale must be > 0, got {codec['scale']}")

    iso_raw = dict(raw.get("isometry") or {})
    iso_raw.setdefault("seed", s)
    if seed is not None:
        iso_raw["seed"] = seed
    iso = _wrap("isometry", lambda: IsometryTrainConfig.from_dict(iso_raw))

    flow_raw = dict(raw.get("flow") or {})
    mode = flow_raw.pop("mode", "dprime_pfm")
    if mode not in MODES:
        raise ConfigError(f"flow.mode must be one of {MODES}, got {mode!r}")
    flow_raw.setdefault("seed", s)
    if seed is not None:
        flow_raw["seed"] = seed
    flow = _wrap("flow", lambda: FlowTrainConfig.from_dict(flow_raw))

    gen = _section(raw, "generate", {"n_samples": 500, "n_times": 11})
    if gen["n_samples"] < 1 or gen["n_times"] < 2:
        raise ConfigError("generate.n_samples must be >= 1 and generate.n_times >= 2")
    ev = _section(raw, "evaluate", {"n_pairs": 100, "methods": ["linear", "latent", "submanifold"], "one_nn": True, "n_geodesics": 3, "geodesic_points": 50})
    bad = set(ev["methods"]) - {"linear", "latent", "submanifold"}
    if bad:
        raise ConfigError(f"evaluate.methods: unknown method(s) {sorted(bad)}")
    an = _section(raw, "analogue", {"taus": [0.01, 0.05, 0.1, 0.2, 0.5, 1.0], "alpha": 0.05})
    if any(t < 0 for t in an["taus"]):
        raise ConfigError("analogue.taus must be >= 0")

    return ExperimentConfig(s, str(raw.get("out", "runs/default")), ds, metric, codec, iso, flow, mode, gen, ev, an, raw)


def load_config(path, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: not valid YAML: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(raw, seed, out, base_dir=path.parent)
