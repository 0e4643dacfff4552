"""Model files, atomic writes and run manifests."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .diffeo import DiffeoModel
from .flows import FlowModel
from .numerics.mlp import MlpParams

DIFFEO_FORMAT = "pfm-diffeo-v1"
FLOW_FORMAT = "pfm-flow-v1"


@contextmanager
def atomic_path(path):
    """Yield a temporary sibling path that replaces ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(text)


def git_blob_hash(path) -> str:
    """SHA-1 of the file as a git blob object."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _mlp_to_dict(p: MlpParams) -> dict:
    return {
        "activation": p.activation,
        "time_embed": p.time_embed,
        "shapes": [list(w.shape) for w in p.weights],
        "weights": [w.ravel().tolist() for w in p.weights],
        "biases": [b.tolist() for b in p.biases],
    }


def _mlp_from_dict(d: dict) -> MlpParams:
    ws = [np.asarray(w, dtype=np.float64).reshape(s) for w, s in zip(d["weights"], d["shapes"])]
    bs = [np.asarray(b, dtype=np.float64) for b in d["biases"]]
    return MlpParams(ws, bs, d["time_embed"], d["activation"])


def _dump(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True) + "\n")


def _load(path, fmt) -> dict:
    obj = json.loads(Path(path).read_text())
    if obj.get("format") != fmt:
        raise ValueError(f"{path}: expected format {fmt!r}, found {obj.get('format')!r}")
    return obj


def save_diffeo(path, model: DiffeoModel) -> None:
    _dump(
        path,
        {
            "format": DIFFEO_FORMAT,
            "d": model.d,
            "d_prime": model.d_prime,
            "n_steps": model.n_steps,
            "chart": model.chart,
            "config_hash": model.config_hash,
            "mu": model.mu.tolist(),
            "field": _mlp_to_dict(model.field),
        },
    )


def load_diffeo(path) -> DiffeoModel:
    o = _load(path, DIFFEO_FORMAT)
    m = DiffeoModel(_mlp_from_dict(o["field"]), np.asarray(o["mu"], dtype=np.float64), o["d_prime"], o["n_steps"], o["chart"], o["config_hash"])
    if m.d != o["d"]:
        raise ValueError(f"{path}: stored d={o['d']} does not match mu of length {m.d}")
    return m


def save_flow(path, flow: FlowModel) -> None:
    _dump(
        path,
        {
            "format": FLOW_FORMAT,
            "space": flow.space,
            "dim": flow.dim,
            "sigma_min": flow.sigma_min,
            "kappa": flow.kappa,
            "diffeo_hash": flow.diffeo_hash,
            "field": _mlp_to_dict(flow.vt_params),
        },
    )


def load_flow(path) -> FlowModel:
    o = _load(path, FLOW_FORMAT)
    return FlowModel(_mlp_from_dict(o["field"]), o["space"], o["dim"], o["sigma_min"], o["kappa"], o["diffeo_hash"])


def write_manifest(out_dir, stage: str, config: dict, config_hash: str, seed: int, inputs, outputs) -> Path:
    """``manifest-<stage>.json`` listing content hashes of inputs and outputs."""
    out_dir = Path(out_dir)
    body = {
        "stage": stage,
        "config": config,
        "config_hash": config_hash,
        "seed": seed,
        "inputs": {str(p): git_blob_hash(p) for p in inputs},
        "outputs": {Path(p).name: git_blob_hash(p) for p in outputs},
    }
    path = out_dir / f"manifest-{stage}.json"
    _dump(path, body)
    return path
