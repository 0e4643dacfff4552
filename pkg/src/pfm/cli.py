"""Command-line driver: ``pfm <stage> --config FILE [--seed N] [--out DIR]``.

Each stage reads the outputs of earlier stages from the output directory and
writes its own files atomically, followed by ``manifest-<stage>.json``.
``PFM_THREADS`` caps the BLAS thread pool.
"""

from __future__ import annotations

import os
import sys

_threads = os.environ.get("PFM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = _threads

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import datasets as dsets  # noqa: E402
from .config import ExperimentConfig, load_config  # noqa: E402
from .evaluation import (  # noqa: E402
    analogue_generate,
    analogue_report,
    interpolation_rmse,
    latent_std,
    one_nn_accuracy,
    write_json,
    write_table_csv,
)
from .flows import sample, trajectory, train_flow, write_trajectory_csv  # noqa: E402
from .geometry import pullback_geodesic, write_geodesic_csv  # noqa: E402
from .io import (  # noqa: E402
    atomic_path,
    atomic_write_text,
    git_blob_hash,
    load_diffeo,
    load_flow,
    save_diffeo,
    save_flow,
    write_manifest,
)
from .isometry import ConfigError, train_isometry  # noqa: E402
from .manifold_metrics import (  # noqa: E402
    DistanceMatrix,
    composite_distance_matrix,
    default_evaluators,
    fit_normalizers,
    isomap_distances,
)
from .numerics.rng import make_rng  # noqa: E402

log = logging.getLogger("pfm")

STAGES = ("make-dataset", "distances", "train-isometry", "train-flow", "generate", "evaluate", "analogue")


class StageError(RuntimeError):
    pass


def _out(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _need(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageError(f"missing {path.name}; run `pfm {stage}` first")
    return path


def _points(out: Path):
    return dsets.load_point_cloud(_need(out / "points.csv", "make-dataset"))


def _sequences(out: Path, cfg):
    return dsets.load_sequences(
        _need(out / "sequences.csv", "make-dataset"),
        max_len=cfg.codec["length"],
        alphabet=_load_codec(out).alphabet,
    )


def _save_codec(path, codec):
    with atomic_path(path) as tmp:
        tmp.write_text(json.dumps({"alphabet": codec.alphabet, "length": codec.length, "table": codec.table.tolist()}) + "\n")


def _load_codec(out: Path):
    o = json.loads(_need(out / "codec.json", "make-dataset").read_text())
    return dsets.SequenceCodec(o["alphabet"], np.asarray(o["table"], dtype=np.float64), o["length"])


def _atomic(writer, path, *args):
    with atomic_path(path) as tmp:
        writer(tmp, *args)
    return path


# --- stages -----------------------------------------------------------------------


def cmd_make_dataset(cfg: ExperimentConfig):
    out = _out(cfg)
    ds = cfg.dataset
    rng = make_rng(cfg.seed, 100)
    outputs, inputs = [], []
    if ds["kind"] == "arch":
        pc = dsets.gen_arch(ds["n"], ds["noise_sigma"], rng)
    elif ds["kind"] == "swiss_roll":
        pc = dsets.gen_swiss_roll(
            ds["n"],
            ds["noise_sigma"],
            dsets.DEFAULT_ROTATION if ds["rotate"] else None,
            rng,
            t_range=(ds["t_min"] * np.pi, ds["t_max"] * np.pi),
            height=ds["height"],
            scale=ds["scale"],
        )
    elif ds["kind"] == "csv":
        pc = dsets.load_point_cloud(ds["path"])
        inputs.append(ds["path"])
    else:
        if ds["kind"] == "sequences":
            seqs = dsets.gen_sequence_corpus(
                ds["n"], rng, ds["alphabet"], ds["n_families"], ds["min_len"], ds["max_len"], ds["mutation_rate"]
            )
            seqs.ids = [f"s{i}" for i in range(len(seqs))]
        else:
            seqs = dsets.load_sequences(ds["path"], ds["max_len"])
            inputs.append(ds["path"])
        alphabet = "".join(sorted(set("".join(seqs.sequences)))) if ds["kind"] == "sequence_csv" else ds["alphabet"]
        codec = dsets.make_codec(alphabet, cfg.codec["length"], cfg.codec["dim"], make_rng(cfg.seed, 101), cfg.codec["scale"])
        pc = dsets.encode_sequences(codec, seqs)
        outputs.append(_atomic(dsets.save_sequences, out / "sequences.csv", seqs))
        _save_codec(out / "codec.json", codec)
        outputs.append(out / "codec.json")
    outputs.append(_atomic(dsets.save_point_cloud, out / "points.csv", pc))
    meta = {"name": ds["kind"], "params": ds, "seed": cfg.seed, "n": pc.n, "d": pc.d, "hash": git_blob_hash(out / "points.csv")}
    atomic_write_text(out / "dataset.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    outputs.append(out / "dataset.json")
    return inputs, outputs


def cmd_distances(cfg: ExperimentConfig):
    out = _out(cfg)
    m = cfg.metric
    inputs = [out / "points.csv"]
    if m["kind"] == "isomap":
        dm = isomap_distances(_points(out), int(m["k"]))
    elif m["kind"] == "file":
        dm = DistanceMatrix.load(m["path"])
        inputs = [m["path"]]
    else:
        seqs = _sequences(out, cfg)
        tr, _ = dsets.split_indices(len(seqs), cfg.isometry.split, cfg.isometry.seed)
        evs = default_evaluators()
        norms = fit_normalizers(evs, [seqs.sequences[i] for i in tr])
        dm = composite_distance_matrix(evs, norms, seqs.sequences)
        inputs = [out / "sequences.csv"]
    target = out / "distances.bin"
    dm.save(target)
    outs = [target, target.with_suffix(".bin.json")]
    if dm.predecessors is not None:
        outs.append(target.with_suffix(".bin.pred.npy"))
    return inputs, outs


def cmd_train_isometry(cfg: ExperimentConfig):
    out = _out(cfg)
    pc = _points(out)
    dm = DistanceMatrix.load(_need(out / "distances.bin", "distances"))
    log_path = out / "isometry_log.csv"
    model, report = train_isometry(pc, dm, cfg.isometry)
    save_diffeo(out / "diffeo.json", model)
    _atomic(lambda p: report.write_csv(p), log_path)
    write_json_atomic(out / "isometry_report.json", {"best_epoch": report.best_epoch, "metrics": report.metrics,
                                                     "train_idx": report.train_idx, "test_idx": report.test_idx})
    return [out / "points.csv", out / "distances.bin"], [out / "diffeo.json", log_path, out / "isometry_report.json"]


def write_json_atomic(path, obj):
    _atomic(write_json, path, obj)
    return path


def cmd_train_flow(cfg: ExperimentConfig):
    out = _out(cfg)
    pc = _points(out)
    inputs = [out / "points.csv"]
    diffeo = None
    if cfg.flow_mode != "cfm":
        diffeo = load_diffeo(_need(out / "diffeo.json", "train-isometry"))
        inputs.append(out / "diffeo.json")
    flow, history = train_flow(pc, cfg.flow, cfg.flow_mode, diffeo)
    save_flow(out / "flow.json", flow)
    _atomic(write_table_csv, out / "flow_log.csv", history)
    return inputs, [out / "flow.json", out / "flow_log.csv"]


def _flow_and_diffeo(out: Path):
    flow = load_flow(_need(out / "flow.json", "train-flow"))
    diffeo = load_diffeo(_need(out / "diffeo.json", "train-isometry")) if flow.space != "data" else None
    return flow, diffeo


def cmd_generate(cfg: ExperimentConfig):
    out = _out(cfg)
    flow, diffeo = _flow_and_diffeo(out)
    steps = cfg.flow.n_simulation_steps
    gen = sample(flow, cfg.generate["n_samples"], make_rng(cfg.seed, 200), diffeo, steps)
    z0 = make_rng(cfg.seed, 201).standard_normal((min(100, cfg.generate["n_samples"]), flow.dim))
    frames = trajectory(flow, z0, cfg.generate["n_times"], diffeo, steps)
    outputs = [_atomic(dsets.save_point_cloud, out / "samples.csv", gen), _atomic(write_trajectory_csv, out / "trajectory.csv", frames)]
    if (out / "codec.json").exists():
        seqs = dsets.decode_sequences(_load_codec(out), gen)
        outputs.append(_atomic(dsets.save_sequences, out / "samples_sequences.csv", seqs))
    inputs = [out / "flow.json"] + ([out / "diffeo.json"] if diffeo is not None else [])
    return inputs, outputs


def cmd_evaluate(cfg: ExperimentConfig):
    out = _out(cfg)
    pc = _points(out)
    dm = DistanceMatrix.load(_need(out / "distances.bin", "distances"))
    rep = json.loads(_need(out / "isometry_report.json", "train-isometry").read_text())
    test_idx = np.asarray(rep["test_idx"])
    ev = cfg.evaluate
    inputs = [out / "points.csv", out / "distances.bin", out / "isometry_report.json"]
    result = {"isometry": rep["metrics"], "interpolation": {}}
    outputs = []
    model = None
    if any(m != "linear" for m in ev["methods"]):
        model = load_diffeo(out / "diffeo.json")
        inputs.append(out / "diffeo.json")
    rows = []
    if dm.predecessors is not None:
        for method in ev["methods"]:
            r = interpolation_rmse(model, pc, dm, method, ev["n_pairs"], test_idx)
            result["interpolation"][method] = r.to_dict()
            rows.append(r.to_dict())
        if model is not None:
            pairs = interpolation_rmse(None, pc, dm, "linear", ev["n_geodesics"], test_idx).pairs
            ts = np.linspace(0.0, 1.0, ev["geodesic_points"])
            for k, (i, j) in enumerate(pairs):
                curve = pullback_geodesic(model, pc.x[i], pc.x[j], ts, space="submanifold")
                outputs.append(_atomic(write_geodesic_csv, out / f"geodesic_{k}.csv", ts, curve))
    else:
        log.warning("distance matrix has no path information; interpolation RMSE skipped")
    if ev["one_nn"] and (out / "samples.csv").exists():
        gen = dsets.load_point_cloud(out / "samples.csv")
        ref = pc.take(test_idx) if len(test_idx) else pc
        result["one_nn_accuracy"] = one_nn_accuracy(gen.take(np.arange(min(gen.n, ref.n))), ref)
        inputs.append(out / "samples.csv")
    outputs.append(write_json_atomic(out / "evaluation.json", result))
    outputs.append(_atomic(write_table_csv, out / "interpolation.csv", rows))
    return inputs, outputs


def cmd_analogue(cfg: ExperimentConfig):
    out = _out(cfg)
    pc = _points(out)
    diffeo = load_diffeo(_need(out / "diffeo.json", "train-isometry"))
    rep = json.loads(_need(out / "isometry_report.json", "train-isometry").read_text())
    sigma = latent_std(diffeo, pc.x[np.asarray(rep["train_idx"])])
    base_idx = np.asarray(rep["test_idx"]) if rep["test_idx"] else np.arange(pc.n)
    codec = _load_codec(out) if (out / "codec.json").exists() else None
    seqs = _sequences(out, cfg) if codec is not None else None
    rows, reports, outputs = [], [], []
    for k, tau in enumerate(cfg.analogue["taus"]):
        res = analogue_generate(diffeo, pc.take(base_idx), tau, make_rng(cfg.seed, 300, k), sigma, codec)
        if codec is None:
            outputs.append(_atomic(dsets.save_point_cloud, out / f"analogues_tau{tau:g}.csv", res))
            continue
        pts, new = res
        outputs.append(_atomic(dsets.save_sequences, out / f"analogues_tau{tau:g}.csv", new))
        base = [seqs.sequences[i] for i in base_idx]
        r = analogue_report(tau, base, new.sequences, seqs.sequences, alpha=cfg.analogue["alpha"])
        reports.append(r.to_dict())
        rows.append({"tau": tau, "total": r.total, "in_data": r.in_data, "novel": r.novel,
                     "non_significant_ks": f"{r.non_significant}/{r.n_tests}"})
    if codec is not None:
        outputs.append(write_json_atomic(out / "analogue.json", reports))
        outputs.append(_atomic(write_table_csv, out / "analogue.csv", rows))
    return [out / "points.csv", out / "diffeo.json"], outputs


COMMANDS = {
    "make-dataset": cmd_make_dataset,
    "distances": cmd_distances,
    "train-isometry": cmd_train_isometry,
    "train-flow": cmd_train_flow,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "analogue": cmd_analogue,
}


def run_stage(stage: str, cfg: ExperimentConfig) -> Path:
    inputs, outputs = COMMANDS[stage](cfg)
    return write_manifest(_out(cfg), stage, cfg.raw, cfg.hash(), cfg.seed, inputs, outputs)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pfm", description="Pullback flow matching experiments")
    p.add_argument("stage", choices=STAGES)
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.out)
    except (ConfigError, OSError) as err:
        print(f"pfm: invalid config: {err}", file=sys.stderr)
        return 2
    try:
        manifest = run_stage(args.stage, cfg)
    except Exception as err:  # noqa: BLE001 - surface any failure with its stage
        print(f"pfm {args.stage}: failed: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
