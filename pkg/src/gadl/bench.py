"""Experiment harness: semi-synthetic benchmark, real-pair alignment,
embedding alignment and hyperparameter sweeps, with JSON/CSV reports."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .encoder import EncoderConfig
from .fmap import FmHyper
from .graph import (Graph, PerturbationSpec, class_mean_rows, knn_graph, load_edge_list,
                    netsimile_features, perturb_and_permute)
from .io import (load_ground_truth, load_labels, load_matrix_csv, save_matrix_csv, write_json,
                 write_jsonl, write_matching_csv)
from .matching import DEFAULT_KS, align
from .model import TrainConfig, spectral_match_embeddings, train_pair, write_history_csv

logger = logging.getLogger(__name__)

MODES = ("bench", "align", "embed-align", "sweep")
# parameters a sweep may vary, and which config object owns each
SWEEPABLE = {
    "lambda_fm": "train", "lambda_bij": "train", "lambda_orth": "train", "lr": "train",
    "weight_decay": "train", "use_high_pass": "train", "use_bij": "train", "use_orth": "train",
    "use_fm": "train", "alpha": "fm", "beta": "fm",
}


@dataclass
class RunSpec:
    mode: str = "bench"
    edges: Optional[str] = None
    edges_b: Optional[str] = None
    features: Optional[str] = None
    features_b: Optional[str] = None
    embeddings: tuple = ()
    labels: tuple = ()
    ground_truth: Optional[str] = None
    header: bool = False
    p_levels: tuple = (0.0, 0.01, 0.05)
    n_targets: int = 10
    seeds: Optional[tuple] = None
    base_seed: int = 0
    perturb_mode: str = "mixed"
    match_space: str = "embedding"
    ks: tuple = DEFAULT_KS
    knn_k: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    fm: FmHyper = field(default_factory=FmHyper)
    grid: dict = field(default_factory=dict)
    jobs: int = 1
    out: Optional[str] = None
    dataset: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        for p in self.p_levels:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"perturbation level {p} outside [0, 1]")
        if self.n_targets < 1:
            raise ValueError("n_targets must be at least 1")
        if self.match_space not in ("embedding", "spectral"):
            raise ValueError(f"unknown match space {self.match_space!r}")
        for key in ("edges", "edges_b", "features", "features_b", "ground_truth"):
            path = getattr(self, key)
            if path is not None and not Path(path).is_file():
                raise FileNotFoundError(f"{key.replace('_', '-')}: no such file {path}")
        for path in (*self.embeddings, *self.labels):
            if not Path(path).is_file():
                raise FileNotFoundError(f"no such file {path}")

    def run_seeds(self) -> list[int]:
        if self.seeds:
            return [int(s) for s in self.seeds]
        return [self.base_seed + i for i in range(self.n_targets)]

    def resolved(self) -> dict:
        """Every setting after defaults, as plain JSON-able values."""
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                v = dataclasses.asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        for key in ("jobs", "out"):  # scheduling and destination do not change results
            out.pop(key)
        out["run_seeds"] = self.run_seeds() if self.mode in ("bench", "sweep") else list(self.seeds or [self.base_seed])
        return out


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Report:
    mode: str
    config: dict
    records: list[dict]
    aggregates: list[dict]
    wall_clock_s: float = 0.0
    version: str = __version__
    timestamp: str = ""

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.records if r["status"] != "ok")

    @property
    def exit_code(self) -> int:
        return 0 if self.n_failed == 0 else 1

    def body(self) -> dict:
        """Report content without wall-clock fields; identical for identical runs."""
        return {"mode": self.mode, "version": self.version, "config": self.config,
                "config_hash": config_hash(self.config), "records": self.records,
                "aggregates": self.aggregates}

    def to_json(self) -> dict:
        out = self.body()
        out["wall_clock_s"] = self.wall_clock_s
        out["timestamp"] = self.timestamp
        return out


def aggregate(records: list[dict], keys: tuple) -> list[dict]:
    """Mean and population std of ``acc`` per distinct value of ``keys``; failed runs excluded."""
    groups: dict[tuple, list[dict]] = {}
    for rec in records:
        groups.setdefault(tuple(json.dumps(rec.get(k), sort_keys=True) for k in keys), []).append(rec)
    rows = []
    for gkey, recs in groups.items():
        ok = [r for r in recs if r["status"] == "ok"]
        row = {k: json.loads(v) for k, v in zip(keys, gkey)}
        accs = np.array([r["acc"] for r in ok], dtype=np.float64)
        row.update(n_runs=len(recs), n_ok=len(ok),
                   acc_mean=float(accs.mean()) if ok else None,
                   acc_std=float(accs.std()) if ok else None)
        if ok and "hits" in ok[0]:
            row["hits_mean"] = {k: float(np.mean([r["hits"][k] for r in ok])) for k in ok[0]["hits"]}
        rows.append(row)
    return rows


# -- individual runs -------------------------------------------------------------

@dataclass
class _Job:
    """One training run; plain data so it can cross a process boundary."""

    source: Graph
    target: Optional[Graph]
    gt: Optional[dict]
    p: Optional[float]
    seed: int
    perturb_mode: str
    train: TrainConfig
    encoder: EncoderConfig
    fm: FmHyper
    match_space: str
    ks: tuple
    netsimile: bool
    extra: dict = field(default_factory=dict)
    keep_outputs: bool = False


def _run_job(job: _Job) -> dict:
    rec = {"seed": job.seed, **job.extra}
    if job.p is not None:
        rec["p"] = job.p
    try:
        src, tgt, gt = job.source, job.target, job.gt
        if tgt is None:
            tgt, perm = perturb_and_permute(src, PerturbationSpec(job.p, job.seed, job.perturb_mode))
            gt = {i: int(perm[i]) for i in range(src.n)}
        if job.netsimile:
            src = src.with_features(netsimile_features(src))
            tgt = tgt.with_features(netsimile_features(tgt))
        cfg = dataclasses.replace(job.train, seed=job.seed)
        model = train_pair(src, tgt, job.encoder, job.fm, cfg)
        if job.match_space == "spectral":
            z_s, z_t = spectral_match_embeddings(model)
        else:
            z_s, z_t = model.z_source, model.z_target
        res = align(z_s, z_t, gt, job.ks)
        rec.update(status="ok", acc=res.acc, hits={str(k): v for k, v in res.hit_at_k.items()},
                   epochs_run=model.epochs_run, final_loss=model.history["total"][-1])
        if job.keep_outputs:
            rec["_outputs"] = {"history": model.history, "matching": res.matching,
                               "similarity": res.similarity, "c12": model.maps.c12,
                               "c21": model.maps.c21}
    except Exception as exc:  # a failed run is reported, not fatal
        logger.warning("run seed=%s p=%s failed: %s", job.seed, job.p, exc)
        rec.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return rec


def _execute(jobs: list[_Job], n_workers: int) -> list[dict]:
    if n_workers <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as pool:
        return list(pool.map(_run_job, jobs))


def _dataset_name(spec: RunSpec, fallback: str) -> str:
    if spec.dataset:
        return spec.dataset
    return Path(spec.edges).stem if spec.edges else fallback


def _load_source(spec: RunSpec) -> tuple[Graph, bool]:
    if spec.edges is None:
        raise ValueError("--edges is required")
    g = load_edge_list(spec.edges)
    if spec.features is None:
        return g, True
    x = load_matrix_csv(spec.features, spec.header)
    if x.shape[0] != g.n:
        raise ValueError(f"feature file has {x.shape[0]} rows, graph has {g.n} nodes")
    return g.with_features(x), False


def _bench_jobs(spec: RunSpec, g: Graph, netsimile: bool, train: TrainConfig, fm: FmHyper,
                extra: dict) -> list[_Job]:
    keep = spec.out is not None
    return [_Job(g, None, None, float(p), s, spec.perturb_mode, train, spec.encoder, fm,
                 spec.match_space, tuple(spec.ks), netsimile, dict(extra), keep)
            for p in spec.p_levels for s in spec.run_seeds()]


# -- commands ----------------------------------------------------------------------

def cmd_bench(spec: RunSpec) -> Report:
    """Perturb-and-permute protocol: ``n_targets`` seeds per perturbation level."""
    t0 = time.perf_counter()
    g, netsimile = _load_source(spec)
    name = _dataset_name(spec, "graph")
    records = _execute(_bench_jobs(spec, g, netsimile, spec.train, spec.fm, {"dataset": name}), spec.jobs)
    return _finish(spec, records, ("dataset", "p"), t0)


def cmd_align(spec: RunSpec) -> Report:
    """Align two given graphs against a ground-truth file."""
    t0 = time.perf_counter()
    if spec.edges_b is None or spec.ground_truth is None:
        raise ValueError("align needs --edges, --edges-b and --ground-truth")
    g_s = load_edge_list(spec.edges)
    g_t = load_edge_list(spec.edges_b)
    if (spec.features is None) != (spec.features_b is None):
        raise ValueError("give feature files for both graphs or for neither")
    netsimile = spec.features is None
    if not netsimile:
        g_s = g_s.with_features(load_matrix_csv(spec.features, spec.header))
        g_t = g_t.with_features(load_matrix_csv(spec.features_b, spec.header))
    gt = load_ground_truth(spec.ground_truth)
    for s, t in gt.items():
        if not (0 <= s < g_s.n and 0 <= t < g_t.n):
            raise ValueError(f"ground-truth pair ({s}, {t}) out of range")
    name = spec.dataset or f"{Path(spec.edges).stem}-{Path(spec.edges_b).stem}"
    seeds = list(spec.seeds) if spec.seeds else [spec.base_seed]
    jobs = [_Job(g_s, g_t, gt, None, s, spec.perturb_mode, spec.train, spec.encoder, spec.fm,
                 spec.match_space, tuple(spec.ks), netsimile, {"dataset": name}, spec.out is not None)
            for s in seeds]
    records = _execute(jobs, spec.jobs)
    return _finish(spec, records, ("dataset",), t0)


def embedding_pair(spec: RunSpec) -> tuple[Graph, Graph, dict[int, int]]:
    """kNN graphs over the two embedding sets plus the class-index ground truth."""
    if len(spec.embeddings) != 2:
        raise ValueError("embed-align needs exactly two embedding files")
    xs = [load_matrix_csv(p, spec.header) for p in spec.embeddings]
    if spec.labels:
        if len(spec.labels) != 2:
            raise ValueError("give two label files or none")
        labels = [load_labels(p) for p in spec.labels]
        names = [sorted(set(lab)) for lab in labels]
        xs = [class_mean_rows(x, lab) for x, lab in zip(xs, labels)]
        pos_b = {c: i for i, c in enumerate(names[1])}
        gt = {i: pos_b[c] for i, c in enumerate(names[0]) if c in pos_b}
        if not gt:
            raise ValueError("the two label files share no class")
    else:
        gt = {i: i for i in range(min(x.shape[0] for x in xs))}
    graphs = [knn_graph(x, spec.knn_k) for x in xs]
    return graphs[0], graphs[1], gt


def cmd_embed_align(spec: RunSpec) -> Report:
    """Align two embedding spaces through their kNN graphs (unshared encoders)."""
    t0 = time.perf_counter()
    g_s, g_t, gt = embedding_pair(spec)
    name = spec.dataset or "-".join(Path(p).stem for p in spec.embeddings)
    seeds = list(spec.seeds) if spec.seeds else [spec.base_seed]
    jobs = [_Job(g_s, g_t, gt, None, s, spec.perturb_mode, spec.train, spec.encoder, spec.fm,
                 spec.match_space, tuple(spec.ks), False, {"dataset": name, "n_nodes": g_s.n},
                 spec.out is not None)
            for s in seeds]
    records = _execute(jobs, spec.jobs)
    return _finish(spec, records, ("dataset",), t0)


def grid_points(grid: dict) -> list[dict]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("sweep grid is empty")
    for key in grid:
        if key not in SWEEPABLE:
            raise ValueError(f"cannot sweep {key!r}; choose from {sorted(SWEEPABLE)}")
    keys = sorted(grid)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def cmd_sweep(spec: RunSpec) -> Report:
    """Benchmark protocol at every point of a parameter grid."""
    t0 = time.perf_counter()
    points = grid_points(spec.grid)
    g, netsimile = _load_source(spec)
    name = _dataset_name(spec, "graph")
    jobs = []
    for point in points:
        tr = {k: v for k, v in point.items() if SWEEPABLE[k] == "train"}
        fm = {k: v for k, v in point.items() if SWEEPABLE[k] == "fm"}
        jobs += _bench_jobs(spec, g, netsimile, dataclasses.replace(spec.train, **tr),
                            dataclasses.replace(spec.fm, **fm), {"dataset": name, "point": point})
    records = _execute(jobs, spec.jobs)
    return _finish(spec, records, ("dataset", "point", "p"), t0)


COMMANDS = {"bench": cmd_bench, "align": cmd_align, "embed-align": cmd_embed_align, "sweep": cmd_sweep}


def run(spec: RunSpec) -> Report:
    return COMMANDS[spec.mode](spec)


def _finish(spec: RunSpec, records: list[dict], keys: tuple, t0: float) -> Report:
    resolved = spec.resolved()
    chash = config_hash(resolved)
    outputs = []
    for rec in records:
        outputs.append(rec.pop("_outputs", None))
        rec["config_hash"] = chash
    failed = [r for r in records if r["status"] != "ok"]
    if failed:
        logger.warning("%d of %d runs failed and are excluded from aggregates", len(failed), len(records))
    report = Report(spec.mode, resolved, records, aggregate(records, keys),
                    wall_clock_s=time.perf_counter() - t0,
                    timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"))
    if spec.out is not None:
        write_outputs(Path(spec.out), report, outputs)
    return report


def _run_tag(rec: dict, index: int) -> str:
    tag = f"run{index:03d}_seed{rec['seed']}"
    if "p" in rec:
        tag += f"_p{rec['p']:g}"
    return tag


def write_outputs(out: Path, report: Report, outputs: list) -> None:
    """``report.json``, ``records.csv``, ``metrics.jsonl`` and per-run artifacts under ``runs/``."""
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "report.json", report.to_json())
    write_jsonl(out / "metrics.jsonl", [
        {"acc": r.get("acc"), "hits": r.get("hits"), "seed": r["seed"], "p": r.get("p"),
         "dataset": r.get("dataset"), "config_hash": r["config_hash"], "status": r["status"]}
        for r in report.records])
    cols = ["dataset", "point", "p", "seed", "status", "acc", "epochs_run", "final_loss", "config_hash", "error"]
    hit_cols = sorted({k for r in report.records for k in r.get("hits", {})}, key=int)
    with open(out / "records.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + [f"hit@{k}" for k in hit_cols])
        for r in report.records:
            row = [json.dumps(r[c], sort_keys=True) if c == "point" and c in r else r.get(c, "") for c in cols]
            w.writerow(row + [r.get("hits", {}).get(k, "") for k in hit_cols])
    runs = out / "runs"
    for i, (rec, o) in enumerate(zip(report.records, outputs)):
        if o is None:
            continue
        runs.mkdir(exist_ok=True)
        tag = _run_tag(rec, i)
        write_history_csv(runs / f"{tag}_history.csv", o["history"])
        write_matching_csv(runs / f"{tag}_matching.csv", o["matching"], o["similarity"])
        save_matrix_csv(runs / f"{tag}_c12.csv", o["c12"])
        save_matrix_csv(runs / f"{tag}_c21.csv", o["c21"])
