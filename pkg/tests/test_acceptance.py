"""Acceptance criteria C1-C9.

Each test stores ``(passed, detail)`` in ``RESULTS``; ``conftest.py`` prints
one PASS/FAIL line per criterion at the end of the run.

C1-C3 need the Celegans edge list (453 nodes, 2025 edges). It is looked up
in ``$GADL_CELEGANS``, then ``data/celegans.edges`` under the repository
root. Without it those three criteria fail with an explanatory message.
An optional Arena edge list (``$GADL_ARENA`` or ``data/arenas.edges``)
enables the C2 stretch check.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import gradcheck, random_graph, ring
from gadl.bench import RunSpec, cmd_bench
from gadl.cli import main
from gadl.encoder import EncoderConfig
from gadl.fmap import FmHyper
from gadl.graph import (Graph, PerturbationSpec, filter_matrices, load_edge_list, normalized_laplacian,
                        perturb_and_permute)
from gadl.matching import align, greedy_match, hit_at_k, true_ranks
from gadl.model import TrainConfig, train_pair
from gadl.spectral import eig_smallest, jacobi_eigh, residuals
from test_autodiff import OPS
from test_matching import full_sort_rank, rescan_oracle
from test_model import full_objective_case

RESULTS: dict[str, tuple[bool, str]] = {}
ROOT = Path(__file__).resolve().parents[1]
JOBS = os.cpu_count() or 1


def record(key: str, ok: bool, detail: str):
    RESULTS[key] = (bool(ok), detail)
    assert ok, f"{key}: {detail}"


def dataset(env: str, name: str):
    path = os.environ.get(env) or str(ROOT / "data" / name)
    return path if Path(path).is_file() else None


# -- C1-C3: Celegans -----------------------------------------------------------------------------

CELEGANS = dataset("GADL_CELEGANS", "celegans.edges")
MISSING = ("Celegans edge list not found (set GADL_CELEGANS or add data/celegans.edges); "
           "the dataset could not be obtained in the build environment")


@pytest.fixture(scope="module")
def celegans_bench():
    if CELEGANS is None:
        return None
    g = load_edge_list(CELEGANS)
    if (g.n, g.n_edges) != (453, 2025):
        print(f"note: Celegans file has {g.n} nodes / {g.n_edges} edges (expected 453 / 2025)")
    t0 = time.perf_counter()
    rep = cmd_bench(RunSpec(edges=CELEGANS, p_levels=(0.0, 0.01, 0.05), n_targets=10, jobs=JOBS))
    return rep, time.perf_counter() - t0


def acc_by_p(rep):
    return {row["p"]: row["acc_mean"] for row in rep.aggregates}


def test_c1_celegans_p0_accuracy(celegans_bench):
    if celegans_bench is None:
        record("C1", False, MISSING)
    rep, secs = celegans_bench
    acc = acc_by_p(rep)[0.0]
    record("C1", acc is not None and acc >= 0.85 and rep.exit_code == 0,
           f"mean Acc at p=0 over 10 targets = {acc:.4f} (need >= 0.85); bench wall clock {secs:.0f}s")


def test_c2_celegans_robustness_trend(celegans_bench):
    if celegans_bench is None:
        record("C2", False, MISSING)
    rep, _ = celegans_bench
    a = acc_by_p(rep)
    ok = a[0.0] > a[0.01] > a[0.05] and a[0.05] >= 0.50
    detail = f"Acc p=0 {a[0.0]:.4f}, p=0.01 {a[0.01]:.4f}, p=0.05 {a[0.05]:.4f} (need strict decrease, p=0.05 >= 0.50)"
    arena = dataset("GADL_ARENA", "arenas.edges")
    if arena is not None:
        ar = cmd_bench(RunSpec(edges=arena, p_levels=(0.0,), n_targets=10, jobs=JOBS))
        detail += f"; Arena stretch p=0 Acc {ar.aggregates[0]['acc_mean']:.4f} (target 0.90, not gating)"
    record("C2", ok, detail)


def test_c3_celegans_ablation_direction(celegans_bench):
    if celegans_bench is None:
        record("C3", False, MISSING)
    rep, _ = celegans_bench
    seeds = list(range(5))
    full = [r["acc"] for r in rep.records if r["p"] == 0.01 and r["seed"] in seeds and r["status"] == "ok"]
    abl = cmd_bench(RunSpec(edges=CELEGANS, p_levels=(0.01,), seeds=tuple(seeds), jobs=JOBS,
                            train=TrainConfig(use_high_pass=False)))
    single = [r["acc"] for r in abl.records if r["status"] == "ok"]
    ok = len(full) == len(single) == 5 and np.mean(full) >= np.mean(single)
    record("C3", ok, f"p=0.01, 5 seeds: dual-pass {np.mean(full):.4f} vs single-pass {np.mean(single):.4f}")


# -- C4: gradients --------------------------------------------------------------------------------

def test_c4_gradient_correctness():
    t0 = time.perf_counter()
    worst, where = 0.0, ""
    for seed in range(10):
        rng = np.random.default_rng(seed)
        for op, (build, shapes) in sorted(OPS.items()):
            inputs = {k: rng.normal(size=s) for k, s in shapes.items()}
            if op == "relu":
                inputs["a"] += np.sign(inputs["a"]) * 0.1
            err = gradcheck(build, inputs)
            if err > worst:
                worst, where = err, f"{op} seed {seed}"
        err = gradcheck(*full_objective_case(seed))
        if err > worst:
            worst, where = err, f"full objective seed {seed}"
    secs = time.perf_counter() - t0
    record("C4", worst < 1e-4 and secs < 60,
           f"max relative error {worst:.2e} ({where}) over {len(OPS)} ops + full objective x 10 seeds; {secs:.1f}s")


# -- C5: eigensolver --------------------------------------------------------------------------------

def test_c5_eigensolver_contract():
    worst_res = worst_orth = worst_oracle = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 51))
        lap = normalized_laplacian(random_graph(n, float(rng.uniform(0.05, 0.6)), seed))
        oracle, _ = jacobi_eigh(lap)
        for method in ("auto", "lanczos"):
            r = n if method == "auto" else max(1, n // 3)
            b = eig_smallest(lap, r, method=method, seed=seed)
            worst_res = max(worst_res, float(residuals(lap, b.lam, b.phi).max()))
            worst_orth = max(worst_orth, float(np.linalg.norm(b.phi.T @ b.phi - np.eye(r))))
            worst_oracle = max(worst_oracle, float(np.max(np.abs(b.lam - oracle[:r]))))
    c8 = eig_smallest(normalized_laplacian(ring(8)), 8)
    closed = np.sort([1 - (1 + 2 * np.cos(2 * np.pi * j / 8)) / 3 for j in range(8)])
    c8_err = float(np.max(np.abs(c8.lam - closed)))
    ok = worst_res <= 1e-8 and worst_orth <= 1e-8 and worst_oracle <= 1e-6 and c8_err <= 1e-10
    record("C5", ok, f"residual {worst_res:.1e}, orthonormality {worst_orth:.1e}, Jacobi oracle {worst_oracle:.1e} "
                     f"(50 graphs, dense+Lanczos); ring C_8 closed form {c8_err:.1e}")


# -- C6: filters ----------------------------------------------------------------------------------------

def test_c6_filter_identities():
    worst_sum = worst_resp = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        g = random_graph(int(rng.integers(1, 40)), float(rng.uniform(0, 0.7)), seed)
        f = filter_matrices(g)
        worst_sum = max(worst_sum, float(np.max(np.abs(f.a_low_sym + f.a_high_sym - np.eye(g.n)))))
        lam, u = np.linalg.eigh(normalized_laplacian(g))
        worst_resp = max(worst_resp,
                         float(np.max(np.abs(f.a_low_sym @ u - u * (1 - lam / 2)))),
                         float(np.max(np.abs(f.a_high_sym @ u - u * (lam / 2)))))
    record("C6", worst_sum <= 1e-12 and worst_resp <= 1e-8,
           f"max |a_low + a_high - I| {worst_sum:.1e}; max response error {worst_resp:.1e} over 100 graphs")


# -- C7: matching --------------------------------------------------------------------------------------

def test_c7_matching_oracles():
    greedy_ok = hit_ok = mono_ok = True
    for seed in range(100):
        rng = np.random.default_rng(seed)
        s = rng.random((8, 8))
        assert len(np.unique(s)) == 64
        greedy_ok &= greedy_match(s) == rescan_oracle(s)
        gt = {i: int(j) for i, j in enumerate(rng.permutation(8))}
        ranks = true_ranks(s, gt)
        hit_ok &= ranks.tolist() == [full_sort_rank(s[i], gt[i]) for i in gt]
        hits = hit_at_k(s, gt, range(1, 9))
        expect = {k: np.mean([full_sort_rank(s[i], gt[i]) <= k for i in gt]) for k in range(1, 9)}
        hit_ok &= all(hits[k] == expect[k] for k in expect)
        mono_ok &= all(hits[k] <= hits[k + 1] for k in range(1, 8))
    record("C7", greedy_ok and hit_ok and mono_ok,
           f"greedy==rescan {greedy_ok}, hit@k==full sort {hit_ok}, monotone {mono_ok} (100 tie-free 8x8)")


# -- C8: self-alignment ----------------------------------------------------------------------------------

def test_c8_ring_self_alignment():
    g = ring(100)
    perfect = 0
    for seed in range(10):
        gs = g.with_features(np.random.default_rng(seed).normal(size=(100, 2)))
        t, perm = perturb_and_permute(gs, PerturbationSpec(0.0, seed))
        m = train_pair(gs, t, EncoderConfig(), FmHyper(), TrainConfig(seed=seed))
        perfect += align(m.z_source, m.z_target, {i: int(perm[i]) for i in range(100)}).acc == 1.0
    record("C8", perfect >= 9, f"Acc = 1.0 in {perfect}/10 seeds on ring C_100 with random 2-d features")


# -- C9: determinism ----------------------------------------------------------------------------------------

def _records(out):
    import json
    return json.load(open(out / "report.json"))["records"]


def test_c9_cli_determinism(tmp_path):
    import networkx as nx
    h = nx.powerlaw_cluster_graph(60, 2, 0.3, seed=2)
    src = Graph(60, list(h.edges()))
    edges = tmp_path / "g.edges"
    edges.write_text("".join(f"{u} {v}\n" for u, v in src.edges))
    tgt, perm = perturb_and_permute(src, PerturbationSpec(0.02, 5))
    tedges = tmp_path / "t.edges"
    tedges.write_text("".join(f"{u} {v}\n" for u, v in tgt.edges))
    gt = tmp_path / "gt.txt"
    gt.write_text("".join(f"{i} {perm[i]}\n" for i in range(60)))
    rng = np.random.default_rng(0)
    for name in ("ea.csv", "eb.csv"):
        np.savetxt(tmp_path / name, rng.normal(size=(12, 6)), delimiter=",")

    fast = ["--epochs", "5", "--r", "20"]
    commands = {
        "bench": ["bench", "--edges", str(edges), "--p", "0,0.05", "--n-targets", "2", *fast],
        "align": ["align", "--edges", str(edges), "--edges-b", str(tedges), "--ground-truth", str(gt), *fast],
        "embed-align": ["embed-align", "--embeddings", str(tmp_path / "ea.csv"), str(tmp_path / "eb.csv"),
                        "--epochs", "5", "--hidden", "32"],
        "sweep": ["sweep", "--edges", str(edges), "--p", "0.05", "--n-targets", "1", "--lambda-orth", "0,0.1", *fast],
    }
    same = {}
    for mode, argv in commands.items():
        a, b = tmp_path / f"{mode}-1", tmp_path / f"{mode}-2"
        codes = (main(argv + ["--out", str(a)]), main(argv + ["--out", str(b), "--jobs", "2"]))
        same[mode] = codes == (0, 0) and _records(a) == _records(b)
    record("C9", all(same.values()), "identical metric records on repeat: " + ", ".join(f"{k} {v}" for k, v in same.items()))
