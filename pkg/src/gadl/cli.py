"""``gadl`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

from .bench import RunSpec, run
from .encoder import EncoderConfig
from .fmap import FmHyper
from .model import TrainConfig

# embed-align runs on small class-level graphs with wide encoders
EMBED_DEFAULTS = {"layers": 4, "hidden": 512, "r": 9}
BENCH_DEFAULTS = {"layers": 2, "hidden": 16, "r": 300}
ABLATIONS = {"high-pass": "use_high_pass", "bij": "use_bij", "orth": "use_orth", "fm": "use_fm"}
SWEEP_FLOATS = {"lambda_fm", "lambda_bij", "lambda_orth", "lr", "weight_decay", "alpha", "beta"}


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    io = p.add_argument_group("inputs")
    io.add_argument("--edges", help="edge list of the (source) graph")
    io.add_argument("--edges-b", help="edge list of the target graph (align)")
    io.add_argument("--features", help="node feature CSV for the source graph (default: NetSimile)")
    io.add_argument("--features-b", help="node feature CSV for the target graph")
    io.add_argument("--embeddings", nargs=2, metavar="CSV", help="two embedding files (embed-align)")
    io.add_argument("--labels", nargs=2, metavar="TXT", help="label files aligned with --embeddings")
    io.add_argument("--ground-truth", help="'src tgt' pairs (align)")
    io.add_argument("--header", action="store_true", help="CSV inputs start with a header line")
    io.add_argument("--dataset", help="name used in reports (default: file stem)")

    pr = p.add_argument_group("protocol")
    pr.add_argument("--p", type=_floats, default=None, help="perturbation levels, e.g. 0,0.01,0.05")
    pr.add_argument("--n-targets", type=int, default=10, help="perturbed targets per level")
    pr.add_argument("--seeds", type=_ints, default=None, help="explicit run seeds (overrides --n-targets)")
    pr.add_argument("--seed", type=int, default=None, help="base seed (fallback: $GADL_SEED, then 0)")
    pr.add_argument("--perturb-mode", choices=("mixed", "delete-only"), default="mixed")
    pr.add_argument("--match-space", choices=("embedding", "spectral"), default="embedding")
    pr.add_argument("--ks", type=_ints, default=None, help="Hit@k cut-offs (default 1,5,10,50)")
    pr.add_argument("--k", type=int, default=5, help="neighbours per node in kNN graphs (embed-align)")

    m = p.add_argument_group("model")
    m.add_argument("--epochs", type=int, default=None)
    m.add_argument("--early-stop", action="store_true")
    m.add_argument("--r", type=int, default=None, help="spectral basis size (clamped to graph size)")
    m.add_argument("--layers", type=int, default=None)
    m.add_argument("--hidden", type=int, default=None, help="width of each branch")
    m.add_argument("--unshared", action="store_true", help="separate encoder weights per graph")
    m.add_argument("--recon-diag", type=float, default=None, help="reconstruction target on the diagonal")
    for name in sorted(SWEEP_FLOATS):
        m.add_argument(f"--{name.replace('_', '-')}", type=_floats, default=None,
                       help="value (a comma list in sweep mode)")
    for flag in ABLATIONS:
        m.add_argument(f"--no-{flag}", action="store_true")
    m.add_argument("--sweep-ablations", default=None,
                   help="comma list of modules to toggle on/off in sweep mode: " + ",".join(ABLATIONS))

    o = p.add_argument_group("execution")
    o.add_argument("--jobs", type=int, default=1, help="parallel training runs")
    o.add_argument("--out", help="output directory for report.json, records.csv and per-run files")
    o.add_argument("--config", help="key=value file; command-line flags take precedence")
    o.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gadl", description="Unsupervised graph alignment benchmarks.")
    sub = parser.add_subparsers(dest="mode", required=True)
    helps = {
        "bench": "perturb-and-permute robustness benchmark on one graph",
        "align": "align two graphs given a ground-truth file",
        "embed-align": "align two embedding spaces via kNN graphs",
        "sweep": "benchmark over a grid of loss weights or ablations",
    }
    for mode, text in helps.items():
        _add_common(sub.add_parser(mode, help=text, description=text))
    return parser


def config_file_args(path: str) -> list[str]:
    """Translate ``key=value`` lines into flags; ``true``/``false`` toggle switches."""
    argv = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if value.lower() in ("true", "yes", "on"):
                argv.append(flag)
            elif value.lower() in ("false", "no", "off"):
                continue
            elif flag in ("--embeddings", "--labels"):
                argv += [flag, *value.replace(",", " ").split()]
            else:
                argv += [flag, value]
    return argv


def _single(values: Optional[list[float]], name: str, mode: str):
    if values is None:
        return None
    if len(values) != 1 and mode != "sweep":
        raise ValueError(f"--{name.replace('_', '-')} takes one value outside sweep mode")
    return values[0]


def spec_from_args(args: argparse.Namespace) -> RunSpec:
    mode = args.mode
    defaults = EMBED_DEFAULTS if mode == "embed-align" else BENCH_DEFAULTS
    if args.seed is not None:
        base_seed = args.seed
    else:
        base_seed = int(os.environ.get("GADL_SEED", "0"))

    train_kw = {"r": args.r if args.r is not None else defaults["r"]}
    if args.epochs is not None:
        train_kw["epochs"] = args.epochs
    if args.recon_diag is not None:
        train_kw["recon_diag"] = args.recon_diag
    train_kw["early_stop"] = args.early_stop
    for flag, field_name in ABLATIONS.items():
        train_kw[field_name] = not getattr(args, f"no_{flag.replace('-', '_')}")
    fm_kw = {}
    grid = {}
    for name in SWEEP_FLOATS:
        values = getattr(args, name)
        if values is None:
            continue
        if mode == "sweep" and len(values) > 1:
            grid[name] = values
            continue
        target = fm_kw if name in ("alpha", "beta") else train_kw
        target[name] = _single(values, name, mode)
    if args.sweep_ablations:
        if mode != "sweep":
            raise ValueError("--sweep-ablations only applies to sweep mode")
        for flag in args.sweep_ablations.replace(",", " ").split():
            if flag not in ABLATIONS:
                raise ValueError(f"unknown module {flag!r}; choose from {', '.join(ABLATIONS)}")
            grid[ABLATIONS[flag]] = [True, False]

    encoder = EncoderConfig(n_layers=args.layers if args.layers is not None else defaults["layers"],
                            hidden_dim=args.hidden if args.hidden is not None else defaults["hidden"],
                            share_across_graphs=not (args.unshared or mode == "embed-align"))
    kw = dict(mode=mode, edges=args.edges, edges_b=args.edges_b, features=args.features,
              features_b=args.features_b, embeddings=tuple(args.embeddings or ()),
              labels=tuple(args.labels or ()), ground_truth=args.ground_truth, header=args.header,
              n_targets=args.n_targets, seeds=tuple(args.seeds) if args.seeds else None,
              base_seed=base_seed, perturb_mode=args.perturb_mode, match_space=args.match_space,
              knn_k=args.k, train=TrainConfig(**train_kw), encoder=encoder, fm=FmHyper(**fm_kw),
              grid=grid, jobs=args.jobs, out=args.out, dataset=args.dataset)
    if args.p is not None:
        kw["p_levels"] = tuple(args.p)
    if args.ks is not None:
        kw["ks"] = tuple(args.ks)
    return RunSpec(**kw)


def _summary(report) -> str:
    lines = []
    for row in report.aggregates:
        label = " ".join(f"{k}={json.dumps(row[k], sort_keys=True)}" for k in ("dataset", "point", "p") if k in row)
        if row["acc_mean"] is None:
            lines.append(f"{label}: all {row['n_runs']} runs failed")
            continue
        line = f"{label}: acc {row['acc_mean']:.4f} ± {row['acc_std']:.4f} ({row['n_ok']}/{row['n_runs']} runs)"
        if "hits_mean" in row and report.mode != "bench":
            line += " " + " ".join(f"hit@{k} {v:.4f}" for k, v in row["hits_mean"].items())
        lines.append(line)
    return "\n".join(lines)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            # file values first so that explicit flags win
            args = parser.parse_args([argv[0], *config_file_args(args.config), *argv[1:]])
        spec = spec_from_args(args)
        report = run(spec)
    except (ValueError, OSError) as exc:
        print(f"gadl: error: {exc}", file=sys.stderr)
        return 2
    if spec.out is None:
        json.dump(report.to_json(), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        print(_summary(report))
        print(f"report written to {spec.out}")
    if report.exit_code:
        print(f"gadl: {report.n_failed} run(s) failed", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
