"""Command-line interface: run, estimate-k, probe, synth."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .clustering import calibrate_dmin, estimate_class_count
from .classifier import TrainConfig
from .dataio import RunOptions, load_manifest, read_embedding_container
from .evaluation import kmeans_acc_probe, linear_probe
from .pipeline import AblationFlags, run_benchmark
from .synth import SyntheticSpec, generate_synthetic_benchmark


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fccd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a full benchmark from a manifest")
    run.add_argument("--config", required=True, help="manifest JSON path")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the manifest seed")
    run.add_argument("--estimate-k", action="store_true", help="estimate novel class counts")
    run.add_argument("--no-gr", action="store_true", help="disable generative replay")
    run.add_argument("--no-ln", action="store_true", help="disable logit normalization")

    est = sub.add_parser("estimate-k", help="estimate the class count of a novel container")
    est.add_argument("--base", required=True, help="labeled base container")
    est.add_argument("--novel", required=True, help="unlabeled novel container")
    est.add_argument("--factor", type=int, default=3, help="over-cluster factor")
    est.add_argument("--upper", type=int, default=None, help="over-cluster upper bound")
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--raw", action="store_true", help="skip L2 normalization")

    probe = sub.add_parser("probe", help="representation-quality probes")
    probe.add_argument("--train", required=True, help="labeled container")
    probe.add_argument("--test", default=None, help="labeled container (linear probe only)")
    group = probe.add_mutually_exclusive_group(required=True)
    group.add_argument("--kmeans", action="store_true", help="clustering-match accuracy")
    group.add_argument("--linear", action="store_true", help="linear-probe accuracy")
    probe.add_argument("--seed", type=int, default=0)
    probe.add_argument("--raw", action="store_true", help="skip L2 normalization")

    synth = sub.add_parser("synth", help="generate a synthetic benchmark")
    synth.add_argument("--sessions", type=int, required=True)
    synth.add_argument("--classes", type=int, required=True, help="classes per session")
    synth.add_argument("--dim", type=int, required=True)
    synth.add_argument("--sep", type=float, required=True, help="inter-class mean distance")
    synth.add_argument("--out", required=True)
    synth.add_argument("--points", type=int, default=200, help="train points per class")
    synth.add_argument("--test-points", type=int, default=0, help="test points per class")
    synth.add_argument("--seed", type=int, default=0)
    return parser


def _load(path: str, raw: bool):
    emb = read_embedding_container(path)
    return emb if raw else emb.normalized()


def _cmd_run(args) -> int:
    manifest = load_manifest(args.config)
    if args.seed is not None:
        manifest = replace(manifest, seed=args.seed)
    if args.estimate_k:
        manifest = replace(manifest, options=replace(manifest.options, estimate_k=True))
    flags = AblationFlags(gr=not args.no_gr, ln=not args.no_ln)
    report = run_benchmark(manifest, flags, out_dir=args.out)
    sys.stdout.write(report.render_text())
    return 0


def _cmd_estimate_k(args) -> int:
    base = _load(args.base, args.raw)
    novel = _load(args.novel, args.raw)
    calib = calibrate_dmin(base, args.factor, seed=args.seed)
    upper = args.upper
    if upper is None:
        upper = min(args.factor * calib.source_class_count, novel.count)
    count = estimate_class_count(novel, calib, upper, seed=args.seed)
    print(f"d_min {calib.d_min:.6g}")
    print(f"estimated_classes {count}")
    return 0


def _cmd_probe(args) -> int:
    train = _load(args.train, args.raw)
    if args.kmeans:
        acc = kmeans_acc_probe(train, seed=args.seed)
        print(f"kmeans_acc {acc:.1f}")
    else:
        if args.test is None:
            raise ValueError("--linear requires --test")
        test = _load(args.test, args.raw)
        acc = linear_probe(train, test, TrainConfig(seed=args.seed))
        print(f"linear_probe_acc {acc:.1f}")
    return 0


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        sessions=args.sessions,
        classes_per_session=args.classes,
        dim=args.dim,
        separation=args.sep,
        points_per_class=args.points,
        seed=args.seed,
        test_points_per_class=args.test_points,
    )
    manifest_path = generate_synthetic_benchmark(spec, args.out, RunOptions())
    print(f"manifest {manifest_path}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "estimate-k": _cmd_estimate_k,
    "probe": _cmd_probe,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # deliberate: CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
