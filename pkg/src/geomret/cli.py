"""Command-line interface: ``geomret {build,query,evaluate,gen-synthetic,bench}``.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

import argparse
import hashlib
import sys
import time
from pathlib import Path

import numpy as np

from .errors import GeomRetError
from .formats import config_path, load_index, read_features, read_manifest, save_index, write_features, write_manifest
from .metrics import MetricKind, distance
from .retrieval import BuildConfig, applicable_metrics, build_index, evaluate, gen_synthetic, make_entry, rank

QUERY_ID = "<query>"


class UsageError(Exception):
    pass


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _alpha(text):
    if text == "cv":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number in [0,1] or 'cv', got {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in [0, 1], got {v}")
    return v


def _metric(text):
    if text == "all":
        return text
    try:
        return MetricKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _cutoffs(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad cutoff list {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("cutoffs must be positive integers")
    return vals


def _check_mode(index, metric):
    if metric.needs_gmm and index.mode != "gmm":
        valid = ", ".join(m.value for m in applicable_metrics(index.mode))
        raise GeomRetError(f"metric {metric.value} requires gmm index; this index is {index.mode} (valid: {valid})")


def cmd_build(args):
    mode = args.mode
    if args.components is not None and mode != "gmm":
        raise UsageError("--components only applies to --gmm")
    if (args.smt_order is not None or args.alpha is not None) and mode != "smt":
        raise UsageError("--smt-order/--alpha only apply to --smt")
    config = BuildConfig(
        components=64 if args.components is None else args.components,
        smt_order=args.smt_order,
        alpha="cv" if args.alpha is None else args.alpha,
        eps=args.eps,
        seed=args.seed,
        normalize_rows=args.normalize_rows,
    )
    records = read_manifest(args.manifest)
    total = len(records)

    def items():
        for item_id, category, fpath in records:
            yield item_id, category, read_features(fpath)

    def progress(pos, entry, notes):
        extra = "".join(f" {k}={v}" for k, v in notes.items())
        print(f"[{pos + 1}/{total}] {entry.item_id}\t{entry.category}{extra}", flush=True)

    out = Path(args.out)
    try:
        index = build_index(items(), mode, config, progress=progress)
        save_index(index, out)
    except BaseException:
        for p in (out, config_path(out)):
            if p.exists():
                p.unlink()
        raise
    print(f"wrote {out}: {len(index)} entries, dim {index.dim}, mode {index.mode}")
    return 0


def _query_entry(index, item_id, category, fpath):
    config = BuildConfig.from_dict(index.build_config)
    entry, _ = make_entry(item_id, category, read_features(fpath), index.mode, config)
    return entry


def cmd_query(args):
    index = load_index(args.index)
    _check_mode(index, args.metric)
    query = _query_entry(index, QUERY_ID, "", args.features)
    res = rank(index, query, args.metric)
    cats = {e.item_id: e.category for e in index.entries}
    for r, (item_id, d) in enumerate(res.ranked[: args.top], 1):
        print(f"{r}\t{item_id}\t{cats[item_id]}\t{d:.6e}")
    return 0


def cmd_evaluate(args):
    index = load_index(args.index)
    metrics = applicable_metrics(index.mode) if args.metric == "all" else [args.metric]
    for m in metrics:
        _check_mode(index, m)
    records = read_manifest(args.queries)
    if not records:
        raise GeomRetError(f"{args.queries}: no queries")
    queries = [_query_entry(index, i, c, p) for i, c, p in records]
    cutoffs = sorted(set(args.cutoffs))
    top = cutoffs[-1]
    header = ["metric"] + [f"P@{c}" for c in cutoffs] + [f"MAP@{top}", f"iMAP@{top}", "sec/pair"]
    print("\t".join(header))
    for m in metrics:
        rep = evaluate(index, queries, m, cutoffs)
        row = [m.value] + [f"{rep.mean_precision[c]:.4f}" for c in cutoffs]
        row += [f"{rep.map:.4f}", f"{rep.interpolated_map:.4f}", f"{rep.pair_seconds:.3e}"]
        print("\t".join(row))
    return 0


def cmd_gen_synthetic(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = gen_synthetic(args.categories, args.items, args.rows, args.dim, args.separation, args.anisotropy, args.seed)
    records = []
    for item_id, category, x in data:
        name = f"{item_id}.dfv1"
        write_features(out / name, x)
        records.append((item_id, category, name))
    write_manifest(out / "manifest.tsv", records)
    print(f"wrote {len(records)} items ({args.categories} categories, dim {args.dim}) to {out}")
    return 0


def sample_pairs(n_entries, n_pairs, seed):
    """``n_pairs`` index pairs ``(i, j)`` with ``i != j``, reproducible per seed."""
    if n_entries < 2:
        raise GeomRetError("need at least 2 index entries to benchmark")
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n_entries, size=n_pairs)
    j = (i + rng.integers(1, n_entries, size=n_pairs)) % n_entries
    return np.stack([i, j], axis=1)


def cmd_bench(args):
    index = load_index(args.index)
    metric = args.metric
    _check_mode(index, metric)
    pairs = sample_pairs(len(index), args.pairs, args.seed)
    eps = index.build_config.get("eps")
    times = np.empty(len(pairs))
    for n, (i, j) in enumerate(pairs):
        a, b = index.entries[i], index.entries[j]
        t0 = time.perf_counter()
        distance(metric, a.signature, b.signature, a.gmm, b.gmm, eps=eps)
        times[n] = time.perf_counter() - t0
    digest = hashlib.sha1(pairs.astype("<i8").tobytes()).hexdigest()[:12]
    print(f"metric\t{metric.value}")
    print(f"pairs\t{len(pairs)}\t(sample {digest})")
    print(f"mean\t{times.mean():.3e}")
    print(f"median\t{np.median(times):.3e}")
    print(f"p95\t{np.percentile(times, 95):.3e}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="geomret", description="Distribution-signature retrieval of deep features.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a SIDX index from a manifest")
    p.add_argument("manifest")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--gmm", dest="mode", action="store_const", const="gmm")
    mode.add_argument("--smt", dest="mode", action="store_const", const="smt")
    mode.add_argument("--sample", dest="mode", action="store_const", const="sample")
    p.add_argument("--components", type=_positive_int, default=None, help="GMM components (default 64)")
    p.add_argument("--smt-order", type=int, default=None, help="Givens rotations (default 2 D log2 D)")
    p.add_argument("--alpha", type=_alpha, default=None, help="shrinkage weight or 'cv' (default cv)")
    p.add_argument("--eps", type=float, default=None, help="eigenvalue floor (default relative 1e-8)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize-rows", action="store_true", help="l2-normalize every feature row")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="rank an index against one DFV1 feature file")
    p.add_argument("index")
    p.add_argument("features")
    p.add_argument("--metric", type=_metric, default=MetricKind.WASSERSTEIN)
    p.add_argument("--top", type=_positive_int, default=10)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("evaluate", help="precision/MAP table for a query manifest")
    p.add_argument("index")
    p.add_argument("queries")
    p.add_argument("--metric", type=_metric, default="all")
    p.add_argument("--cutoffs", type=_cutoffs, default=[1, 5, 10])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-synthetic", help="write a synthetic DFV1 dataset and manifest")
    p.add_argument("--categories", type=_positive_int, default=5)
    p.add_argument("--items", type=_positive_int, default=10)
    p.add_argument("--rows", type=_positive_int, default=500)
    p.add_argument("--dim", type=_positive_int, default=16)
    p.add_argument("--separation", type=float, default=8.0)
    p.add_argument("--anisotropy", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("bench", help="time distance evaluations on sampled index pairs")
    p.add_argument("index")
    p.add_argument("--metric", type=_metric, default=MetricKind.WASSERSTEIN)
    p.add_argument("--pairs", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "metric", None) == "all" and args.command != "evaluate":
        parser.error("--metric all is only valid for evaluate")
    if args.command == "gen-synthetic" and (args.separation < 0 or args.anisotropy < 1):
        parser.error("need --separation >= 0 and --anisotropy >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (GeomRetError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
