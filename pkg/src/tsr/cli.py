"""Command-line entry point: ``tsr <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Results go to stdout or files; progress and diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .errors import DataError, TSRError
from .globalfeat import FEATURE_NAMES

log = logging.getLogger("tsr")

MODES = ("tsr", "tsr+dp", "local-only", "local+dp")
IMAGE_SUFFIXES = {".pgm", ".pbm", ".png"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _threads(value):
    if value is None:
        value = os.environ.get("TSR_THREADS", "1")
    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"invalid thread count {value!r}") from None
    if n < 0:
        raise UsageError("thread count must be >= 0")
    return n or (os.cpu_count() or 1)


def _csv_out(rows, header, fh=None):
    w = csv.writer(fh or sys.stdout, lineterminator="\n")
    if header:
        w.writerow(header)
    w.writerows(rows)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


# --------------------------------------------------------------------------
# subcommands


def cmd_convert(args):
    from .shapeio import convert_image

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for src in args.inputs:
        src = Path(src)
        files = sorted(p for p in src.rglob("*") if p.is_file()) if src.is_dir() else [src]
        for f in files:
            rel = f.relative_to(src) if src.is_dir() else Path(f.name)
            dst = (out / rel).with_suffix(".pgm")
            dst.parent.mkdir(parents=True, exist_ok=True)
            convert_image(f, dst, polarity=args.polarity)
            n += 1
    log.info("converted %d image(s) into %s", n, out)
    return 0


def _config_from(args):
    from .index import PRESETS, BuildConfig

    cfg = BuildConfig(seed=args.seed, epsilon=args.epsilon, K=args.K, n_trees=args.trees,
                      iters=args.iters, knn_w=args.knn_w, kernel_k=args.kernel_k,
                      n_points=args.n_points)
    if args.M is not None:
        cfg.M = args.M
    elif args.preset:
        cfg.M = PRESETS[args.preset]
    return cfg


def cmd_build(args):
    from .pipeline import build_index
    from .shapeio import load_dataset, save_index

    t0 = time.perf_counter()
    gallery = load_dataset(args.dataset, label_rule=args.label_rule, threshold=args.threshold,
                           strict=args.strict)
    for path, err in gallery.failures:
        log.warning("skipped %s: %s", path, err)
    log.info("loaded %d shapes from %s", len(gallery), args.dataset)
    index = build_index(gallery, _config_from(args), strict=args.strict,
                        workers=_threads(args.threads))
    save_index(index, args.out)
    log.info("index with %d shapes, M=%d, K=%d written to %s (%.1fs)", index.N, index.M,
             index.config.K, args.out, time.perf_counter() - t0)
    return 0


def _load_index(path):
    from .shapeio import load_index

    return load_index(path)


def cmd_query(args):
    from .pipeline import query, query_gallery
    from .shapeio import load_shape

    index = _load_index(args.index)
    kw = {"epsilon": args.epsilon, "K": args.K}
    pos = index.position(args.shape) if not Path(args.shape).exists() else None
    if pos is not None:
        res = query_gallery(index, pos, args.mode, **kw)
    else:
        res = query(index, load_shape(args.shape, threshold=args.threshold), args.mode, **kw)
    if res.fallback:
        log.warning("no cluster passed epsilon; fell back to cluster %d", res.relevant.clusters[0])
    J = res.relevant.J if res.relevant is not None else None
    rows = []
    for r, (g, s) in enumerate(zip(res.ranking[: args.top], res.scores[: args.top]), start=1):
        c = int(index.clusters.assignment[g])
        rows.append([r, index.ids[g], _fmt(s), c, _fmt(J[c]) if J is not None else "",
                     int(r <= res.n_included)])
    _csv_out(rows, ["rank", "id", "score", "cluster", "J", "included"] if args.header else None)
    return 0


def cmd_benchmark(args):
    from . import evaluation
    from .shapeio import load_dataset

    index = _load_index(args.index)
    if args.dataset:
        gallery = load_dataset(args.dataset, label_rule=args.label_rule, threshold=args.threshold,
                               strict=False)
        if set(gallery.ids) != set(index.ids):
            missing = len(set(gallery.ids) ^ set(index.ids))
            raise DataError(f"dataset and index disagree on {missing} shape id(s)")
        lookup = dict(zip(gallery.ids, gallery.labels))
        index.labels = [lookup[i] for i in index.ids]
    include = None if args.self_inclusion is None else args.self_inclusion == "include"
    t0 = time.perf_counter()
    rep = evaluation.benchmark(index, args.mode, dataset=args.dataset or args.index,
                               include_self=True if include is None else include,
                               epsilon=args.epsilon, K=args.K)
    if include is not None and include:
        # top-N normally drops the query; honour an explicit request
        rep.topn = _topn_with_self(index, args, rep)
    rep.timings["total"] = time.perf_counter() - t0
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(rep.summary(args.timings))
        (out / "topn.csv").write_text(rep.topn_csv())
        (out / "pr.csv").write_text(rep.pr_csv())
        (out / "bullseye.csv").write_text(rep.bullseye_csv())
        if args.figures:
            from . import plotting

            plotting.pr_curve(rep.recall, rep.precision, out / "pr.png", label=args.mode)
            plotting.topn_bars(rep.topn, rep.n_queries, out / "topn.png")
    text = {"topn": rep.topn_csv(), "pr": rep.pr_csv(), "bullseye": rep.bullseye_csv(),
            "all": rep.summary(args.timings)}[args.metric]
    sys.stdout.write(text)
    return 0


def _topn_with_self(index, args, rep):
    from .evaluation import top_n_consistency
    from .pipeline import query_gallery

    rankings = [query_gallery(index, q, args.mode, epsilon=args.epsilon, K=args.K).ranking
                for q in range(index.N)]
    return top_n_consistency(rankings, index.labels, len(rep.topn), include_self=True)


def cmd_dump_features(args):
    index = _load_index(args.index)
    X = index.raw_features if args.raw else index.features
    rows = [[sid] + [_fmt(v) for v in x] for sid, x in zip(index.ids, X)]
    _csv_out(rows, ["id", *FEATURE_NAMES])
    return 0


def cmd_dump_clusters(args):
    index = _load_index(args.index)
    cl = index.clusters
    train = set(cl.training_idx.tolist())
    medoids = set(cl.medoids.tolist())
    rows = [[sid, index.labels[i] if index.labels[i] is not None else "", int(cl.assignment[i]),
             int(i in medoids), int(i in train)] for i, sid in enumerate(index.ids)]
    _csv_out(rows, ["id", "label", "cluster", "medoid", "training"])
    return 0


def cmd_dump_distances(args):
    index = _load_index(args.index)
    rows = [[sid] + [_fmt(v) for v in row] for sid, row in zip(index.ids, index.dist)]
    _csv_out(rows, ["id", *index.ids])
    return 0


def cmd_dump_scatter(args):
    from .pipeline import query, query_gallery
    from .shapeio import load_shape

    index = _load_index(args.index)
    pos = index.position(args.shape) if not Path(args.shape).exists() else None
    kw = {"epsilon": args.epsilon, "K": args.K}
    if pos is not None:
        res = query_gallery(index, pos, "tsr", **kw)
    else:
        res = query(index, load_shape(args.shape, threshold=args.threshold), "tsr", **kw)
    floor = index.config.prob_floor
    a = -np.log(np.maximum(res.p_rf, floor))
    b = -np.log(np.maximum(res.p_knn, floor))
    rel = np.isin(np.arange(index.M), res.relevant.clusters)
    rows = [[k, _fmt(a[k]), _fmt(b[k]), _fmt(res.relevant.J[k]), int(rel[k])]
            for k in range(index.M)]
    _csv_out(rows, ["cluster", "neg_log_prf", "neg_log_pknn", "J", "relevant"])
    if args.figure:
        from . import plotting

        eps = index.config.epsilon if args.epsilon is None else args.epsilon
        plotting.cost_scatter(a, b, rel, eps, args.figure)
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser():
    p = _Parser(prog="tsr", description="Two-stage shape retrieval.")
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    c = sub.add_parser("convert", help="convert images to binary PGM")
    c.add_argument("inputs", nargs="+", help="image files or directories")
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--polarity", choices=("auto", "keep", "invert"), default="auto")
    c.set_defaults(func=cmd_convert)

    def data_opts(q):
        q.add_argument("--label-rule", default="prefix-before-last-dash",
                       choices=("prefix-before-last-dash", "parent-directory", "alpha-prefix"))
        q.add_argument("--threshold", type=int, default=128, help="foreground gray level")

    def query_opts(q):
        q.add_argument("--epsilon", type=float, default=None, help="override the index epsilon")
        q.add_argument("--K", type=int, default=None, help="override the index K")

    b = sub.add_parser("build", help="build an index from a dataset directory")
    b.add_argument("--dataset", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--M", type=int, default=None, help="cluster count (default: by preset/size)")
    b.add_argument("--preset", choices=("mpeg7", "kimia99", "tari1000"))
    b.add_argument("--epsilon", type=float, default=7.0)
    b.add_argument("--K", type=int, default=None, help="neighbours for P_knn (default 1.5 N/M)")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--trees", type=int, default=100, help="trees per feature group")
    b.add_argument("--iters", type=int, default=20, help="diffusion iterations")
    b.add_argument("--knn-w", type=int, default=10, help="diffusion locality (self included)")
    b.add_argument("--kernel-k", type=int, default=7, help="neighbour rank for kernel bandwidths")
    b.add_argument("--n-points", type=int, default=100, help="contour samples per shape")
    b.add_argument("--threads", default=None, help="worker processes (0 = all cores)")
    b.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True,
                   help="fail on any unreadable or degenerate shape")
    data_opts(b)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="rank the gallery against one shape")
    q.add_argument("index")
    q.add_argument("shape", help="image path, or the id of a gallery shape")
    q.add_argument("--mode", choices=MODES, default="tsr+dp")
    q.add_argument("--top", type=int, default=10)
    q.add_argument("--header", action="store_true")
    q.add_argument("--threshold", type=int, default=128)
    query_opts(q)
    q.set_defaults(func=cmd_query)

    m = sub.add_parser("benchmark", help="query every gallery shape and score the rankings")
    m.add_argument("index")
    m.add_argument("--dataset", default=None, help="relabel from this directory")
    m.add_argument("--mode", choices=MODES, default="tsr+dp")
    m.add_argument("--metric", choices=("all", "bullseye", "topn", "pr"), default="all")
    m.add_argument("--out", default=None, help="directory for report.txt and CSV files")
    m.add_argument("--figures", action="store_true", help="also write pr.png and topn.png")
    m.add_argument("--self-inclusion", choices=("include", "exclude"), default=None)
    m.add_argument("--timings", action="store_true", help="add wall-clock times to the report")
    data_opts(m)
    query_opts(m)
    m.set_defaults(func=cmd_benchmark)

    f = sub.add_parser("dump-features", help="per-shape 13-D global features as CSV")
    f.add_argument("index")
    f.add_argument("--raw", action="store_true", help="unscaled skeleton counts")
    f.set_defaults(func=cmd_dump_features)

    k = sub.add_parser("dump-clusters", help="cluster membership as CSV")
    k.add_argument("index")
    k.set_defaults(func=cmd_dump_clusters)

    d = sub.add_parser("dump-distances", help="local distance matrix as CSV")
    d.add_argument("index")
    d.set_defaults(func=cmd_dump_distances)

    s = sub.add_parser("dump-scatter", help="per-cluster (-ln P_rf, -ln P_knn, J) for one query")
    s.add_argument("index")
    s.add_argument("shape", help="image path, or the id of a gallery shape")
    s.add_argument("--figure", default=None, help="also write a PNG scatter plot here")
    s.add_argument("--threshold", type=int, default=128)
    query_opts(s)
    s.set_defaults(func=cmd_dump_scatter)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (DataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except TSRError as e:
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
