"""Command-line interface.

Exit codes: 0 success, 2 bad input (including usage errors), 1 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources

import numpy as np

from . import adversary
from .collision_audit import collision_counts, metric_comparison, render_collision_map, write_pnm
from .distances import METRICS
from .errors import EvaluationError, InvariantViolation
from .io import atomic_write, load_embeddings, load_labels
from .report import SCORES, DatasetBundle, run_evaluate, to_json
from .ranking_metrics import TiePolicy
from .tie_expectation import DEFAULT_BUDGET, DEFAULT_SAMPLES, extract_runs


def _tie_policy(text):
    try:
        return TiePolicy.parse(text)
    except EvaluationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--metric", choices=METRICS, default="euclidean")
    p.add_argument("--precision", choices=("double", "single"), default="double")
    p.add_argument("--tie-policy", type=_tie_policy, default=TiePolicy("stable"),
                   metavar="{stable,favorable,unfavorable,shuffle:SEED}")
    p.add_argument("--leave-one-out", action="store_true",
                   help="query every sample against the rest of the set")
    p.add_argument("--output", "-o", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("text", "binary"), default="text",
                   help="embedding file format")
    return p


def _inputs(p: argparse.ArgumentParser):
    p.add_argument("--embeddings", help="database embeddings (default: bundled toy set)")
    p.add_argument("--labels", help="database labels, one per line")
    p.add_argument("--queries", help="query embeddings (omit with --leave-one-out)")
    p.add_argument("--query-labels")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="detmap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="mAP with bounds and expectation")
    _inputs(p)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                   help="max placements enumerated per tie run")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES,
                   help="Monte-Carlo draws for runs over budget")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, action="append", help="precision@k depth (repeatable)")
    p.add_argument("--threshold", type=float, default=1e-10, help="collision threshold")
    p.add_argument("--score", choices=SCORES, default="map_minus")
    p.add_argument("--per-query", action="store_true")

    p = sub.add_parser("collisions", parents=[common], help="collision counts and raster")
    _inputs(p)
    p.add_argument("--threshold", type=float, action="append",
                   help="collision threshold (repeatable, default 1e-10)")
    p.add_argument("--raster", help="write the collision map (PPM, or PGM with --gray)")
    p.add_argument("--gray", action="store_true")
    p.add_argument("--skip-rows", type=int, default=0, help="drop the first N queries from the raster")
    p.add_argument("--all-metrics", action="store_true", help="compare every distance metric")
    p.add_argument("--histogram", action="store_true", help="include the per-rank histogram")

    p = sub.add_parser("exploit", parents=[common], help="all-zero embedding exploit")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--dim", type=int, default=1000)
    p.add_argument("--objective", choices=("maximize", "minimize"), default="maximize")
    p.add_argument("--budget", type=int, default=0, help="hill-climbing swap proposals")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline-reps", type=int, default=30,
                   help="random-embedding repetitions for comparison (0 to skip)")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)

    p = sub.add_parser("baseline", parents=[common], help="random-embedding baseline")
    p.add_argument("--labels", help="labels file (default: classes x per-class)")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--dim", type=int, default=1000)
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("runs", parents=[common], help="dump equidistant runs")
    _inputs(p)
    p.add_argument("--mixed-only", action="store_true")
    return parser


def _bundle(args) -> DatasetBundle:
    if args.embeddings is None:
        data = resources.files("detmap") / "data"
        with resources.as_file(data / "toy_embeddings.csv") as e, \
                resources.as_file(data / "toy_labels.txt") as lab:
            db = load_embeddings(e, "text")
            labels = load_labels(lab)
    else:
        if args.labels is None:
            raise EvaluationError("--labels is required with --embeddings")
        db = load_embeddings(args.embeddings, args.format)
        labels = load_labels(args.labels)
    queries = query_labels = None
    if args.queries is not None:
        if args.leave_one_out:
            raise EvaluationError("--queries cannot be combined with --leave-one-out")
        if args.query_labels is None:
            raise EvaluationError("--query-labels is required with --queries")
        queries = load_embeddings(args.queries, args.format)
        query_labels = load_labels(args.query_labels)
    elif not args.leave_one_out:
        # a single set without --leave-one-out is queried against itself
        queries, query_labels = db, labels
    return DatasetBundle(db, labels, queries, query_labels, args.leave_one_out,
                         args.metric, args.precision, args.tie_policy)


def _emit(args, doc) -> None:
    text = to_json(doc)
    if args.output:
        atomic_write(args.output, text.encode("utf-8"))
    else:
        sys.stdout.write(text)


def cmd_eval(args):
    ks = tuple(args.k) if args.k else (1, 10)
    report = run_evaluate(_bundle(args), budget=args.budget, seed=args.seed, samples=args.samples,
                          ks=ks, threshold=args.threshold, score=args.score,
                          per_query=args.per_query)
    _emit(args, report.to_dict())


def cmd_collisions(args):
    thresholds = args.threshold or [1e-10]
    bundle = _bundle(args)
    if args.all_metrics:
        emb = bundle.database
        reports = []
        for t in thresholds:
            for rep in metric_comparison(emb, bundle.db_labels, t, bundle.precision,
                                         bundle.leave_one_out).values():
                reports.append(rep.to_dict(args.histogram))
        _emit(args, {"reports": reports})
        return
    D, R = bundle.matrices()
    reports = [collision_counts(D, R, t, bundle.metric, bundle.precision).to_dict(args.histogram)
               for t in thresholds]
    doc = {"reports": reports}
    if args.raster:
        cmap = render_collision_map(D, R, thresholds[0], skip_rows=args.skip_rows)
        write_pnm(cmap, args.raster, color=not args.gray)
        doc["raster"] = {"path": args.raster, "rows": cmap.shape[0], "columns": cmap.shape[1],
                         "threshold": thresholds[0]}
    _emit(args, doc)


def cmd_exploit(args):
    labels = adversary.class_labels(args.classes, args.per_class)
    order = adversary.search_order(labels, args.objective, args.budget, args.seed)
    inst = adversary.ExploitInstance(labels, order, args.dim, args.metric)
    report = adversary.exploit_report(inst, baseline_reps=args.baseline_reps, seed=args.seed,
                                      samples=args.samples)
    # measured under the requested policy as well as the naive stable one
    report["tie_policy"] = str(args.tie_policy)
    report["measured_map_policy"] = adversary.evaluate_with_order(inst, args.tie_policy)
    report["objective"] = args.objective
    report["search_budget"] = args.budget
    report["sample_order"] = [int(i) for i in order]
    _emit(args, report)


def cmd_baseline(args):
    if args.labels:
        labels = np.asarray(load_labels(args.labels))
    else:
        labels = adversary.class_labels(args.classes, args.per_class)
    s = adversary.random_baseline(labels, args.dim, args.reps, args.seed, args.metric)
    _emit(args, {"repetitions": s.repetitions, "mean_map": s.mean_map, "std_map": s.std_map,
                 "seed": s.seed, "maps": s.maps, "dim": args.dim, "metric": args.metric})


def cmd_runs(args):
    D, R = _bundle(args).matrices()
    out = []
    for q in range(D.shape[0]):
        keep = ~R.excluded[q]
        for run in extract_runs(D[q, keep], R.values[q, keep], q):
            if args.mixed_only and not run.mixed:
                continue
            out.append({"query": run.query_index, "k": run.k, "n": run.n, "l": run.l,
                        "m": run.m, "distance": run.distance_value, "mixed": run.mixed})
    _emit(args, {"runs": out})


COMMANDS = {"eval": cmd_eval, "collisions": cmd_collisions, "exploit": cmd_exploit,
            "baseline": cmd_baseline, "runs": cmd_runs}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (EvaluationError, OSError) as exc:
        print(f"detmap: error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"detmap: internal error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
