"""Command-line interface.

Subcommands: select (run a selector, write a manifest), coverage (coverage
curves and areas for selections), bench (synthetic sweep to CSV), inspect
(per-stratum score density as CSV). Exit codes: 0 ok, 1 usage error,
2 data error. All file outputs are written atomically.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coverage import compare_coverage, comparison_csv, coverage_report
from .datamodel import (
    EMBEDDING_VERSION,
    EmbeddingMatrix,
    atomic_write_text,
    canonicalize_scores,
    fmt_float,
    load_embeddings,
    load_scores,
    load_selection,
    save_selection,
)
from .errors import DataError, UsageError
from .selection import (
    CcsParams,
    SELECTOR_NAMES,
    ccs_select,
    importance_sampling_select,
    moderate_select,
    partition_strata,
    prune_hard_select,
    random_select,
    stratified_only_select,
    topk_hard_select,
)
from .synthbench import PRESETS, make_preset, sweep

log = logging.getLogger("coresel")

_VERSION_LINE = (
    f"coresel {__version__} (score-csv v1, embedding-binary v{EMBEDDING_VERSION}, manifest v1)"
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors must map to exit code 1, not argparse's 2
        raise UsageError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def build_parser() -> _Parser:
    parser = _Parser(prog="coresel", description=__doc__)
    parser.add_argument("--version", action="version", version=_VERSION_LINE)
    parser.add_argument("--threads", type=int, default=1, help="worker threads (results are identical for any value)")
    parser.add_argument("--seed", dest="global_seed", type=int, default=0,
                        help="global seed; the bench subcommand derives its dataset from it")
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True)

    p_sel = sub.add_parser("select", help="select a coreset and write its manifest")
    p_sel.add_argument("--method", required=True, choices=SELECTOR_NAMES)
    p_sel.add_argument("--scores", required=True, help="score table (csv or jsonl)")
    p_sel.add_argument("--embeddings", default=None, help="embedding file (moderate method only)")
    p_sel.add_argument("--alpha", type=float, required=True, help="pruning rate in [0, 1)")
    p_sel.add_argument("--beta", type=float, default=None, help="hard cutoff rate (ccs only)")
    p_sel.add_argument("--strata", type=int, default=None, help="stratum count (ccs/stratified)")
    p_sel.add_argument("--seed", type=int, default=0)
    p_sel.add_argument("--out", required=True, help="output manifest path (json)")

    p_cov = sub.add_parser("coverage", help="coverage curves and areas for selections")
    p_cov.add_argument("--train-emb", required=True)
    p_cov.add_argument("--eval-emb", required=True)
    p_cov.add_argument("--selection", action="append", default=[],
                       help="selection manifest; repeat to compare several")
    p_cov.add_argument("--exclude", default=None, help="file of newline-separated eval ids to drop")
    p_cov.add_argument("--curve-out", default=None, help="curve CSV output")
    p_cov.add_argument("--report-out", default=None, help="report JSON output")

    p_bench = sub.add_parser("bench", help="synthetic benchmark sweep")
    p_bench.add_argument("--preset", default="default", choices=sorted(PRESETS))
    p_bench.add_argument("--methods", type=lambda s: s.split(","), default=["ccs", "random", "topk-hard"])
    p_bench.add_argument("--alphas", type=_float_list, default=[0.3, 0.5, 0.7, 0.8, 0.9])
    p_bench.add_argument("--betas", type=_float_list, default=[0.1])
    p_bench.add_argument("--strata", type=_int_list, default=[50])
    p_bench.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    p_bench.add_argument("--classifier", default="knn", choices=["knn", "logreg"])
    p_bench.add_argument("--out", required=True, help="sweep CSV output")

    p_ins = sub.add_parser("inspect", help="per-stratum score counts (density view)")
    p_ins.add_argument("--scores", required=True)
    p_ins.add_argument("--strata", type=int, required=True)
    p_ins.add_argument("--out", default=None, help="write CSV here instead of stdout")

    return parser


def _require_input(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{flag}: file not found: {p}")
    return p


def _require_outdir(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.parent.exists():
        raise DataError(f"{flag}: directory does not exist: {p.parent}")
    return p


def _cmd_select(args) -> int:
    for flag, bad in (("--beta", args.method != "ccs"),
                      ("--strata", args.method not in ("ccs", "stratified"))):
        if bad and getattr(args, flag.lstrip("-").replace("-", "_")) is not None:
            raise UsageError(f"{flag} conflicts with --method {args.method}")
    if args.method == "moderate" and args.embeddings is None:
        raise UsageError("--method moderate requires --embeddings")
    if args.method != "moderate" and args.embeddings is not None:
        raise UsageError("--embeddings is only valid with --method moderate")

    scores_path = _require_input(args.scores, "--scores")
    out_path = _require_outdir(args.out, "--out")
    table = canonicalize_scores(load_scores(scores_path))
    log.info("loaded %d %s scores from %s", table.n, table.score_kind, scores_path)
    beta = args.beta if args.beta is not None else 0.0
    strata = args.strata if args.strata is not None else 50

    if args.method == "ccs":
        result = ccs_select(table, CcsParams(alpha=args.alpha, beta=beta, k=strata, seed=args.seed))
    elif args.method == "stratified":
        result = stratified_only_select(table, args.alpha, strata, args.seed)
    elif args.method == "random":
        result = random_select(table, args.alpha, args.seed)
    elif args.method == "topk-hard":
        result = topk_hard_select(table, args.alpha)
    elif args.method == "prune-hard":
        result = prune_hard_select(table, args.alpha)
    elif args.method == "importance":
        result = importance_sampling_select(table, args.alpha, args.seed)
    else:
        emb = load_embeddings(_require_input(args.embeddings, "--embeddings"))
        result = moderate_select(table, emb, args.alpha)

    save_selection(result, out_path)
    print(f"selected {result.m} of {result.source_n} examples -> {out_path}")
    return 0


def _load_exclude(path: str, eval_emb: EmbeddingMatrix) -> list[int] | None:
    if path is None:
        return None
    p = _require_input(path, "--exclude")
    ids: list[int] = []
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            ids.append(int(line))
        except ValueError:
            raise DataError(f"{p}:{lineno}: unparseable id {line!r}") from None
    if eval_emb.ids is None:
        return ids
    lookup = {int(v): i for i, v in enumerate(eval_emb.ids)}
    rows = []
    for v in ids:
        if v not in lookup:
            raise DataError(f"{path}: excluded id {v} not present in --eval-emb")
        rows.append(lookup[v])
    return rows


def _curve_csv(curves: list[tuple[str, np.ndarray, np.ndarray]], labeled: bool) -> str:
    lines = ["method,p,r"] if labeled else ["p,r"]
    for name, coverage, radii in curves:
        for p, r in zip(coverage, radii):
            row = f"{fmt_float(p)},{fmt_float(r)}"
            lines.append(f"{name},{row}" if labeled else row)
    return "\n".join(lines) + "\n"


def _cmd_coverage(args, threads: int) -> int:
    train = load_embeddings(_require_input(args.train_emb, "--train-emb"))
    evals = load_embeddings(_require_input(args.eval_emb, "--eval-emb"))
    log.info("train embeddings %dx%d, eval %dx%d", train.n, train.d, evals.n, evals.d)
    exclude = _load_exclude(args.exclude, evals)
    curve_out = _require_outdir(args.curve_out, "--curve-out") if args.curve_out else None
    report_out = _require_outdir(args.report_out, "--report-out") if args.report_out else None

    selections = [load_selection(_require_input(p, "--selection")) for p in args.selection]
    if len(selections) <= 1:
        if selections:
            sel = selections[0]
            if sel.source_n != train.n:
                raise DataError(
                    f"selection references {sel.source_n} examples but --train-emb has {train.n} rows"
                )
            subset = EmbeddingMatrix(values=train.values[sel.selected])
            name = sel.method
        else:
            subset, name = train, "full"
        report = coverage_report(subset, evals, exclude=exclude, threads=threads)
        doc = {
            "method": name,
            "auc_pr": report.auc_pr,
            "n_eval": report.n_eval,
            "n_excluded": report.n_excluded,
            "metric": report.metric,
            "curve": {
                "coverage": report.curve.coverage.tolist(),
                "radii": report.curve.radii.tolist(),
            },
        }
        if report_out:
            atomic_write_text(report_out, json.dumps(doc, indent=2) + "\n")
        if curve_out:
            atomic_write_text(
                curve_out, _curve_csv([(name, report.curve.coverage, report.curve.radii)], labeled=False)
            )
        print(f"{name}: auc_pr={fmt_float(report.auc_pr)} over {report.n_eval} eval points "
              f"({report.n_excluded} excluded)")
        return 0

    rows = compare_coverage(selections, train, evals, exclude=exclude, threads=threads)
    if report_out:
        if report_out.suffix.lower() == ".csv":
            atomic_write_text(report_out, comparison_csv(rows))
        else:
            atomic_write_text(report_out, json.dumps(rows, indent=2) + "\n")
    if curve_out:
        curves = []
        for sel in selections:
            subset = EmbeddingMatrix(values=train.values[sel.selected])
            rep = coverage_report(subset, evals, exclude=exclude, threads=threads)
            curves.append((sel.method, rep.curve.coverage, rep.curve.radii))
        atomic_write_text(curve_out, _curve_csv(curves, labeled=True))
    for row in rows:
        print(f"{row['method']}: alpha={row['alpha']} auc_pr={fmt_float(row['auc_pr'])}")
    return 0


def _cmd_bench(args, threads: int, data_seed: int) -> int:
    out_path = _require_outdir(args.out, "--out")
    ds = make_preset(args.preset, seed=data_seed)
    log.info(
        "preset %s (seed %d): %d points, %d train; grid %d methods x %d alphas x %d betas x %d ks x %d seeds",
        args.preset, data_seed, ds.points.n, ds.n_train, len(args.methods),
        len(args.alphas), len(args.betas), len(args.strata), len(args.seeds),
    )
    result = sweep(
        ds,
        methods=args.methods,
        alphas=args.alphas,
        betas=args.betas,
        ks=args.strata,
        seeds=args.seeds,
        classifier=args.classifier,
        threads=threads,
    )
    atomic_write_text(out_path, result.to_csv())
    print(f"wrote {len(result.rows)} sweep rows -> {out_path}")
    return 0


def _cmd_inspect(args) -> int:
    scores_path = _require_input(args.scores, "--scores")
    if args.strata < 1:
        raise UsageError(f"--strata must be >= 1, got {args.strata}")
    out_path = _require_outdir(args.out, "--out") if args.out else None
    table = canonicalize_scores(load_scores(scores_path))
    partition = partition_strata(table, np.arange(table.n, dtype=np.int64), args.strata)
    lines = ["stratum,lo,hi,count"]
    for i, ((lo, hi), members) in enumerate(zip(partition.ranges, partition.members)):
        lines.append(f"{i},{fmt_float(lo)},{fmt_float(hi)},{len(members)}")
    text = "\n".join(lines) + "\n"
    if out_path:
        atomic_write_text(out_path, text)
        print(f"wrote {args.strata} strata -> {out_path}")
    else:
        sys.stdout.write(text)
    return 0


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1

    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print(f"error: --threads must be >= 1, got {args.threads}", file=sys.stderr)
        return 1
    try:
        if args.command == "select":
            return _cmd_select(args)
        if args.command == "coverage":
            return _cmd_coverage(args, threads=args.threads)
        if args.command == "bench":
            return _cmd_bench(args, threads=args.threads, data_seed=args.global_seed)
        if args.command == "inspect":
            return _cmd_inspect(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
