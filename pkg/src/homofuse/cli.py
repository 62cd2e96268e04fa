"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 convergence error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from . import __version__
from .errors import DataError, HomofuseError, UsageError
from .candidates import build_candidates
from .evaluation import (
    UNKNOWN,
    MatchEntry,
    evaluate_entries,
    label_entries,
    label_pair,
    mds_embed,
    total_correct_possible,
    write_embedding_csv,
)
from .feature_io import load_feature_set, load_ground_truth, load_match_report, save_match_report
from .pipeline import PipelineConfig, distance_matrix, run_match
from .sweep import parse_arm, parse_seeds, run_sweep, write_sweep
from .synth import generate_scene, load_scene_spec, write_scene

# flag dest -> PipelineConfig field
PIPELINE_FLAGS = {
    "r": "r", "k": "k", "nu": "nu", "co": "co", "sigma": "sigma",
    "geodesic": "geodesic", "max_updates": "max_updates",
    "formulation": "formulation", "criterion": "criterion",
    "tolerance": "tolerance", "overlap_threshold": "overlap_threshold",
    "distance": "distance", "descriptors": "descriptors", "baseline": "baseline",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_pipeline_flags(p: argparse.ArgumentParser, baseline: bool = False):
    g = p.add_argument_group("pipeline")
    g.add_argument("--config", type=Path, help="JSON file of pipeline settings")
    g.add_argument("--r", type=int, help="nearest neighbours per descriptor (default 5)")
    g.add_argument("--k", type=int, help="spatial neighbours in the graph (default 8)")
    g.add_argument("--nu", type=float, help="one-class SVM nu (default 0.5)")
    g.add_argument("--co", type=float, help="one-class SVM Co (default 1.0)")
    g.add_argument("--sigma", help="kernel bandwidth: 'auto' or a number")
    g.add_argument("--geodesic", choices=["exact", "capped"], help="default capped")
    g.add_argument("--max-updates", type=int, help="settled vertices per source when capped (default 200)")
    g.add_argument("--formulation", choices=["scholkopf", "paper-eq8"])
    g.add_argument("--distance", choices=["geodesic", "reprojection"])
    g.add_argument("--descriptors", help="restrict to these descriptors, e.g. 'sift+liop'")
    g.add_argument("--criterion", choices=["pixel", "overlap"])
    g.add_argument("--tolerance", type=float, help="pixel tolerance (default: ground truth, 8)")
    g.add_argument("--overlap-threshold", type=float, help="default 0.5")
    if baseline:
        g.add_argument("--baseline", choices=["cat", "ranking", "ratio", "sm"])


def resolve_config(args) -> PipelineConfig:
    """Flags override the config file, which overrides defaults."""
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    for dest, key in PIPELINE_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[key] = v
    return PipelineConfig.from_mapping(values)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="homofuse", description="Descriptor fusion in the homography space")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--spec", type=Path, required=True, help="scene spec (JSON)")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--seed", type=int, help="override the spec's seed")

    p = sub.add_parser("match", help="run the fusion pipeline and write a match report")
    p.add_argument("features_p", type=Path)
    p.add_argument("features_q", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--gt", type=Path, help="label entries against this ground truth")
    _add_pipeline_flags(p)

    p = sub.add_parser("eval", help="precision/recall and AP against ground truth")
    p.add_argument("features_p", type=Path)
    p.add_argument("features_q", type=Path)
    p.add_argument("gt", type=Path)
    p.add_argument("--report", type=Path, help="evaluate this report instead of running a method")
    p.add_argument("-o", "--out", type=Path, help="write the labelled report here")
    p.add_argument("--pr-curve", type=Path, help="write recall,precision samples (CSV)")
    _add_pipeline_flags(p, baseline=True)

    p = sub.add_parser("embed", help="2-D MDS embedding of the candidate set (CSV)")
    p.add_argument("features_p", type=Path)
    p.add_argument("features_q", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--gt", type=Path)
    _add_pipeline_flags(p)

    p = sub.add_parser("sweep", help="multi-seed experiment over pipeline arms")
    p.add_argument("--spec", type=Path, required=True, help="scene spec template (JSON)")
    p.add_argument("--seeds", default="0-19", help="e.g. 0-19 or 1,3,5 (default 0-19)")
    p.add_argument("--arm", action="append", default=[],
                   help="NAME[:key=value,...]; repeatable (default: one 'fused' arm)")
    p.add_argument("--out", required=True, help="output prefix for .csv and .txt")
    p.add_argument("--no-timing", action="store_true", help="write runtime_ms as 0")
    _add_pipeline_flags(p)
    return parser


def cmd_synth(args):
    spec = load_scene_spec(args.spec)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    paths = write_scene(generate_scene(spec), args.out_prefix)
    for p in paths.values():
        print(p)


def _write_report(path, result, entries):
    save_match_report(path, [e.to_line() for e in entries], result.header())


def cmd_match(args):
    cfg = resolve_config(args)
    fp, fq = load_feature_set(args.features_p), load_feature_set(args.features_q)
    result = run_match(fp, fq, cfg)
    if args.gt:
        label_entries(result.entries, result.candidates.features_p,
                      result.candidates.features_q, load_ground_truth(args.gt),
                      cfg.criterion_obj())
    _write_report(args.out, result, result.entries)
    for line in result.header()[1:]:
        print(line)


def cmd_eval(args):
    cfg = resolve_config(args)
    fp, fq = load_feature_set(args.features_p), load_feature_set(args.features_q)
    gt = load_ground_truth(args.gt)
    crit = cfg.criterion_obj()
    total = total_correct_possible(fp, fq, gt, crit)
    if args.report:
        lines = load_match_report(args.report)
        pi, qi = fp.index_of(), fq.index_of()
        try:
            entries = [MatchEntry(pi[ln.p_id], qi[ln.q_id], ln.p_id, ln.q_id, ln.score, ln.tag)
                       for ln in lines]
        except KeyError as exc:
            raise DataError(f"report references unknown feature id {exc.args[0]}") from None
        report = evaluate_entries(entries, fp, fq, gt, crit, total)
    else:
        result = run_match(fp, fq, cfg)
        report = evaluate_entries(result.entries, result.candidates.features_p,
                                  result.candidates.features_q, gt, crit, total)
        if args.out:
            _write_report(args.out, result, report.entries)
    method = cfg.baseline or "fusion"
    print(f"method {method}")
    print(f"entries {len(report.entries)}")
    print(f"correct_possible {report.total_correct}")
    print(f"true_positives {report.n_true_positive}")
    print(f"precision_at_full {report.precision_at_full!r}")
    recall = report.precision_recall[-1][0] if report.precision_recall else 0.0
    print(f"recall_at_full {recall!r}")
    print(f"ap {report.map_value!r}")
    if args.pr_curve:
        with open(args.pr_curve, "w") as fh:
            fh.write("recall,precision\n")
            for r, p in report.precision_recall:
                fh.write(f"{r!r},{p!r}\n")


def cmd_embed(args):
    cfg = resolve_config(args)
    fp, fq = load_feature_set(args.features_p), load_feature_set(args.features_q)
    if cfg.descriptors is not None:
        fp, fq = fp.subset(cfg.descriptors), fq.subset(cfg.descriptors)
    cands = build_candidates(fp, fq, cfg.r)
    if not len(cands):
        raise DataError("no candidates")
    coords = mds_embed(distance_matrix(cands, cfg))
    correct = [UNKNOWN] * len(cands)
    if args.gt:
        gt = load_ground_truth(args.gt)
        crit = cfg.criterion_obj()
        correct = [int(label_pair(fp, fq, int(p), int(q), gt, crit))
                   for p, q in zip(cands.p_index, cands.q_index)]
    write_embedding_csv(args.out, coords, cands.tags(), correct)


def cmd_sweep(args):
    base = resolve_config(args)
    spec = load_scene_spec(args.spec)
    seeds = parse_seeds(args.seeds)
    arms = dict(parse_arm(a, base) for a in (args.arm or ["fused"]))
    rows = run_sweep(spec, seeds, arms)
    paths = write_sweep(rows, args.out, timing=not args.no_timing)
    print(paths["txt"].read_text(), end="")
    for r in rows:
        if r.error:
            print(f"arm {r.arm} seed {r.seed} failed: {r.error}", file=sys.stderr)


COMMANDS = {"synth": cmd_synth, "match": cmd_match, "eval": cmd_eval,
            "embed": cmd_embed, "sweep": cmd_sweep}


def _origin(exc: BaseException) -> str:
    tb = traceback.extract_tb(exc.__traceback__)
    return Path(tb[-1].filename).stem if tb else "homofuse"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except HomofuseError as exc:
        print(f"homofuse: {_origin(exc)}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"homofuse: io: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
