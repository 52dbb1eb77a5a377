"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from contextlib import nullcontext
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import data_io
from .errors import NumericalError, ValidationError
from .frank_wolfe import SolveOptions
from .pipeline import (
    AlignConfig,
    SplitSpec,
    classifier_for,
    classify_and_ap,
    evaluate_alignment,
    expand_grid,
    grid_search,
    run_ncut,
    run_semi,
    run_sl,
    run_weak,
    split_dataset,
)

log = logging.getLogger("ordalign")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
STEP_RULES = {"linesearch": "exact_line_search", "universal": "universal"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _split_args(p: argparse.ArgumentParser, sup_default: float = 0.0) -> None:
    p.add_argument("--sup-fraction", type=float, default=sup_default)
    p.add_argument("--val-fraction", type=float, default=0.05)
    p.add_argument("--test-fraction", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=0)


def _solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gap-tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ordalign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--config", type=Path, help="JSON file with synthetic generator fields")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("align", help="weak or semi-supervised alignment")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--mode", choices=("weak", "semi"), default="weak")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-2)
    p.add_argument("--kappa-bg", type=float, default=0.0)
    p.add_argument("--bg-weight", type=float, default=1.0)
    _split_args(p)
    _solver_args(p)
    p.add_argument("--step-rule", choices=tuple(STEP_RULES), default="linesearch")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--trace", action="store_true", help="write per-iteration records to trace.jsonl")

    p = sub.add_parser("eval", help="score an alignment file against ground truth")
    p.add_argument("--alignment", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("classify", help="per-class AP of a recovered classifier on the Test split")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("baseline", help="NCUT or supervised square-loss baseline")
    p.add_argument("--kind", choices=("ncut", "sl"), required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--dmin", type=int, default=10)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-2)
    _split_args(p)
    _solver_args(p)

    p = sub.add_parser("grid", help="pick hyper-parameters on the Val split")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--grid", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _cmd_generate(args) -> None:
    config = data_io.load_synthetic_config(args.config) if args.config else data_io.SyntheticConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    path = data_io.generate_synthetic(config, args.out)
    print(path)


def _cmd_align(args) -> None:
    dataset = data_io.load_dataset(args.manifest)
    config = AlignConfig(
        lam=args.lam,
        kappa_bg=args.kappa_bg,
        bg_weight=args.bg_weight,
        gap_tol=args.gap_tol,
        max_iter=args.max_iter,
        step_rule=STEP_RULES[args.step_rule],
    )
    config.solve_options()  # validate before any work
    spec = SplitSpec(args.sup_fraction, args.val_fraction, args.test_fraction, args.seed, args.repeats)
    run = run_semi if args.mode == "semi" else run_weak
    echo = {"mode": args.mode, **asdict(config), **asdict(spec)}
    args.out.mkdir(parents=True, exist_ok=True)
    scores = []
    for r in range(spec.n_repeats):
        split = split_dataset(dataset, spec, repeat=r)
        rdir = args.out / f"repeat_{r:02d}"
        rdir.mkdir(exist_ok=True)
        with open(rdir / "trace.jsonl", "w") if args.trace else nullcontext() as trace:
            result, report = run(dataset, split, config, trace=trace)
        data_io.write_alignment(result.paths, dataset, rdir / "alignment.tsv")
        data_io.write_report(report, rdir / "report.json", config={**echo, "repeat": r}, seed=spec.seed)
        clf = classifier_for(dataset, result, split, config)
        data_io.write_classifier(
            clf,
            dataset.label_set.actions,
            rdir / "model.json",
            extra={"splits": split.ids(), "test_clips": [c.id for c in split.test]},
        )
        log.info("repeat %d: %d iterations, gap %.3e, Eval Jaccard %.4f", r, result.iterations, result.final_gap, report.mean_jaccard)
        scores.append(report.mean_jaccard)
    summary = {
        "mean_jaccard": float(np.mean(scores)),
        "std_jaccard": float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0,
        "per_repeat": scores,
        "config": echo,
    }
    data_io.write_json(summary, args.out / "summary.json")
    print(f"mean Eval Jaccard {summary['mean_jaccard']:.4f} +/- {summary['std_jaccard']:.4f}")


def _cmd_eval(args) -> None:
    dataset = data_io.load_dataset(args.manifest)
    paths = data_io.read_alignment(args.alignment)
    by_id = {c.id: c for c in dataset.clips}
    missing = sorted(set(paths) - set(by_id))
    if missing:
        raise ValidationError(f"{args.alignment}: clips not in manifest: {missing}")
    report = evaluate_alignment(paths, [by_id[i] for i in sorted(paths)], dataset.label_set)
    data_io.write_report(report, args.out, config={"alignment": str(args.alignment)})
    print(f"mean Jaccard {report.mean_jaccard:.4f}")


def _cmd_classify(args) -> None:
    dataset = data_io.load_dataset(args.manifest)
    clf, labels, raw = data_io.read_classifier(args.model)
    if tuple(labels) != dataset.label_set.actions:
        raise ValidationError(f"{args.model}: label set differs from the manifest")
    by_id = {c.id: c for c in dataset.clips}
    ids = raw.get("test_clips") or [c.id for c in dataset.clips if c.ground_truth is not None]
    unknown = [i for i in ids if i not in by_id]
    if unknown:
        raise ValidationError(f"{args.model}: test clips not in manifest: {unknown}")
    ap = classify_and_ap(clf, [by_id[i] for i in ids], dataset.label_set)
    absent = [n for i, n in enumerate(dataset.label_set.actions) if i != dataset.label_set.background_index and n not in ap]
    out = {
        "per_class_ap": ap,
        "mean_ap": float(np.mean(list(ap.values()))) if ap else None,
        "absent_classes": absent,
        "test_clips": ids,
    }
    data_io.write_json(out, args.out)
    print(f"mean AP {out['mean_ap']}")


def _cmd_baseline(args) -> None:
    dataset = data_io.load_dataset(args.manifest)
    spec = SplitSpec(args.sup_fraction, args.val_fraction, args.test_fraction, args.seed)
    split = split_dataset(dataset, spec)
    args.out.mkdir(parents=True, exist_ok=True)
    echo = {"kind": args.kind, **asdict(spec)}
    if args.kind == "ncut":
        options = SolveOptions(args.gap_tol, args.max_iter)
        result, report = run_ncut(dataset, split, args.alpha, args.beta, args.dmin, options)
        paths = result.paths
        echo.update(alpha=args.alpha, beta=args.beta, d_min=args.dmin, gap_tol=args.gap_tol, max_iter=args.max_iter)
    else:
        paths, report, clf = run_sl(dataset, split, args.lam)
        echo.update(lam=args.lam)
        data_io.write_classifier(
            clf, dataset.label_set.actions, args.out / "model.json", extra={"test_clips": [c.id for c in split.test]}
        )
    data_io.write_alignment(paths, dataset, args.out / "alignment.tsv")
    data_io.write_report(report, args.out / "report.json", config=echo, seed=spec.seed)
    print(f"{args.kind} mean Eval Jaccard {report.mean_jaccard:.4f}")


def _cmd_grid(args) -> None:
    dataset = data_io.load_dataset(args.manifest)
    raw = data_io.read_json(args.grid)
    if not isinstance(raw, dict):
        raise ValidationError(f"{args.grid}: grid must be a JSON object")

    def axis(name, default):
        values = raw.get(name, default)
        if not isinstance(values, list) or not values:
            raise ValidationError(f"{args.grid}.{name}: expected a non-empty list")
        return values

    base = AlignConfig(gap_tol=raw.get("gap_tol", 1e-4), max_iter=raw.get("max_iter", 500))
    grid = expand_grid(axis("lambda", [1e-2]), axis("kappa_bg", [0.0]), axis("bg_weight", [1.0]), base)
    spec = SplitSpec(
        raw.get("sup_fraction", 0.0), raw.get("val_fraction", 0.05), raw.get("test_fraction", 0.10), raw.get("seed", 0)
    )
    mode = raw.get("mode", "weak")
    if mode not in ("weak", "semi"):
        raise ValidationError(f"{args.grid}.mode: expected 'weak' or 'semi'")
    best, table = grid_search(dataset, grid, split_dataset(dataset, spec), semi=mode == "semi")
    out = {
        "best": {"lambda": best.lam, "kappa_bg": best.kappa_bg, "bg_weight": best.bg_weight},
        "table": [
            {"lambda": g.config.lam, "kappa_bg": g.config.kappa_bg, "bg_weight": g.config.bg_weight, "val_jaccard": g.val_jaccard}
            for g in table
        ],
        "mode": mode,
        "split": asdict(spec),
    }
    data_io.write_json(out, args.out)
    print(f"best lambda={best.lam} kappa_bg={best.kappa_bg} bg_weight={best.bg_weight}")


COMMANDS = {
    "generate": _cmd_generate,
    "align": _cmd_align,
    "eval": _cmd_eval,
    "classify": _cmd_classify,
    "baseline": _cmd_baseline,
    "grid": _cmd_grid,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
