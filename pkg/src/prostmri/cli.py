"""Command line entry point: ``prostmri <verb> ...``.

Exit codes: 0 success, 1 data/schema error, 2 config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .errors import ConfigError, DataError, NumericError, ProstMRIError

log = logging.getLogger("prostmri")


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    kw = {"default": argparse.SUPPRESS} if suppress else {"default": None}
    p.add_argument("--config", help="experiment config (YAML)", **kw)
    p.add_argument("--seed", type=int, help="override the random seed", **kw)
    p.add_argument("--out", help="output directory", **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prostmri", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    def verb(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = verb("split", "write the stratified test/fold assignment as id,role CSV")
    p.add_argument("--data", help="cancer/normal directory or manifest CSV (default: config)")
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--k", type=int)

    verb("run", "run every configured pipeline and write the report")

    p = verb("eval-external", "evaluate a saved model on an external manifest")
    p.add_argument("--model", required=True, nargs="+")
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings", help="embedding CSV for embedding-feature models")

    p = verb("reader-study", "per-reader metrics and Fleiss' kappa from a ratings CSV")
    p.add_argument("--ratings", required=True)
    p.add_argument("--n-bootstrap", type=int, default=10000)
    p.add_argument("--ai-report", help="run report.json to compare against")
    p.add_argument("--ai-pipeline", help="pipeline name inside --ai-report")
    p.add_argument("--ai-cm", help="AI confusion matrix 'TN/FP/FN/TP' (alternative to --ai-report)")
    p.add_argument("--ai-label", default="AI")

    p = verb("saliency", "HOG-cell contribution maps for a HOG-feature model")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True, nargs="+")

    p = verb("report", "re-render tables and figures from a saved report.json")
    p.add_argument("--report", required=True)
    p.add_argument("--format", nargs="+", choices=["csv", "markdown"], default=["csv", "markdown"])
    return parser


def _load_cfg(args):
    from .pipeline import config_from_dict

    if not args.config:
        raise ConfigError("--config is required for this command")
    path = Path(args.config)
    try:
        d = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"config {path} must be a mapping")
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = config_from_dict(d, path.parent)
    if args.out:
        from dataclasses import replace

        cfg = replace(cfg, output=args.out)
    return cfg


def _out(args, default="out") -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_split(args):
    from .data import (SplitConfig, load_manifest, split_roles, stratified_kfold,
                       stratified_split, write_split_csv)

    if args.config:
        cfg = _load_cfg(args)
        source, split, out = args.data or cfg.source, cfg.split, Path(args.out or cfg.output)
    else:
        if not args.data:
            raise ConfigError("split needs --data or --config")
        source, split, out = args.data, SplitConfig(), Path(args.out or "out")
    split = SplitConfig(args.test_fraction or split.test_fraction, args.k or split.k,
                        split.seed if args.seed is None else args.seed)
    s = load_manifest(source)
    dev, test = stratified_split(s, split)
    folds = stratified_kfold(dev, split.k, split.seed)
    out.mkdir(parents=True, exist_ok=True)
    write_split_csv(out / "split.csv", split_roles(test, folds))
    print(f"samples: {len(s)} ({s.n_pos} cancer, {s.n_neg} normal)")
    print(f"test: {len(test)} ({test.n_pos} cancer, {test.n_neg} normal)")
    for f, (_, val) in enumerate(folds):
        print(f"fold{f}: {len(val)} ({val.n_pos} cancer, {val.n_neg} normal)")
    print(f"wrote {out / 'split.csv'}")


def cmd_run(args):
    from .pipeline import run_experiment

    cfg = _load_cfg(args)
    report = run_experiment(cfg)
    for p in report.pipelines:
        m = p.metrics
        auc = "n/a" if m.auc is None else f"{m.auc:.3f}"
        print(f"{p.name}: acc {m.accuracy:.3f} auc {auc} sens {m.sensitivity:.3f} "
              f"spec {m.specificity:.3f} [{p.operating.cm}]")
    print(f"wrote {cfg.output}")


def cmd_eval_external(args):
    from .pipeline import evaluate_external
    from .report import render_external

    out = _out(args)
    results = [evaluate_external(m, args.data, args.embeddings) for m in args.model]
    render_external(results, out / "external")
    with open(out / "external.json", "w") as fh:
        json.dump([r.to_dict() for r in results], fh, indent=1, sort_keys=True)
        fh.write("\n")
    for r in results:
        auc = "n/a" if r.auc is None else f"{r.auc:.3f}"
        print(f"{r.model}: n={r.n} ({r.n_pos}+/{r.n_neg}-) auc {auc} "
              f"fixed [{r.fixed.cm}] floor [{r.floor.cm}] {' '.join(r.flags)}")
    print(f"wrote {out}")


def cmd_reader_study(args):
    from .metrics import ConfusionMatrix, summarize
    from .pipeline import RunReport
    from .readers import fleiss_kappa, load_ratings, reader_metrics
    from .report import render_reader_study

    out = _out(args)
    rs = load_ratings(args.ratings)
    table = reader_metrics(rs)
    kappa = fleiss_kappa(rs, args.n_bootstrap, 42 if args.seed is None else args.seed)
    ai = None
    if args.ai_cm:
        ai = summarize(ConfusionMatrix.parse(args.ai_cm))
    elif args.ai_report:
        report = RunReport.load(args.ai_report)
        match = [p for p in report.pipelines if args.ai_pipeline in (None, p.name)]
        if not match:
            raise DataError(f"pipeline {args.ai_pipeline!r} not found in {args.ai_report}")
        ai = match[0].metrics
    render_reader_study(table, kappa, out, ai, args.ai_label)
    print(f"cases: {rs.n_cases} ({rs.n_truth_pos} positive, {rs.n_truth_neg} negative), "
          f"readers: {rs.n_readers}")
    print(f"Fleiss kappa {kappa.kappa:.3f} (95% CI {kappa.ci_lo:.3f}-{kappa.ci_hi:.3f}, p={kappa.p:.2g})")
    print(f"wrote {out}")


def cmd_saliency(args):
    import csv

    from .features import saliency_map
    from .imageproc import load_standardized
    from .linear import load_model
    from .plotting import save_overlay

    out = _out(args) / "saliency"
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(args.model)
    for path in args.image:
        img = load_standardized(path)
        hm = saliency_map(model, img)
        stem = Path(path).stem
        save_overlay(img, hm.rendering, out / f"{stem}_saliency.png")
        with open(out / f"{stem}_cells.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in hm.cells:
                w.writerow([repr(float(v)) for v in row])
        print(f"{path}: score-bias {hm.total:.4f}")
    print(f"wrote {out}")


def cmd_report(args):
    from .pipeline import RunReport
    from .report import render_report

    report = RunReport.load(args.report)
    out = Path(args.out) if args.out else Path(args.report).parent
    files = render_report(report, out, tuple(args.format))
    print(f"wrote {len(files)} files to {out}")


COMMANDS = {"split": cmd_split, "run": cmd_run, "eval-external": cmd_eval_external,
            "reader-study": cmd_reader_study, "saliency": cmd_saliency, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.verb](args)
    except ProstMRIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return NumericError.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
