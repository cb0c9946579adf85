"""CSV and Markdown renderings of run, external and reader-study results.

CSV cells keep full float precision; Markdown rounds to three decimals
(percentages to one).
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional

from .metrics import aggregate
from .plotting import reader_figure, roc_figure

FORMATS = ("csv", "markdown")
NA = "n/a"

RESULT_HEADER = ["Method", "Test Accuracy", "Test AUC", "Sensitivity (Recall)", "Specificity",
                 "F1-Score", "TN / FP / FN / TP"]
RESULT_KEYS = ["accuracy", "auc", "sensitivity", "specificity", "f1"]


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _md_cell(v, digits=3):
    if v is None:
        return NA
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def write_table(base: Path, header, rows, formats=FORMATS, md_rows=None, title=None):
    """Write ``base.csv`` and/or ``base.md``. ``md_rows`` overrides display rows."""
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = base.with_suffix(".csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_csv_cell(v) for v in r])
        written.append(path)
    if "markdown" in formats:
        path = base.with_suffix(".md")
        display = md_rows if md_rows is not None else [[_md_cell(v) for v in r] for r in rows]
        lines = []
        if title:
            lines += [f"**{title}**", ""]
        lines.append("| " + " | ".join(header) + " |")
        lines.append("|" + "|".join("---" for _ in header) + "|")
        lines += ["| " + " | ".join(str(c) for c in r) + " |" for r in display]
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    return written


def read_markdown_table(path) -> tuple[list[str], list[list[str]]]:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip().startswith("|")]
    cells = [[c.strip() for c in ln.strip("|").split("|")] for ln in lines]
    return cells[0], cells[2:]


def read_csv_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# -- run report ------------------------------------------------------------------

def result_rows(pipelines):
    return [[p.name] + [getattr(p.metrics, k) for k in RESULT_KEYS] + [str(p.operating.cm)]
            for p in pipelines]


def _mean_sd(pipelines):
    if len(pipelines) < 2:
        return None
    return aggregate([p.metrics for p in pipelines], RESULT_KEYS)


def render_results(pipelines, base: Path, formats=FORMATS, label="Method"):
    rows = result_rows(pipelines)
    header = [label] + RESULT_HEADER[1:]
    md = [[r[0]] + [_md_cell(v) for v in r[1:6]] + [r[6]] for r in rows]
    agg = _mean_sd(pipelines)
    if agg is not None:
        rows = rows + [["Mean"] + [agg[k].mean for k in RESULT_KEYS] + [""],
                       ["SD"] + [agg[k].sd for k in RESULT_KEYS] + [""]]

        def pm(s):
            if s.mean is None:
                return NA
            return f"{s.mean:.3f} ± {s.sd:.3f}" if s.sd is not None else f"{s.mean:.3f}"

        md.append(["Mean ± SD"] + [pm(agg[k]) for k in RESULT_KEYS] + [NA])
    return write_table(base, header, rows, formats, md)


def render_thresholds(pipelines, base: Path, formats=FORMATS):
    header = ["Method", "Operating point", "Threshold", "Sensitivity", "Specificity",
              "TN / FP / FN / TP"]
    rows = []
    for p in pipelines:
        for label, op in ((p.policy, p.operating), ("sensitivity floor", p.floor)):
            rows.append([p.name, label, float(op.threshold), op.metrics.sensitivity,
                         op.metrics.specificity, str(op.cm)])
    md = [[r[0], r[1], f"{r[2]:.4f}", _md_cell(r[3]), _md_cell(r[4]), r[5]] for r in rows]
    return write_table(base, header, rows, formats, md)


def render_folds(pipelines, base: Path, formats=FORMATS):
    header = ["Method", "Fold", "Accuracy", "AUC", "Sensitivity", "Specificity", "F1"]
    rows = [[p.name, f] + [getattr(m, k) for k in RESULT_KEYS]
            for p in pipelines for f, m in enumerate(p.fold_metrics)]
    return write_table(base, header, rows, formats)


def render_augmentation(pipelines, base: Path, formats=FORMATS):
    labels = [p.augmentation for p in pipelines]

    class _Row:
        def __init__(self, p, name):
            self.name, self.metrics, self.operating = name, p.metrics, p.operating

    named = [_Row(p, p.augmentation if labels.count(p.augmentation) == 1
                  else f"{p.name}: {p.augmentation}") for p in pipelines]
    return render_results(named, base, formats, label="Training strategy")


def render_report(report, out_dir, formats=FORMATS) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pipes = report.pipelines
    files = []
    files += render_results(pipes, out / "results", formats)
    files += render_thresholds(pipes, out / "thresholds", formats)
    files += render_folds(pipes, out / "folds", formats)
    if any(p.augmentation != "Real only" for p in pipes):
        files += render_augmentation(pipes, out / "augmentation", formats)
    fig_dir = out / "figures"
    fig_dir.mkdir(exist_ok=True)
    curves = [(p.name, [o for _, _, o in p.test_outputs], [lab for _, lab, _ in p.test_outputs])
              for p in pipes if p.test_outputs]
    roc_figure(curves, fig_dir / "roc_test.png")
    files.append(fig_dir / "roc_test.png")
    return files


# -- external ----------------------------------------------------------------------

def render_external(results, base: Path, formats=FORMATS):
    header = ["Model", "Operating point", "n", "Threshold", "AUC", "Accuracy", "Sensitivity",
              "Specificity", "F1", "TN / FP / FN / TP", "Flags"]
    rows = []
    for r in results:
        for label, op in (("fixed", r.fixed), ("sensitivity floor", r.floor)):
            m = op.metrics
            rows.append([r.model, label, r.n, float(op.threshold), r.auc, m.accuracy,
                         m.sensitivity, m.specificity, m.f1, str(op.cm), "; ".join(r.flags)])
    md = [[_md_cell(v) if i not in (3,) else f"{v:.4f}" for i, v in enumerate(r)] for r in rows]
    return write_table(base, header, rows, formats, md)


# -- reader study ------------------------------------------------------------------

READER_HEADER = ["Radiologist", "Sens", "Spec", "PPV", "NPV", "Accuracy"]
_READER_KEYS = ["sensitivity", "specificity", "ppv", "npv", "accuracy"]


def _pct(v) -> str:
    if v is None:
        return NA
    txt = f"{100 * v:.1f}"
    return (txt[:-2] if txt.endswith(".0") else txt) + "%"


def render_readers(table, base: Path, formats=FORMATS):
    rows = [[rid] + [None if getattr(ms, k) is None else 100 * getattr(ms, k) for k in _READER_KEYS]
            for rid, _, ms in table.readers]
    rows.append(["Mean"] + [None if getattr(table.mean, k) is None else 100 * getattr(table.mean, k)
                            for k in _READER_KEYS])
    md = [[r[0]] + [NA if v is None else _pct(v / 100) for v in r[1:]] for r in rows]
    return write_table(base, READER_HEADER, rows, formats, md)


def render_ai_comparison(comparison, base: Path, ai_label="AI", formats=FORMATS):
    names = {"sensitivity": "Sensitivity", "specificity": "Specificity", "ppv": "PPV",
             "npv": "NPV", "accuracy": "Accuracy"}
    rows = [[names[k], None if a is None else 100 * a, None if r is None else 100 * r]
            for k, a, r in comparison]
    md = [[row[0]] + [NA if v is None else _pct(v / 100) for v in row[1:]] for row in rows]
    return write_table(base, ["Metric", ai_label, "Radiologists"], rows, formats, md)


def render_kappa(result, base: Path, formats=FORMATS):
    header = ["Fleiss kappa", "CI 2.5%", "CI 97.5%", "p", "SE0", "Bootstrap resamples"]
    rows = [[result.kappa, result.ci_lo, result.ci_hi, result.p, result.se0, result.n_bootstrap]]
    md = [[f"{result.kappa:.3f}", f"{result.ci_lo:.3f}", f"{result.ci_hi:.3f}",
           "< 0.001" if result.p < 0.001 else f"{result.p:.3f}", f"{result.se0:.4f}",
           str(result.n_bootstrap)]]
    return write_table(base, header, rows, formats, md)


def render_reader_study(table, kappa, out_dir, ai=None, ai_label="AI",
                        formats=FORMATS) -> list[Path]:
    from .readers import ai_vs_readers

    out = Path(out_dir)
    files = render_readers(table, out / "readers", formats)
    if kappa is not None:
        files += render_kappa(kappa, out / "kappa", formats)
    if ai is not None:
        files += render_ai_comparison(ai_vs_readers(ai, table), out / "ai_vs_readers", ai_label, formats)
    (out / "figures").mkdir(parents=True, exist_ok=True)
    reader_figure(table, out / "figures" / "readers.png", ai)
    files.append(out / "figures" / "readers.png")
    return files
