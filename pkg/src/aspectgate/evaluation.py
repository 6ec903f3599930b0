"""Accuracy breakdown by total / single-aspect / multi-aspect / class.

Per-class accuracy is recall against the gold class: the fraction of
instances whose gold label is that class that were predicted correctly.
Empty buckets are reported as absent rather than zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import gc_paused
from .corpus import CLASSES, CLASS_INDEX
from .model import iter_group_probs


@dataclass
class EvalCell:
    correct: int = 0
    count: int = 0

    def add(self, ok):
        self.count += 1
        self.correct += bool(ok)

    @property
    def acc(self):
        if self.count == 0:
            return None
        return self.correct / self.count


@dataclass
class EvalReport:
    domain: str = ""
    variant: str = ""
    seed: int | None = None
    sa: EvalCell = field(default_factory=EvalCell)
    ma: EvalCell = field(default_factory=EvalCell)
    classes: dict = field(default_factory=lambda: {label: EvalCell() for label in CLASSES})

    @property
    def total(self):
        return EvalCell(correct=self.sa.correct + self.ma.correct,
                        count=self.sa.count + self.ma.count)

    def cells(self):
        report = self.total
        return {"total": report, "sa": self.sa, "ma": self.ma,
                "neu": self.classes["neutral"], "neg": self.classes["negative"],
                "pos": self.classes["positive"]}


def evaluate(params, variant, groups, vocabulary, domain="", label="", seed=None):
    """Score argmax predictions for every group against gold labels."""
    report = EvalReport(domain=domain, variant=label or variant, seed=seed)
    with gc_paused():
        for group, probs in iter_group_probs(params, variant, groups, vocabulary):
            gold = group.target.polarity
            ok = int(np.argmax(probs)) == CLASS_INDEX[gold]
            bucket = report.ma if group.sentence.is_multi_aspect() else report.sa
            bucket.add(ok)
            report.classes[gold].add(ok)
    return report


def _fmt(cell):
    if cell.acc is None:
        return "-"
    return f"{100.0 * cell.acc:.1f}"


COLUMNS = ("total", "sa", "ma", "neu", "neg", "pos")
COLUMN_TITLES = ("Total", "SA", "MA", "Neu", "Neg", "Pos")
CSV_HEADER = ("domain,variant,total,sa,ma,neu,neg,pos,"
              "n_total,n_sa,n_ma,n_neu,n_neg,n_pos")


def render_report(reports):
    """One row per report: aligned text table plus a CSV mirror."""
    header = f"{'domain':<12} {'variant':<10}" + "".join(f"{t:>8}" for t in COLUMN_TITLES)
    lines = [header]
    csv_lines = [CSV_HEADER]
    for report in reports:
        cells = report.cells()
        row = f"{report.domain:<12} {report.variant:<10}"
        row += "".join(f"{_fmt(cells[c]):>8}" for c in COLUMNS)
        lines.append(row)
        accs = ",".join("" if cells[c].acc is None else _fmt(cells[c]) for c in COLUMNS)
        counts = ",".join(str(cells[c].count) for c in COLUMNS)
        csv_lines.append(f"{report.domain},{report.variant},{accs},{counts}")
    return "\n".join(lines), "\n".join(csv_lines) + "\n"


def summarize_runs(reports):
    """Mean accuracy per (domain, variant) across seeds, as synthetic rows.

    Means are taken over per-run accuracies; buckets missing in any run are
    reported absent.  Counts carry the per-run count (identical across
    seeds for a fixed test set).
    """
    grouped = {}
    for report in reports:
        grouped.setdefault((report.domain, report.variant), []).append(report)
    summary = []
    for (domain, variant), runs in grouped.items():
        mean = EvalReport(domain=domain, variant=variant)
        for attr in ("sa", "ma"):
            cells = [getattr(r, attr) for r in runs]
            _fill_mean(getattr(mean, attr), cells)
        for label in CLASSES:
            _fill_mean(mean.classes[label], [r.classes[label] for r in runs])
        summary.append(mean)
    return summary


def _fill_mean(target, cells):
    if any(c.count == 0 for c in cells):
        return
    # encode the mean accuracy with the first run's count as denominator
    mean_acc = float(np.mean([c.acc for c in cells]))
    target.count = cells[0].count
    target.correct = mean_acc * cells[0].count


def report_to_dict(report):
    return {
        "domain": report.domain, "variant": report.variant, "seed": report.seed,
        "sa": [report.sa.correct, report.sa.count],
        "ma": [report.ma.correct, report.ma.count],
        "classes": {label: [cell.correct, cell.count]
                    for label, cell in report.classes.items()},
    }


def report_from_dict(payload):
    report = EvalReport(domain=payload["domain"], variant=payload["variant"],
                        seed=payload["seed"])
    report.sa = EvalCell(*payload["sa"])
    report.ma = EvalCell(*payload["ma"])
    report.classes = {label: EvalCell(*cell) for label, cell in payload["classes"].items()}
    return report
