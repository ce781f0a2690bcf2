"""Fold CSVs, summary JSON and plot-ready tables, written atomically."""
import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import species

FOLD_COLUMNS = ("fold", "strategy", "threshold", "class", "tp", "fp", "fn", "tn", "accuracy", "precision", "recall", "f1")


def _num(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)
    return str(v)


class OutputSet:
    """Files written during one run; ``discard`` removes them after a failure."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.written = []

    def write_text(self, name, text):
        self.directory.mkdir(parents=True, exist_ok=True)
        final = self.directory / name
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, final)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(final)
        return final

    def write_csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) for v in r])
        return self.write_text(name, buf.getvalue())

    def write_json(self, name, obj):
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")

    def discard(self):
        for p in self.written:
            if p.exists():
                p.unlink()
        self.written = []


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _metric_row(fold, strategy, threshold, cls, m):
    return [fold, strategy, threshold, cls, m.tp, m.fp, m.fn, m.tn, m.accuracy, m.precision, m.recall, m.f1]


def cv_fold_rows(report):
    """One row per fold for binary runs; per-class rows plus a macro row for multiclass."""
    rows = []
    for fr in report.folds:
        if report.strategy == "binary":
            rows.append(_metric_row(fr.fold, "binary", None, species.TARGET, fr.metrics))
        else:
            for cls, m in fr.per_class.items():
                rows.append(_metric_row(fr.fold, report.strategy, None, cls, m))
            rows.append(_metric_row(fr.fold, report.strategy, None, "macro", fr.metrics))
    return rows


def ensemble_fold_rows(report):
    rows = []
    for fo in report.folds:
        for th in report.thresholds:
            rows.append(_metric_row(fo.fold, "ensemble", th, species.TARGET, fo.by_threshold[th]))
        for neg in report.negatives:
            rows.append(_metric_row(fo.fold, f"base:{neg}", None, species.TARGET, fo.base[neg]))
    return rows


def confusion_rows(cm):
    return [[cls, *cm.counts[i].tolist()] for i, cls in enumerate(cm.classes)]


def cv_summary(report):
    return {
        "strategy": report.strategy,
        "metrics": report.summary,
        "classes_present": list(report.classes_present),
        "confusion_matrix": {"classes": list(report.confusion.classes), "counts": report.confusion.counts.tolist()},
        "per_class": _per_class_summary(report) if report.strategy == "multiclass" else None,
    }


def _per_class_summary(report):
    from .evaluation import summarize

    return {cls: summarize([fr.per_class[cls] for fr in report.folds]) for cls in report.classes_present}


def ensemble_summary(report):
    return {
        "strategy": "ensemble",
        "negatives": list(report.negatives),
        "thresholds": {repr(th): report.summary[th] for th in report.thresholds},
        "base_models": report.base_summary,
        "base_mean": report.base_mean,
    }


def write_cv_report(out, report, provenance):
    out.write_csv("folds.csv", FOLD_COLUMNS, cv_fold_rows(report))
    out.write_csv("confusion.csv", ("true\\predicted", *report.confusion.classes), confusion_rows(report.confusion))
    out.write_json("summary.json", {**cv_summary(report), "run": provenance})


def write_ensemble_report(out, report, provenance):
    out.write_csv("folds.csv", FOLD_COLUMNS, ensemble_fold_rows(report))
    rows = []
    for th in report.thresholds:
        s = report.summary[th]
        rows.append(["ensemble", th, *[v for m in ("accuracy", "precision", "recall", "f1") for v in (s[m]["mean"], s[m]["std"])]])
    s = report.base_mean
    rows.append(["base_mean", None, *[v for m in ("accuracy", "precision", "recall", "f1") for v in (s[m]["mean"], s[m]["std"])]])
    out.write_csv("thresholds.csv", summary_columns("model", "threshold"), rows)
    out.write_json("summary.json", {**ensemble_summary(report), "run": provenance})


def summary_columns(*lead):
    return (*lead, "accuracy_mean", "accuracy_std", "precision_mean", "precision_std", "recall_mean", "recall_std", "f1_mean", "f1_std")


SWEEP_COLUMNS = summary_columns("config_id", "n_bands", "n_frames", "hop_length", "window_size")


def sweep_row(cfg, summary):
    return [
        cfg.config_id,
        cfg.n_bands,
        cfg.n_frames,
        cfg.hop_length,
        cfg.window_size,
        *[v for m in ("accuracy", "precision", "recall", "f1") for v in (summary[m]["mean"], summary[m]["std"])],
    ]
