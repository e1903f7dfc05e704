"""CSV products: sweep results, per-epoch losses, latency rows.

Floats are written with ``repr`` so a re-emit of the same values is byte-identical
and parsing returns the exact doubles.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from hblab_app.core.errors import FormatError
from hblab_app.services.artifact_io import write_text_artifact

EVAL_HEADER = ("method", "snr_db", "mean_rate_bps_hz", "std_rate", "trials", "mean_time_s")
LOSS_HEADER = ("epoch", "train_loss", "val_loss", "val_accuracy")
TIMING_HEADER = ("method", "trials", "mean_s", "median_s", "min_s", "max_s")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _render(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def eval_rows(result) -> list[tuple]:
    """Method list order, then ascending snr."""
    rows = []
    for method in result.methods:
        mean_time = result.mean_time(method)
        for snr in sorted(result.snr_db):
            cell = result.cells[(method, snr)]
            rows.append((method, float(snr), cell.mean_rate, cell.std_rate, cell.trials, mean_time))
    return rows


def render_eval_csv(result) -> str:
    return _render(EVAL_HEADER, eval_rows(result))


def emit_csv(result, path: str) -> str:
    return write_text_artifact(path, render_eval_csv(result))


def read_eval_csv(path: str) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != EVAL_HEADER:
            raise FormatError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            {
                "method": r["method"],
                "snr_db": float(r["snr_db"]),
                "mean_rate_bps_hz": float(r["mean_rate_bps_hz"]),
                "std_rate": float(r["std_rate"]),
                "trials": int(r["trials"]),
                "mean_time_s": float(r["mean_time_s"]),
            }
            for r in reader
        ]


def emit_loss_csv(history, path: str) -> str:
    rows = [(r.epoch, r.train_loss, r.val_loss, r.val_accuracy) for r in history]
    return write_text_artifact(path, _render(LOSS_HEADER, rows))


def emit_timing_csv(rows, path: str) -> str:
    return write_text_artifact(
        path, _render(TIMING_HEADER, [(r.method, r.trials, r.mean_s, r.median_s, r.min_s, r.max_s) for r in rows])
    )


def summary_table(result, ranking) -> str:
    """Fixed-width table, methods best first, one column per snr."""
    snrs = sorted(result.snr_db)
    name_w = max(len("method"), *(len(m) for m in result.methods))
    head = "method".ljust(name_w) + "".join(f"{s:>9.1f}" for s in snrs) + "      avg"
    lines = [head, "-" * len(head)]
    for method, avg in ranking:
        cells = "".join(f"{result.cells[(method, s)].mean_rate:9.3f}" for s in snrs)
        lines.append(method.ljust(name_w) + cells + f"{avg:9.3f}")
    return "\n".join(lines) + "\n"
