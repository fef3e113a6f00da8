"""Event logs as JSON lines and metrics as CSV."""
from __future__ import annotations

import csv
import io
import json


def event_line(rec) -> str:
    d = rec.as_dict() if hasattr(rec, "as_dict") else rec
    return json.dumps(d, separators=(",", ":"))


def write_events_jsonl(path, events):
    with open(path, "w", newline="\n") as fh:
        for rec in events:
            fh.write(event_line(rec))
            fh.write("\n")


def read_events_jsonl(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def metrics_rows(metrics: dict) -> list:
    """Per-queue rows: queue, mean_z, mean_workload, mean_weighted_workload, P(z > l) ..."""
    N = len(metrics["mean_z"])
    zdist = metrics["z_distribution"]
    header = ["queue", "mean_z", "mean_workload", "mean_weighted_workload"]
    header += [f"P(z>{l})" for l in range(len(zdist[0]) - 1)]
    header += [f"P(W>{x:g})" for x in metrics["thresholds"]]
    header += [f"P(age>{x:g})" for x in metrics["thresholds"]]
    rows = [header]
    for n in range(N):
        d = zdist[n]
        tails = [sum(d[l + 1:]) for l in range(len(d) - 1)]
        rows.append(
            [n, metrics["mean_z"][n], metrics["mean_workload"][n], metrics["mean_weighted_workload"][n]]
            + tails
            + list(metrics["weighted_workload_tail"][n])
            + list(metrics["weighted_age_tail"][n])
        )
    return rows


def write_csv(path, rows, comments=()):
    """CSV with '#' comment lines first; '.' decimals and '\\n' line endings."""
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(rows, comments))


def csv_text(rows, comments=()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, float) else x for x in r])
    return buf.getvalue()
