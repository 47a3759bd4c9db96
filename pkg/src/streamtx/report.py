"""Report serialization (JSON + CSV) and the figures rendered alongside.

Reports follow a fixed schema so downstream tooling can diff them; every
file carries the configuration hash.  JSON and CSV writers are fully
deterministic (two runs over the same inputs produce identical bytes).
Figures are companions to the delimited output, never a replacement.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import SCHEMA_FIELDS, LatencyReport

SWEEP_FIELDS = ("lambda",) + SCHEMA_FIELDS + ("status",)

#: Context recorded in every report; the desk-scale measurement caveats.
REPORT_NOTES = (
    "latencies use greedy-decode emission timestamps; "
    "end of speech is synthetic ground truth, not forced alignment"
)


def write_report(
    report: LatencyReport,
    out_dir: Union[str, Path],
    config_hash: str,
) -> tuple[Path, Path]:
    """Write report.json and report.csv; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.schema_dict()
    payload["frame_ms"] = report.frame_ms
    payload["config_hash"] = config_hash
    payload["notes"] = REPORT_NOTES
    json_path = out_dir / "report.json"
    json_path.write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    csv_path = out_dir / "report.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(SCHEMA_FIELDS)
        writer.writerow([_csv_cell(payload[name]) for name in SCHEMA_FIELDS])
    return json_path, csv_path


def write_sweep(rows: Sequence[dict], out_dir: Union[str, Path], config_hash: str) -> Path:
    """Write sweep.csv: one row per lambda, sorted by lambda."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "sweep.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(SWEEP_FIELDS)
        for row in sorted(rows, key=lambda r: r["lambda"]):
            writer.writerow([_csv_cell(row.get(name)) for name in SWEEP_FIELDS])
    return path


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_latency_figure(
    pr_values_ms: Sequence[float],
    ep_values_ms: Sequence[float],
    out_path: Union[str, Path],
    frame_ms: float,
) -> Optional[Path]:
    """Histogram of per-utterance latencies; skipped when nothing is defined."""
    if not pr_values_ms and not ep_values_ms:
        return None
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    bins = _latency_bins(list(pr_values_ms) + list(ep_values_ms), frame_ms)
    if pr_values_ms:
        ax.hist(pr_values_ms, bins=bins, alpha=0.6, label="partial recognition")
    if ep_values_ms:
        ax.hist(ep_values_ms, bins=bins, alpha=0.6, label="endpointer")
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("latency vs. end of speech (ms)")
    ax.set_ylabel("utterances")
    ax.legend()
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def _latency_bins(values: Sequence[float], frame_ms: float) -> Sequence[float]:
    lo = min(values) - frame_ms / 2
    hi = max(values) + frame_ms / 2
    n = max(1, int(round((hi - lo) / frame_ms)))
    return [lo + i * (hi - lo) / n for i in range(n + 1)]


def render_sweep_figure(rows: Sequence[dict], out_path: Union[str, Path]) -> Optional[Path]:
    """Latency/error trade-off across the regularization grid."""
    ok = [r for r in sorted(rows, key=lambda r: r["lambda"]) if r.get("status") == "ok"]
    if not ok:
        return None
    lams = [r["lambda"] for r in ok]
    xs = range(len(lams))
    fig, (ax_lat, ax_err) = plt.subplots(1, 2, figsize=(9.6, 4.0))

    for field, marker, label in (("pr50_ms", "o", "PR p50"), ("pr90_ms", "s", "PR p90")):
        ys = [r.get(field) for r in ok]
        if all(y is not None for y in ys):
            ax_lat.plot(xs, ys, marker=marker, label=label)
    ax_lat.axhline(0.0, color="black", linewidth=0.8)
    ax_lat.set_xticks(list(xs), [_format_lambda(l) for l in lams])
    ax_lat.set_xlabel("regularization weight")
    ax_lat.set_ylabel("latency (ms)")
    ax_lat.legend()

    ax_err.plot(xs, [100.0 * r["wer"] for r in ok], marker="o", color="tab:red")
    ax_err.set_xticks(list(xs), [_format_lambda(l) for l in lams])
    ax_err.set_xlabel("regularization weight")
    ax_err.set_ylabel("token error rate (%)")

    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def _format_lambda(lam: float) -> str:
    return f"{lam:g}"
