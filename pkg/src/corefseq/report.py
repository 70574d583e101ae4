"""Score report rendering: text table, machine-readable record, figures.

The table mirrors the usual column order (MUC, B3, CEAF_phi4, Avg); the
figure is a grouped precision/recall/F1 bar chart written next to the
delimited output.
"""

from __future__ import annotations

import json
import os
from typing import Optional

from .metrics import ScoreReport

_LABELS = {"muc": "MUC", "b_cubed": "B3", "ceaf_phi4": "CEAF_phi4"}


def render_table(report: ScoreReport) -> str:
    lines = []
    header = f"{'metric':<10} {'P':>8} {'R':>8} {'F1':>8}"
    lines.append(header)
    lines.append("-" * len(header))
    for name in ScoreReport.METRIC_ORDER:
        prf = report.metric(name)
        lines.append(f"{_LABELS[name]:<10} {prf.precision:>8.4f} "
                     f"{prf.recall:>8.4f} {prf.f1:>8.4f}")
    lines.append(f"{'CoNLL avg':<10} {'':>8} {'':>8} {report.conll_avg:>8.4f}")
    md = report.mention_detection
    lines.append(f"{'mentions':<10} {md.precision:>8.4f} {md.recall:>8.4f} "
                 f"{md.f1:>8.4f}")
    lines.append(f"docs={report.num_documents} gold_mentions={report.num_gold_mentions} "
                 f"pred_mentions={report.num_pred_mentions}")
    for flag in report.flags:
        lines.append(f"note: {flag}")
    return "\n".join(lines)


def report_record(report: ScoreReport, **extra) -> str:
    payload = report.to_dict()
    payload.update(extra)
    return json.dumps(payload)


def render_figure(report: ScoreReport, path: str, title: Optional[str] = None) -> str:
    """Write a grouped P/R/F1 bar chart; returns the file path."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    names = list(ScoreReport.METRIC_ORDER)
    prf = np.array([[getattr(report.metric(n), k) for n in names]
                    for k in ("precision", "recall", "f1")])
    x = np.arange(len(names))
    width = 0.25
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for offset, (row, label) in enumerate(zip(prf, ("P", "R", "F1"))):
        ax.bar(x + (offset - 1) * width, row, width, label=label)
    ax.axhline(report.conll_avg, color="gray", linestyle="--", linewidth=1,
               label=f"CoNLL avg {report.conll_avg:.3f}")
    ax.set_xticks(x)
    ax.set_xticklabels([_LABELS[n] for n in names])
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
