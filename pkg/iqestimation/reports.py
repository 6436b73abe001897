"""
Report files for evaluation runs.

Every report is written as a machine CSV (one row per configuration), an
aligned text table in the layout of the ablation or sweep tables, a
plot-data CSV and the JSON run details that ``compare`` reads back.
"""

import logging
import math
from pathlib import Path
from typing import List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
from pandera import check_types  # noqa: E402
from pandera.typing import DataFrame  # noqa: E402

from iqestimation.data.df_schema import PlotRecord, ReportRecord  # noqa: E402
from iqestimation.data.utils import write_frame_csv  # noqa: E402
from iqestimation.experiments import EvalReport, save_runs  # noqa: E402
from iqestimation.features import LEVEL_COMBINATIONS  # noqa: E402
from iqestimation.metrics import relative_improvement, significance_marker  # noqa: E402

logger = logging.getLogger(__name__)

BASELINE_MARK = "—"
MISSING = "n/a"


def _float(values) -> pd.Series:
    return pd.Series([math.nan if v is None else float(v) for v in values], dtype="float64")


@check_types
def report_frame(report: EvalReport) -> DataFrame[ReportRecord]:
    rows = report.rows
    return pd.DataFrame(
        {
            "config": pd.Series([r.config for r in rows], dtype=object),
            "variant": pd.Series([r.variant for r in rows], dtype=object),
            "levels": pd.Series([r.levels for r in rows], dtype=object),
            "n": pd.Series([r.n for r in rows], dtype="int64"),
            "uar": _float(r.uar for r in rows),
            "kappa": _float(r.kappa for r in rows),
            "rho": _float(r.rho for r in rows),
            "rel_uar_vs_baseline": _float(r.rel_uar_vs_baseline for r in rows),
            "p_value": _float(r.p_value for r in rows),
            "affected_pct": _float(r.affected_pct for r in rows),
        }
    )


@check_types
def plot_data_frame(report: EvalReport) -> DataFrame[PlotRecord]:
    frame = report_frame(report)
    return frame[["n", "uar", "kappa", "rho", "affected_pct"]].reset_index(drop=True)


# Text tables


def _num(value: Optional[float], digits: int = 3) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return MISSING
    return f"{value:.{digits}f}"


def _percent(value: Optional[float]) -> str:
    if value is None:
        return MISSING
    return f"{100.0 * value:+.2f}%"


def _header(report: EvalReport) -> List[str]:
    lines = [f"{report.kind} report: {report.folds}-fold cross-validation, seed {report.seed}"]
    if report.manifest_id:
        lines.append(f"manifest {report.manifest_id}")
    return lines


def _ablation_table(report: EvalReport) -> List[str]:
    by_key = {(r.levels, r.variant): r for r in report.rows}
    records = []
    for name in LEVEL_COMBINATIONS:
        orig, ext = by_key.get((name, "orig")), by_key.get((name, "ext"))
        if orig is None or ext is None:
            continue
        marker = significance_marker(ext.p_value)
        records.append(
            {
                "levels": name,
                "UAR orig": _num(orig.uar),
                "UAR ext": _num(ext.uar) + marker,
                "kappa orig": _num(orig.kappa),
                "kappa ext": _num(ext.kappa),
                "rho orig": _num(orig.rho),
                "rho ext": _num(ext.rho),
            }
        )
    lines = pd.DataFrame(records).to_string(index=False).splitlines()
    if report.comparisons:
        lines.append("")
        lines.append("paired Wilcoxon tests over fold UARs:")
        for c in report.comparisons:
            lines.append(f"  {c.a} vs {c.b}: p={c.p_value:.4f} ({c.method}) {significance_marker(c.p_value)}".rstrip())
    return lines


def _sweep_table(report: EvalReport) -> List[str]:
    records = []
    for r in report.rows:
        improvement = BASELINE_MARK
        if r.config != report.baseline:
            improvement = _percent(r.rel_uar_vs_baseline) + significance_marker(r.p_value)
        records.append(
            {
                "window": r.n,
                "UAR": _num(r.uar),
                "rel. UAR": improvement,
                "kappa": _num(r.kappa),
                "rho": _num(r.rho),
                "affected": _num(r.affected_pct, 2) + "%",
            }
        )
    lines = pd.DataFrame(records).to_string(index=False).splitlines()
    lines.extend(_sweep_summary(report))
    return lines


def _sweep_summary(report: EvalReport) -> List[str]:
    best = report.best()
    baseline = report.row(report.baseline) if report.baseline else None
    lines = [""]
    if baseline is not None and baseline not in report.rows:
        lines.append(f"baseline {baseline.config}: UAR {_num(baseline.uar)}")
    summary = f"best window n={best.n}: UAR {_num(best.uar)}"
    if baseline is not None and best.config != baseline.config:
        summary += f" ({_percent(best.rel_uar_vs_baseline)} vs n={baseline.n}"
        if report.reference is not None and report.reference.uar > 0:
            summary += f", {_percent(relative_improvement(best.uar, report.reference.uar))} vs orig"
        summary += ")"
    lines.append(summary)
    if report.reference is not None:
        ref = report.reference
        lines.append(
            f"orig reference {ref.config}: UAR {_num(ref.uar)}, kappa {_num(ref.kappa)}, rho {_num(ref.rho)}"
        )
    return lines


def _run_table(report: EvalReport) -> List[str]:
    lines = []
    for r in report.rows:
        lines.append(f"{r.config}: UAR {_num(r.uar)}, kappa {_num(r.kappa)}, rho {_num(r.rho)}")
        lines.append("  fold UAR: " + " ".join(_num(u) for u in r.fold_uars))
    return lines


def render_table(report: EvalReport) -> str:
    if report.kind == "ablation":
        body = _ablation_table(report)
    elif report.kind == "sweep":
        body = _sweep_table(report)
    else:
        body = _run_table(report)
    return "\n".join(_header(report) + [""] + body) + "\n"


# Charts


def plot_sweep(report: EvalReport, path) -> Path:
    frame = plot_data_frame(report)
    fig, ax = plt.subplots(figsize=(9, 5))
    share = ax.twinx()
    share.bar(frame["n"], frame["affected_pct"], color="lightgray", alpha=0.6, label="affected dialogues")
    share.set_ylabel("affected dialogues (%)")
    share.set_ylim(0, 100)
    ax.set_zorder(share.get_zorder() + 1)
    ax.patch.set_visible(False)
    for column, marker in (("uar", "o-"), ("kappa", "s-"), ("rho", "^-")):
        ax.plot(frame["n"], frame[column], marker, lw=2, ms=5, label=column)
    if report.baseline:
        ax.axvline(report.row(report.baseline).n, color="k", ls="--", lw=1)
    ax.set_xlabel("window size n")
    ax.set_ylabel("score")
    ax.set_xticks(list(frame["n"]))
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_ablation(report: EvalReport, path) -> Path:
    by_key = {(r.levels, r.variant): r.uar for r in report.rows}
    names = [name for name in LEVEL_COMBINATIONS if (name, "orig") in by_key]
    positions = range(len(names))
    fig, ax = plt.subplots(figsize=(10, 5))
    width = 0.4
    ax.bar([p - width / 2 for p in positions], [by_key[(n, "orig")] for n in names], width, label="orig")
    ax.bar([p + width / 2 for p in positions], [by_key.get((n, "ext"), 0.0) for n in names], width, label="ext")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(names, rotation=20)
    ax.set_ylabel("UAR")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # no software/date metadata so reruns stay byte-identical
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)
    return path


def write_report(report: EvalReport, out_dir, stem: str, plot: bool = False) -> List[Path]:
    out_dir = Path(out_dir)
    paths = [
        write_frame_csv(report_frame(report), out_dir / f"{stem}_report.csv"),
        write_frame_csv(plot_data_frame(report), out_dir / f"{stem}_plot.csv"),
        save_runs(report, out_dir / f"{stem}_runs.json"),
    ]
    table = out_dir / f"{stem}_table.txt"
    table.write_text(render_table(report), encoding="utf-8")
    paths.append(table)
    if plot:
        if report.kind == "sweep":
            paths.append(plot_sweep(report, out_dir / f"{stem}_plot.png"))
        elif report.kind == "ablation":
            paths.append(plot_ablation(report, out_dir / f"{stem}_plot.png"))
    for path in paths:
        logger.info("Wrote %s", path)
    return paths

