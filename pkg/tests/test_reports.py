import math

import pandas as pd
import pytest

from iqestimation.experiments import Comparison, EvalReport, RunResult
from iqestimation.reports import (
    BASELINE_MARK,
    plot_data_frame,
    render_table,
    report_frame,
    write_report,
)

CONFUSION = tuple(tuple(3 if i == j else 0 for j in range(5)) for i in range(5))


def run(config, variant="ext", levels="all", n=3, uar=0.5, **extra):
    values = dict(
        config=config,
        variant=variant,
        levels=levels,
        n=n,
        uar=uar,
        kappa=0.4,
        rho=0.6,
        fold_uars=(uar, uar, uar),
        fingerprint="f00d",
        confusion=CONFUSION,
    )
    values.update(extra)
    return RunResult(**values)


@pytest.fixture
def sweep_report():
    rows = (
        run("all/ext/n=1", n=1, uar=0.45, rel_uar_vs_baseline=-0.1, p_value=0.2, affected_pct=100.0),
        run("all/ext/n=2", n=2, uar=0.48, rel_uar_vs_baseline=-0.04, p_value=0.04, affected_pct=100.0),
        run("all/ext/n=3", n=3, uar=0.50, affected_pct=96.0),
        run("all/ext/n=4", n=4, uar=0.55, rel_uar_vs_baseline=0.1, p_value=0.002, affected_pct=90.0, kappa=None),
    )
    reference = run("all/orig/n=3", variant="orig", uar=0.44, rel_uar_vs_baseline=-0.12, p_value=0.01)
    return EvalReport(
        kind="sweep", seed=7, folds=3, rows=rows, baseline="all/ext/n=3", reference=reference, manifest_id="abc123"
    )


@pytest.fixture
def ablation_report():
    rows = []
    for levels in ("only exchange", "all"):
        rows.append(run(f"{levels}/orig/n=3", variant="orig", levels=levels, uar=0.4))
        rows.append(run(f"{levels}/ext/n=3", variant="ext", levels=levels, uar=0.46, p_value=0.001))
    comparisons = (Comparison(a="all/ext/n=3", b="all/orig/n=3", statistic=0.0, n=3, p_value=0.25, method="exact"),)
    return EvalReport(kind="ablation", seed=1, folds=3, rows=tuple(rows), comparisons=comparisons)


def test_report_frame(sweep_report):
    df = report_frame(sweep_report)
    assert list(df.columns) == [
        "config",
        "variant",
        "levels",
        "n",
        "uar",
        "kappa",
        "rho",
        "rel_uar_vs_baseline",
        "p_value",
        "affected_pct",
    ]
    assert len(df) == 4
    assert math.isnan(df.loc[3, "kappa"])
    assert math.isnan(df.loc[2, "rel_uar_vs_baseline"])


def test_plot_data_frame(sweep_report):
    df = plot_data_frame(sweep_report)
    assert list(df.columns) == ["n", "uar", "kappa", "rho", "affected_pct"]
    assert df["n"].tolist() == [1, 2, 3, 4]


def test_sweep_table(sweep_report):
    text = render_table(sweep_report)
    assert text.startswith("sweep report: 3-fold cross-validation, seed 7\nmanifest abc123\n")
    assert BASELINE_MARK in text
    assert "+10.00%**" in text
    assert "-4.00%*" in text
    assert "best window n=4: UAR 0.550 (+10.00% vs n=3, +25.00% vs orig)" in text
    assert "orig reference all/orig/n=3" in text
    assert "n/a" in text


def test_sweep_table_with_external_baseline(sweep_report):
    outside = run("all/ext/n=9", n=9, uar=0.4)
    report = sweep_report.model_copy(
        update={"rows": sweep_report.rows[:2], "baseline": outside.config, "baseline_run": outside}
    )
    text = render_table(report)
    assert "baseline all/ext/n=9: UAR 0.400" in text
    assert BASELINE_MARK not in text


def test_ablation_table(ablation_report):
    text = render_table(ablation_report)
    lines = text.splitlines()
    assert lines[0] == "ablation report: 3-fold cross-validation, seed 1"
    assert "0.460**" in text
    assert "all/ext/n=3 vs all/orig/n=3: p=0.2500 (exact)" in text


def test_train_eval_table():
    report = EvalReport(kind="train-eval", seed=3, folds=3, rows=(run("all/ext/n=3"),))
    text = render_table(report)
    assert "all/ext/n=3: UAR 0.500, kappa 0.400, rho 0.600" in text
    assert "fold UAR: 0.500 0.500 0.500" in text


def test_write_report(sweep_report, tmp_path):
    paths = write_report(sweep_report, tmp_path, "sweep", plot=True)
    names = sorted(path.name for path in paths)
    assert names == ["sweep_plot.csv", "sweep_plot.png", "sweep_report.csv", "sweep_runs.json", "sweep_table.txt"]
    assert (tmp_path / "sweep_plot.png").read_bytes().startswith(b"\x89PNG")
    back = pd.read_csv(tmp_path / "sweep_report.csv")
    assert back["config"].tolist()[2] == "all/ext/n=3"


def test_plots_are_reproducible(ablation_report, tmp_path):
    first = write_report(ablation_report, tmp_path / "a", "ablation", plot=True)[-1]
    second = write_report(ablation_report, tmp_path / "b", "ablation", plot=True)[-1]
    assert first.read_bytes() == second.read_bytes()


def test_train_eval_has_no_plot(tmp_path):
    report = EvalReport(kind="train-eval", seed=3, folds=3, rows=(run("all/ext/n=3"),))
    paths = write_report(report, tmp_path, "train_eval", plot=True)
    assert not any(path.suffix == ".png" for path in paths)
