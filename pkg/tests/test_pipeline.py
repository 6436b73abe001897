import json
from unittest.mock import patch

import pytest

from iqestimation.data.corpus import parse_corpus, serialize_corpus
from iqestimation.exceptions import ConfigInvalid, SpecInvalid
from iqestimation.experiments import EvalReport, load_runs
from iqestimation.features import Level, Variant
from iqestimation.pipeline import (
    RunManifest,
    ablation_pipeline,
    compare_pipeline,
    parse_run_config,
    resolve_generator_spec,
    resolve_run_config,
    sweep_pipeline,
    synth_pipeline,
    train_eval_pipeline,
    validate_pipeline,
)
from iqestimation.synthgen import GeneratorSpec, generate

RUN_TEXT = """
# quick settings
variant = orig
levels = [exchange, dialogue]
window_size = 4
lambda = 0.001
folds: 4
"""


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "synth.csv"
    return serialize_corpus(generate(GeneratorSpec(dialogues=24, min_length=5, max_length=8, seed=31)), path)


@pytest.fixture
def quick_run():
    return resolve_run_config({"epochs": 2, "folds": 3, "n_min": 1, "n_max": 3}, {})


@pytest.fixture
def mock_ablation_components(fig2_corpus, tmp_path):
    with patch("iqestimation.pipeline.parse_corpus") as mock_parse, patch(
        "iqestimation.pipeline.run_level_ablation"
    ) as mock_ablation, patch("iqestimation.pipeline.write_report") as mock_write:

        report = EvalReport(kind="ablation", seed=42, folds=10, rows=())
        mock_parse.return_value = fig2_corpus
        mock_ablation.return_value = report
        mock_write.return_value = [tmp_path / "ablation_report.csv"]

        yield {
            "parse_corpus": mock_parse,
            "run_level_ablation": mock_ablation,
            "write_report": mock_write,
        }


def test_parse_run_config():
    values = parse_run_config(RUN_TEXT)
    assert values == {
        "variant": "orig",
        "levels": ["exchange", "dialogue"],
        "window_size": 4,
        "lambda": 0.001,
        "folds": 4,
    }
    assert parse_run_config("") == {}


@pytest.mark.parametrize("text", ["just some words", "folds = [1, 2", "- a\n- b\n"])
def test_parse_run_config_rejects_other_text(text):
    with pytest.raises(ConfigInvalid):
        parse_run_config(text)


def test_resolve_run_config():
    run = resolve_run_config(parse_run_config(RUN_TEXT), {"window_size": 7, "seed": None}, jobs=2)
    features = run.experiment.features
    assert features.variant == Variant.ORIG
    assert features.levels == frozenset({Level.EXCHANGE, Level.DIALOGUE})
    # flags win over the file
    assert features.window_size == 7
    assert run.experiment.learner.lambda_ == 0.001
    assert run.experiment.folds == 4
    assert run.experiment.seed == 42
    assert run.experiment.jobs == 2


def test_resolve_run_config_errors():
    with pytest.raises(ConfigInvalid, match="windowsize"):
        resolve_run_config({"windowsize": 3}, {})
    with pytest.raises(ConfigInvalid):
        resolve_run_config({"n_min": 5, "n_max": 2}, {})
    with pytest.raises(ConfigInvalid):
        resolve_run_config({"folds": 1}, {})


def test_describe_is_sorted():
    run = resolve_run_config({"levels": "window, exchange", "discard": "Prompt, Activity"}, {})
    described = run.describe()
    assert described["levels"] == ["exchange", "window"]
    assert described["discard"] == ["Activity", "Prompt"]
    json.dumps(described)


def test_resolve_generator_spec():
    spec = resolve_generator_spec({"dialogues": 5, "seed": 3}, {"dialogues": 9, "raters": None})
    assert spec.dialogues == 9
    assert spec.seed == 3
    with pytest.raises(SpecInvalid):
        resolve_generator_spec({"dialogs": 5}, {})


def test_manifest_id_ignores_timestamps():
    a = RunManifest.digest("sweep", {"folds": 3}, {"seed": 1}, {"corpus.csv": "ab"})
    assert a == RunManifest.digest("sweep", {"folds": 3}, {"seed": 1}, {"corpus.csv": "ab"})
    assert a != RunManifest.digest("sweep", {"folds": 4}, {"seed": 1}, {"corpus.csv": "ab"})
    assert a != RunManifest.digest("sweep", {"folds": 3}, {"seed": 2}, {"corpus.csv": "ab"})


def test_ablation_pipeline(mock_ablation_components, fig2_csv, tmp_path):
    """Test that the ablation pipeline runs its steps and records a manifest"""
    run = resolve_run_config({}, {})
    report, manifest = ablation_pipeline(fig2_csv, run, tmp_path)

    mock_ablation_components["parse_corpus"].assert_called_once_with(fig2_csv)
    mock_ablation_components["run_level_ablation"].assert_called_once()
    assert mock_ablation_components["run_level_ablation"].call_args[0][1] == run.experiment

    mock_ablation_components["write_report"].assert_called_once()
    written = mock_ablation_components["write_report"].call_args[0][0]
    assert written.manifest_id == manifest.id
    assert report.manifest_id == manifest.id

    on_disk = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert on_disk["command"] == "ablation"
    assert on_disk["inputs"] == {"fig2.csv": manifest.inputs["fig2.csv"]}
    assert on_disk["outputs"] == ["ablation_report.csv"]
    assert on_disk["seeds"] == {"seed": 42}


def test_validate_pipeline(fig2_csv):
    corpus, warnings = validate_pipeline(fig2_csv)
    assert len(corpus) == 1
    assert warnings == []


def test_sweep_pipeline_is_reproducible(synth_csv, quick_run, tmp_path):
    first, manifest_a = sweep_pipeline(synth_csv, quick_run, tmp_path / "a", plot=True)
    second, manifest_b = sweep_pipeline(synth_csv, quick_run, tmp_path / "b", plot=True)
    assert manifest_a.id == manifest_b.id
    assert first == second
    for name in ("sweep_report.csv", "sweep_plot.csv", "sweep_table.txt", "sweep_runs.json", "sweep_plot.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    assert len(first.rows) == 3
    assert f"manifest {manifest_a.id}" in (tmp_path / "a" / "sweep_table.txt").read_text(encoding="utf-8")
    assert load_runs(tmp_path / "a" / "sweep_runs.json").manifest_id == manifest_a.id


def test_compare_pipeline(synth_csv, quick_run, tmp_path):
    sweep_pipeline(synth_csv, quick_run, tmp_path / "sweep")
    runs = tmp_path / "sweep" / "sweep_runs.json"

    result, manifest = compare_pipeline(runs, runs, out_dir=tmp_path / "compare")
    assert result.p_value == 1.0
    assert set(manifest.inputs) == {"a", "b"}
    assert (tmp_path / "compare" / "compare_table.txt").exists()

    result, manifest = compare_pipeline(runs, runs, "all/ext/n=1", "all/ext/n=3")
    assert manifest is None
    assert 0.0 < result.p_value <= 1.0

    with pytest.raises(ConfigInvalid):
        compare_pipeline(runs, runs, "all/ext/n=9")


def test_train_eval_pipeline(synth_csv, quick_run, tmp_path):
    model_path = tmp_path / "model.txt"
    report, manifest = train_eval_pipeline(synth_csv, quick_run, tmp_path, model_path=model_path, shuffled=True)
    assert report.kind == "train-eval"
    assert manifest.config["shuffled_labels"] is True
    assert model_path.exists()
    assert "model.txt" in manifest.outputs
    assert not (tmp_path / "train-eval_plot.png").exists()


def test_synth_pipeline(tmp_path):
    spec = GeneratorSpec(dialogues=6, seed=2)
    corpus, manifest = synth_pipeline(spec, tmp_path / "synth.csv", tmp_path)
    assert parse_corpus(tmp_path / "synth.csv") == corpus
    assert manifest.seeds == {"seed": 2}
    assert manifest.outputs == ["synth.csv"]
