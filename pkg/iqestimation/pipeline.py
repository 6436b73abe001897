"""
Stage orchestration behind the command line.

Each pipeline reads its inputs, runs the experiment stage and writes the
report files together with a ``manifest.json`` that records the resolved
configuration, seeds and input digests.
"""

import hashlib
import json
import logging
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from iqestimation import __version__
from iqestimation.config import ConfigModel, settings
from iqestimation.data.corpus import Corpus, check_labeling_guidelines, parse_corpus, serialize_corpus
from iqestimation.data.utils import file_sha256, read_text_file
from iqestimation.exceptions import ConfigInvalid, SpecInvalid
from iqestimation.experiments import (
    EvalReport,
    ExperimentConfig,
    compare_runs,
    load_runs,
    permute_labels,
    run_level_ablation,
    run_train_eval,
    run_window_sweep,
    train_final_model,
)
from iqestimation.features import FeatureMatrix, FeatureSetConfig, extract
from iqestimation.learner import LearnerHyper, save_model
from iqestimation.metrics import SignificanceResult
from iqestimation.reports import write_report
from iqestimation.synthgen import GeneratorSpec, generate

logger = logging.getLogger(__name__)

FEATURE_KEYS = {"variant": "variant", "levels": "levels", "window_size": "window_size", "discard": "discard"}
LEARNER_KEYS = {"lambda": "lambda_", "epochs": "epochs", "batch_size": "batch_size", "standardize": "standardize"}
EXPERIMENT_KEYS = {"folds": "folds", "seed": "seed"}
SWEEP_KEYS = {"n_min", "n_max", "baseline_window"}
RUN_CONFIG_KEYS = set(FEATURE_KEYS) | set(LEARNER_KEYS) | set(EXPERIMENT_KEYS) | SWEEP_KEYS

_ASSIGNMENT = re.compile(r"^(\s*[A-Za-z_][\w-]*)\s*=\s?(.*)$")


# Run configuration files


def parse_run_config(text: str) -> Dict[str, Any]:
    """Read flat ``key = value`` lines; ``key: value`` YAML is accepted as well."""
    lines = [_ASSIGNMENT.sub(r"\1: \2", line) for line in text.splitlines()]
    try:
        values = yaml.safe_load("\n".join(lines))
    except yaml.YAMLError as e:
        raise ConfigInvalid(f"unreadable configuration: {e}") from e
    if values is None:
        return {}
    if not isinstance(values, dict):
        raise ConfigInvalid("a configuration file must consist of key = value lines")
    return {str(key): value for key, value in values.items()}


def load_run_config(path: Optional[Path]) -> Dict[str, Any]:
    if path is None:
        return {}
    return parse_run_config(read_text_file(path))


class RunConfig(ConfigModel):
    error_type = ConfigInvalid

    experiment: ExperimentConfig = Field(default_factory=ExperimentConfig)
    n_min: int = Field(default=settings.experiments.sweep_min, ge=1)
    n_max: int = Field(default=settings.experiments.sweep_max, ge=1)
    baseline_window: int = Field(default=settings.experiments.baseline_window, ge=1)

    @model_validator(mode="after")
    def _check_range(self):
        if self.n_min > self.n_max:
            raise ValueError("n_min must not exceed n_max")
        return self

    def describe(self) -> Dict[str, Any]:
        """Resolved configuration with sets in sorted order."""
        features = self.experiment.features
        return {
            "variant": features.variant.value,
            "levels": sorted(level.value for level in features.levels),
            "window_size": features.window_size,
            "discard": sorted(features.discard),
            "lambda": self.experiment.learner.lambda_,
            "epochs": self.experiment.learner.epochs,
            "batch_size": self.experiment.learner.batch_size,
            "standardize": self.experiment.learner.standardize,
            "projection": self.experiment.learner.projection,
            "folds": self.experiment.folds,
            "seed": self.experiment.seed,
            "n_min": self.n_min,
            "n_max": self.n_max,
            "baseline_window": self.baseline_window,
        }


def resolve_run_config(file_values: Mapping[str, Any], overrides: Mapping[str, Any], jobs: int = 1) -> RunConfig:
    """Merge flag overrides over file values over package settings."""
    unknown = sorted(set(file_values) - RUN_CONFIG_KEYS)
    if unknown:
        raise ConfigInvalid(f"unknown configuration keys: {', '.join(unknown)}")
    merged = dict(file_values)
    merged.update({key: value for key, value in overrides.items() if value is not None})

    def pick(keys: Mapping[str, str]) -> Dict[str, Any]:
        return {field: merged[key] for key, field in keys.items() if key in merged}

    experiment = pick(EXPERIMENT_KEYS)
    experiment["jobs"] = jobs
    return RunConfig(
        experiment=ExperimentConfig(
            features=FeatureSetConfig(**pick(FEATURE_KEYS)),
            learner=LearnerHyper(**pick(LEARNER_KEYS)),
            **experiment,
        ),
        **{key: merged[key] for key in SWEEP_KEYS if key in merged},
    )


def resolve_generator_spec(file_values: Mapping[str, Any], overrides: Mapping[str, Any]) -> GeneratorSpec:
    merged = dict(file_values)
    merged.update({key: value for key, value in overrides.items() if value is not None})
    unknown = sorted(set(merged) - set(GeneratorSpec.model_fields))
    if unknown:
        raise SpecInvalid(f"unknown generator keys: {', '.join(unknown)}")
    return GeneratorSpec(**merged)


# Manifests


class RunManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    tool_version: str
    command: str
    config: Dict[str, Any]
    seeds: Dict[str, int]
    inputs: Dict[str, str]
    outputs: List[str] = []
    started_at: str
    finished_at: str

    @staticmethod
    def digest(command: str, config: Mapping[str, Any], seeds: Mapping[str, int], inputs: Mapping[str, str]) -> str:
        payload = json.dumps(
            {"version": __version__, "command": command, "config": config, "seeds": seeds, "inputs": inputs},
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _inputs(*paths) -> Dict[str, str]:
    return {Path(p).name: file_sha256(p) for p in paths if p is not None}


class _Run:
    """Collects what a pipeline needs to write its manifest."""

    def __init__(self, command: str, config: Mapping[str, Any], seeds: Mapping[str, int], inputs: Dict[str, str]):
        self.command = command
        self.config = dict(config)
        self.seeds = dict(seeds)
        self.inputs = inputs
        self.started_at = _now()
        self.id = RunManifest.digest(command, self.config, self.seeds, inputs)

    def finish(self, out_dir, outputs: List[Path]) -> RunManifest:
        manifest = RunManifest(
            id=self.id,
            tool_version=__version__,
            command=self.command,
            config=self.config,
            seeds=self.seeds,
            inputs=self.inputs,
            outputs=sorted(Path(p).name for p in outputs),
            started_at=self.started_at,
            finished_at=_now(),
        )
        manifest.write(out_dir)
        return manifest


# Pipelines


def validate_pipeline(corpus_path) -> Tuple[Corpus, List[str]]:
    corpus = parse_corpus(corpus_path)
    warnings = check_labeling_guidelines(corpus)
    logger.info("%s: %d dialogues, %d exchanges", corpus_path, len(corpus), corpus.exchange_count)
    return corpus, warnings


def extract_pipeline(corpus_path, run: RunConfig, out_path) -> FeatureMatrix:
    corpus = parse_corpus(corpus_path)
    matrix = extract(corpus, run.experiment.features, jobs=run.experiment.jobs)
    matrix.to_csv(out_path)
    logger.info("Wrote %d x %d features to %s", len(matrix), len(matrix.names), out_path)
    return matrix


def _finish(run: _Run, report: EvalReport, out_dir, stem: str, plot: bool, extra: List[Path] = ()):
    report = report.model_copy(update={"manifest_id": run.id})
    paths = write_report(report, out_dir, stem, plot=plot) + list(extra)
    manifest = run.finish(out_dir, paths)
    return report, manifest


def train_eval_pipeline(
    corpus_path, run: RunConfig, out_dir, plot: bool = False, model_path=None, shuffled: bool = False
) -> Tuple[EvalReport, RunManifest]:
    corpus = parse_corpus(corpus_path)
    seed = run.experiment.seed
    config = run.describe()
    if shuffled:
        corpus = permute_labels(corpus, seed)
        config["shuffled_labels"] = True
    record = _Run("train-eval", config, {"seed": seed}, _inputs(corpus_path))
    report = run_train_eval(corpus, run.experiment)
    extra = []
    if model_path is not None:
        extra.append(save_model(train_final_model(corpus, run.experiment), model_path))
    return _finish(record, report, out_dir, "train-eval", plot, extra)


def ablation_pipeline(corpus_path, run: RunConfig, out_dir, plot: bool = False) -> Tuple[EvalReport, RunManifest]:
    corpus = parse_corpus(corpus_path)
    record = _Run("ablation", run.describe(), {"seed": run.experiment.seed}, _inputs(corpus_path))
    report = run_level_ablation(corpus, run.experiment)
    return _finish(record, report, out_dir, "ablation", plot)


def sweep_pipeline(corpus_path, run: RunConfig, out_dir, plot: bool = False) -> Tuple[EvalReport, RunManifest]:
    corpus = parse_corpus(corpus_path)
    record = _Run("sweep", run.describe(), {"seed": run.experiment.seed}, _inputs(corpus_path))
    report = run_window_sweep(
        corpus,
        run.experiment,
        range(run.n_min, run.n_max + 1),
        baseline_window=run.baseline_window,
    )
    return _finish(record, report, out_dir, "sweep", plot)


def synth_pipeline(spec: GeneratorSpec, out_path, out_dir) -> Tuple[Corpus, RunManifest]:
    record = _Run("synth", spec.model_dump(), {"seed": spec.seed}, {})
    corpus = generate(spec)
    path = serialize_corpus(corpus, out_path)
    return corpus, record.finish(out_dir, [path])


def _pick_row(report: EvalReport, label: Optional[str]):
    if label is not None:
        try:
            return report.row(label)
        except KeyError:
            raise ConfigInvalid(f"no row '{label}' in the {report.kind} report")
    if len(report.rows) == 1:
        return report.rows[0]
    if report.baseline:
        return report.row(report.baseline)
    raise ConfigInvalid(f"the {report.kind} report has {len(report.rows)} rows; choose one by label")


def compare_pipeline(
    runs_a, runs_b, label_a: Optional[str] = None, label_b: Optional[str] = None, out_dir=None
) -> Tuple[SignificanceResult, Optional[RunManifest]]:
    row_a = _pick_row(load_runs(runs_a), label_a)
    row_b = _pick_row(load_runs(runs_b), label_b)
    result = compare_runs(row_a, row_b)
    logger.info("%s vs %s: p=%.6g (%s)", row_a.config, row_b.config, result.p_value, result.method)
    manifest = None
    if out_dir is not None:
        inputs = {"a": file_sha256(runs_a), "b": file_sha256(runs_b)}
        record = _Run("compare", {"a": row_a.config, "b": row_b.config}, {}, inputs)
        table = Path(out_dir) / "compare_table.txt"
        table.parent.mkdir(parents=True, exist_ok=True)
        table.write_text(
            f"manifest {record.id}\n{row_a.config} vs {row_b.config}\n"
            f"W={result.statistic:g} n={result.n} p={result.p_value:.6g} {result.method} {result.marker}".rstrip()
            + "\n",
            encoding="utf-8",
        )
        manifest = record.finish(out_dir, [table])
    return result, manifest
