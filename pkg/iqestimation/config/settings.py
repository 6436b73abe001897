"""
Core configuration settings for the IQ estimation workbench.

This module loads the package defaults from a single YAML file and exposes
them through pydantic-settings models. Every section can be overridden from
the environment (``IQ_<SECTION>_<KEY>``) or a ``.env`` file.
"""

import logging
import os
import sys
from pathlib import Path
from typing import Any, ClassVar, Dict, List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError
from pydantic_settings import BaseSettings


def load_yaml_config(path: Optional[Path] = None) -> Dict[str, Any]:
    """Load configuration from config.yaml (or ``IQ_CONFIG_PATH``)."""
    if path is None:
        override = os.getenv("IQ_CONFIG_PATH")
        path = Path(override) if override else Path(__file__).parent / "config.yaml"

    if not path.exists():
        raise FileNotFoundError(f"Configuration file not found: {path}")

    with open(path, "r", encoding="utf-8") as f:
        config = yaml.safe_load(f)

    return config or {}


# Load the configuration once at module import time
_yaml_config = load_yaml_config()


def _section(name: str) -> Dict[str, Any]:
    return _yaml_config.get(name, {}) or {}


class LoggingSettings(BaseSettings):
    level: str = _section("logging").get("level", "INFO")
    format: str = _section("logging").get(
        "format", "%(asctime)s %(levelname)s %(name)s: %(message)s"
    )

    model_config = ConfigDict(env_prefix="IQ_LOG_", extra="ignore")


class FeatureSettings(BaseSettings):
    variant: str = _section("features").get("variant", "ext")
    levels: List[str] = _section("features").get(
        "levels", ["exchange", "window", "dialogue"]
    )
    window_size: int = _section("features").get("window_size", 3)
    discard: List[str] = _section("features").get(
        "discard",
        [
            "Activity",
            "HelpRequest",
            "LoopName",
            "Modality",
            "Prompt",
            "SemanticParse",
            "SystemDialogueAct",
            "UserDialogueAct",
            "Utterance",
        ],
    )

    model_config = ConfigDict(env_prefix="IQ_FEATURES_", extra="ignore")


class LearnerSettings(BaseSettings):
    lambda_: float = _section("learner").get("lambda_", 1e-4)
    epochs: int = _section("learner").get("epochs", 50)
    batch_size: int = _section("learner").get("batch_size", 16)
    standardize: bool = _section("learner").get("standardize", True)
    projection: bool = _section("learner").get("projection", True)

    model_config = ConfigDict(env_prefix="IQ_LEARNER_", extra="ignore")


class ExperimentSettings(BaseSettings):
    folds: int = _section("experiments").get("folds", 10)
    seed: int = _section("experiments").get("seed", 42)
    jobs: int = _section("experiments").get("jobs", 1)
    sweep_min: int = _section("experiments").get("sweep_min", 1)
    sweep_max: int = _section("experiments").get("sweep_max", 20)
    baseline_window: int = _section("experiments").get("baseline_window", 3)
    orig_reference: bool = _section("experiments").get("orig_reference", True)
    exact_wilcoxon_max: int = _section("experiments").get("exact_wilcoxon_max", 25)

    model_config = ConfigDict(env_prefix="IQ_EXPERIMENT_", extra="ignore")


class SynthSettings(BaseSettings):
    dialogues: int = _section("synthgen").get("dialogues", 200)
    min_length: int = _section("synthgen").get("min_length", 9)
    max_length: int = _section("synthgen").get("max_length", 25)
    p_no_user_turn: float = _section("synthgen").get("p_no_user_turn", 0.15)
    p_timeout: float = _section("synthgen").get("p_timeout", 0.4)
    p_rejection: float = _section("synthgen").get("p_rejection", 0.1)
    p_incomplete: float = _section("synthgen").get("p_incomplete", 0.15)
    p_barge_in: float = _section("synthgen").get("p_barge_in", 0.1)
    quality_sensitivity: float = _section("synthgen").get("quality_sensitivity", 0.5)
    decay_prob: float = _section("synthgen").get("decay_prob", 0.9)
    recovery_run: int = _section("synthgen").get("recovery_run", 3)
    label_noise: float = _section("synthgen").get("label_noise", 0.0)
    raters: int = _section("synthgen").get("raters", 0)
    rater_noise: float = _section("synthgen").get("rater_noise", 0.2)

    model_config = ConfigDict(env_prefix="IQ_SYNTH_", extra="ignore")


class OutputSettings(BaseSettings):
    out_dir: str = _section("output").get("out_dir", "runs")

    model_config = ConfigDict(env_prefix="IQ_OUTPUT_", extra="ignore")


class AppSettings(BaseSettings):
    # Sub-settings
    logging: LoggingSettings = LoggingSettings()
    features: FeatureSettings = FeatureSettings()
    learner: LearnerSettings = LearnerSettings()
    experiments: ExperimentSettings = ExperimentSettings()
    synthgen: SynthSettings = SynthSettings()
    output: OutputSettings = OutputSettings()

    model_config = ConfigDict(
        env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )


def configure_logging(level: Optional[str] = None) -> None:
    """Route all package logging to a single stderr handler."""
    root = logging.getLogger("iqestimation")
    root.setLevel((level or settings.logging.level).upper())
    if not any(getattr(h, "_iqestimation", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(settings.logging.format))
        handler._iqestimation = True
        root.addHandler(handler)


# Create a global settings instance
settings = AppSettings()

# Convenience exports
IQ_LABELS = (1, 2, 3, 4, 5)
DEFAULT_SEED = settings.experiments.seed
DISCARDED_PARAMETERS = tuple(settings.features.discard)
RECALCULATED_PARAMETERS = (
    "%ASRSuccess",
    "%TimeOutPrompt",
    "%ASRRejection",
    "%TimeOutASRRej",
    "%BargeIn",
    "MeanASRConfidence",
    "{#}ASRSuccess",
    "{#}TimeOutPrompt",
    "{#}ASRRejection",
    "{#}TimeOutASRRej",
    "{#}BargeIn",
    "{Mean}ASRConfidence",
)


class ConfigModel(BaseModel):
    """Immutable pydantic model that reports validation failures as ``error_type``."""

    error_type: ClassVar[type] = ValueError

    model_config = ConfigDict(frozen=True, extra="forbid")

    def __init__(self, **data):
        try:
            super().__init__(**data)
        except ValidationError as e:
            details = "; ".join(
                f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
                for err in e.errors()
            )
            raise self.error_type(details) from e
