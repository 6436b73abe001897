"""
Linear multi-class SVM used as the static IQ estimator.

One-vs-rest soft-margin SVMs trained with mini-batch Pegasos: per epoch the
training rows are shuffled by a seeded generator and visited in batches, the
step size is 1/(lambda*t). The bias is an extra weight on a constant input
and is regularized together with the weights.
"""

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field

from iqestimation.config import ConfigModel, settings
from iqestimation.exceptions import (
    ConfigInvalid,
    DimensionMismatch,
    ModelFormatError,
    SingleClassData,
)

logger = logging.getLogger(__name__)

MODEL_FORMAT = "iqestimation-linear-model"
MODEL_VERSION = 1


class LearnerHyper(ConfigModel):
    error_type = ConfigInvalid

    lambda_: float = Field(default=settings.learner.lambda_, gt=0)
    epochs: int = Field(default=settings.learner.epochs, ge=1)
    batch_size: int = Field(default=settings.learner.batch_size, ge=1)
    standardize: bool = settings.learner.standardize
    projection: bool = settings.learner.projection


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, rows: np.ndarray) -> "StandardizationStats":
        return cls(mean=rows.mean(axis=0), std=rows.std(axis=0))

    @classmethod
    def identity(cls, width: int) -> "StandardizationStats":
        return cls(mean=np.zeros(width), std=np.ones(width))

    def transform(self, rows: np.ndarray) -> np.ndarray:
        centered = rows - self.mean
        scale = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, centered / scale, 0.0)


@dataclass(frozen=True)
class LinearModel:
    classes: np.ndarray
    weights: np.ndarray
    biases: np.ndarray
    hyper: LearnerHyper
    seed: int
    stats: StandardizationStats
    feature_names: Tuple[str, ...] = ()
    history: Tuple[Tuple[float, ...], ...] = field(default=(), compare=False)

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]


def _check_rows(rows, width: Optional[int] = None) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.ndim != 2:
        raise DimensionMismatch("rows must form a two-dimensional matrix")
    if width is not None and rows.shape[1] != width:
        raise DimensionMismatch(f"expected {width} features, got {rows.shape[1]}")
    return rows


def _objective(w: np.ndarray, x: np.ndarray, y: np.ndarray, lambda_: float) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (x @ w))
    return float(0.5 * lambda_ * np.dot(w, w) + hinge.mean())


def _pegasos(x: np.ndarray, y: np.ndarray, hyper: LearnerHyper, rng: np.random.Generator):
    """Binary problem on rows already augmented with a constant column."""
    n, width = x.shape
    w = np.zeros(width)
    radius = 1.0 / np.sqrt(hyper.lambda_)
    history: List[float] = []
    t = 0
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            batch = order[start : start + hyper.batch_size]
            t += 1
            eta = 1.0 / (hyper.lambda_ * t)
            xb, yb = x[batch], y[batch]
            violators = yb * (xb @ w) < 1.0
            w = (1.0 - eta * hyper.lambda_) * w
            if violators.any():
                w = w + (eta / len(batch)) * (yb[violators] @ xb[violators])
            if hyper.projection:
                norm = np.linalg.norm(w)
                if norm > radius:
                    w = w * (radius / norm)
        history.append(_objective(w, x, y, hyper.lambda_))
    return w, tuple(history)


def train(
    rows,
    labels: Sequence[int],
    hyper: Optional[LearnerHyper] = None,
    seed: int = settings.experiments.seed,
    feature_names: Sequence[str] = (),
) -> LinearModel:
    hyper = hyper or LearnerHyper()
    rows = _check_rows(rows)
    labels = np.asarray(labels, dtype=np.int64)
    if rows.shape[0] == 0:
        raise DimensionMismatch("no training rows")
    if labels.shape != (rows.shape[0],):
        raise DimensionMismatch(f"{rows.shape[0]} rows but {labels.shape[0]} labels")
    if feature_names and len(feature_names) != rows.shape[1]:
        raise DimensionMismatch(f"{len(feature_names)} names for {rows.shape[1]} features")

    stats = StandardizationStats.fit(rows) if hyper.standardize else StandardizationStats.identity(rows.shape[1])
    classes = np.unique(labels)
    width = rows.shape[1]

    if len(classes) == 1:
        message = f"training data carries the single label {classes[0]}; predicting it constantly"
        logger.warning(message)
        warnings.warn(message, SingleClassData)
        return LinearModel(
            classes=classes,
            weights=np.zeros((1, width)),
            biases=np.zeros(1),
            hyper=hyper,
            seed=seed,
            stats=stats,
            feature_names=tuple(feature_names),
        )

    x = np.hstack([stats.transform(rows), np.ones((rows.shape[0], 1))])
    streams = np.random.SeedSequence(seed).spawn(len(classes))
    weights, biases, history = [], [], []
    for c, stream in zip(classes, streams):
        y = np.where(labels == c, 1.0, -1.0)
        w, trace = _pegasos(x, y, hyper, np.random.default_rng(stream))
        weights.append(w[:-1])
        biases.append(w[-1])
        history.append(trace)

    logger.debug("Trained %d one-vs-rest problems on %d rows", len(classes), rows.shape[0])
    return LinearModel(
        classes=classes,
        weights=np.vstack(weights),
        biases=np.array(biases),
        hyper=hyper,
        seed=seed,
        stats=stats,
        feature_names=tuple(feature_names),
        history=tuple(history),
    )


def decision_scores(model: LinearModel, rows) -> np.ndarray:
    rows = _check_rows(rows, model.n_features)
    return model.stats.transform(rows) @ model.weights.T + model.biases


def predict_many(model: LinearModel, rows) -> np.ndarray:
    # argmax keeps the first maximum, i.e. the lower IQ class on ties
    scores = decision_scores(model, rows)
    return model.classes[np.argmax(scores, axis=1)]


def predict(model: LinearModel, row) -> Tuple[int, np.ndarray]:
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise DimensionMismatch("predict expects a single feature vector")
    scores = decision_scores(model, row)[0]
    return int(model.classes[int(np.argmax(scores))]), scores


# Persistence


def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in values)


def save_model(model: LinearModel, path) -> Path:
    path = Path(path)
    lines = [
        f"format\t{MODEL_FORMAT}",
        f"version\t{MODEL_VERSION}",
        f"seed\t{model.seed}",
        f"lambda\t{format(model.hyper.lambda_, '.17g')}",
        f"epochs\t{model.hyper.epochs}",
        f"batch_size\t{model.hyper.batch_size}",
        f"standardize\t{int(model.hyper.standardize)}",
        f"projection\t{int(model.hyper.projection)}",
        "features\t" + "\t".join(model.feature_names),
        f"n_features\t{model.n_features}",
        "classes\t" + " ".join(str(int(c)) for c in model.classes),
        f"mean\t{_fmt(model.stats.mean)}",
        f"std\t{_fmt(model.stats.std)}",
    ]
    for c, bias, w in zip(model.classes, model.biases, model.weights):
        lines.append(f"class {int(c)}\t{_fmt([bias])}\t{_fmt(w)}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _floats(text: str, width: int) -> np.ndarray:
    values = np.array([float(v) for v in text.split()], dtype=np.float64) if text.strip() else np.zeros(0)
    if len(values) != width:
        raise ModelFormatError(f"expected {width} values, got {len(values)}")
    return values


def load_model(path) -> LinearModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header, rows = {}, []
    for line in lines:
        key, _, value = line.partition("\t")
        if key.startswith("class "):
            rows.append((int(key.split()[1]), value))
        else:
            header[key] = value
    if header.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path} is not a {MODEL_FORMAT} file")
    if int(header.get("version", -1)) != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {header.get('version')}")

    width = int(header["n_features"])
    names = tuple(header["features"].split("\t")) if header.get("features") else ()
    hyper = LearnerHyper(
        lambda_=float(header["lambda"]),
        epochs=int(header["epochs"]),
        batch_size=int(header["batch_size"]),
        standardize=header["standardize"] == "1",
        projection=header["projection"] == "1",
    )
    classes = np.array([int(c) for c in header["classes"].split()], dtype=np.int64)
    if [c for c, _ in rows] != list(classes):
        raise ModelFormatError("class rows do not match the class header")
    biases, weights = [], []
    for _, value in rows:
        bias_text, _, weight_text = value.partition("\t")
        biases.append(_floats(bias_text, 1)[0])
        weights.append(_floats(weight_text, width))
    return LinearModel(
        classes=classes,
        weights=np.vstack(weights) if weights else np.zeros((0, width)),
        biases=np.array(biases),
        hyper=hyper,
        seed=int(header["seed"]),
        stats=StandardizationStats(mean=_floats(header["mean"], width), std=_floats(header["std"], width)),
        feature_names=names,
    )
