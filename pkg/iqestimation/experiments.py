"""
Evaluation protocols: cross-validation, level ablation and window sweep.

Folds are built over dialogues so that all exchanges of a dialogue share a
fold. Headline metrics are computed on the confusion matrix pooled over
folds; the per-fold UAR list is kept for paired significance tests between
configurations that used the same fold assignment.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from sklearn.model_selection import KFold

from iqestimation.config import ConfigModel, DEFAULT_SEED, settings
from iqestimation.data.corpus import Corpus, Dialogue
from iqestimation.exceptions import (
    ConfigInvalid,
    DegenerateInput,
    FoldMismatch,
    TooFewDialogues,
    UnlabeledCorpus,
)
from iqestimation.features import (
    LEVEL_COMBINATIONS,
    FeatureMatrix,
    FeatureSetConfig,
    Variant,
    extract,
    levels_label,
)
from iqestimation.learner import LearnerHyper, LinearModel, predict_many, train
from iqestimation.metrics import (
    ConfusionMatrix,
    SignificanceResult,
    confusion_matrix,
    relative_improvement,
    spearman_rho,
    uar,
    weighted_kappa,
    wilcoxon_signed_rank,
)

logger = logging.getLogger(__name__)


class ExperimentConfig(ConfigModel):
    error_type = ConfigInvalid

    features: FeatureSetConfig = Field(default_factory=FeatureSetConfig)
    learner: LearnerHyper = Field(default_factory=LearnerHyper)
    folds: int = Field(default=settings.experiments.folds, ge=2)
    seed: int = Field(default=DEFAULT_SEED, ge=0)
    jobs: int = Field(default=settings.experiments.jobs, ge=1)


@dataclass(frozen=True)
class FoldAssignment:
    """Dialogue ids per fold, in corpus order within each fold."""

    folds: Tuple[Tuple[str, ...], ...]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    @property
    def fingerprint(self) -> str:
        payload = json.dumps([list(fold) for fold in self.folds], separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def split_folds(corpus: Corpus, k: int, seed: int = DEFAULT_SEED) -> FoldAssignment:
    if k < 2:
        raise ConfigInvalid("at least two folds are required")
    if k > len(corpus):
        raise TooFewDialogues(f"{k} folds requested for {len(corpus)} dialogues")
    ids = corpus.ids
    splitter = KFold(n_splits=k, shuffle=True, random_state=seed % 2**32)
    folds = tuple(
        tuple(ids[i] for i in sorted(test)) for _, test in splitter.split(np.arange(len(ids)))
    )
    return FoldAssignment(folds=folds, seed=seed)


def fold_seed(seed: int, fold: int) -> int:
    """Training seed of one fold; independent of the feature configuration."""
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


# Reports


class RunResult(BaseModel):
    """One evaluated configuration."""

    model_config = ConfigDict(frozen=True)

    config: str
    variant: str
    levels: str
    n: int
    uar: float
    kappa: Optional[float]
    rho: Optional[float]
    fold_uars: Tuple[float, ...]
    fingerprint: str
    confusion: Tuple[Tuple[int, ...], ...]
    rel_uar_vs_baseline: Optional[float] = None
    p_value: Optional[float] = None
    affected_pct: Optional[float] = None

    @property
    def confusion_matrix(self) -> ConfusionMatrix:
        return ConfusionMatrix(np.array(self.confusion, dtype=np.int64))


class Comparison(BaseModel):
    model_config = ConfigDict(frozen=True)

    a: str
    b: str
    statistic: float
    n: int
    p_value: float
    method: str

    @property
    def result(self) -> SignificanceResult:
        return SignificanceResult(self.statistic, self.n, self.p_value, self.method)


class EvalReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: str
    seed: int
    folds: int
    rows: Tuple[RunResult, ...]
    baseline: Optional[str] = None
    reference: Optional[RunResult] = None
    baseline_run: Optional[RunResult] = None
    comparisons: Tuple[Comparison, ...] = ()
    manifest_id: Optional[str] = None

    def row(self, config: str) -> RunResult:
        extra = tuple(r for r in (self.reference, self.baseline_run) if r is not None)
        for row in self.rows + extra:
            if row.config == config:
                return row
        raise KeyError(config)

    def best(self) -> RunResult:
        # first row wins ties so the smaller window is preferred
        ranked = sorted(enumerate(self.rows), key=lambda item: (-item[1].uar, item[0]))
        return ranked[0][1]


def save_runs(report: EvalReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def load_runs(path) -> EvalReport:
    return EvalReport.model_validate_json(Path(path).read_text(encoding="utf-8"))


def row_label(variant: Variant, levels, n: int) -> str:
    return f"{levels_label(levels)}/{Variant(variant).value}/n={n}"


# Cross-validation


def _require_labels(corpus: Corpus) -> None:
    if not corpus.is_labeled:
        raise UnlabeledCorpus("experiments need a fully labeled corpus")


def train_fold(
    matrix: FeatureMatrix, assignment: FoldAssignment, fold: int, hyper: LearnerHyper, seed: int
) -> LinearModel:
    held_out = matrix.rows_for(assignment.folds[fold])
    return train(
        matrix.rows[~held_out],
        matrix.labels[~held_out],
        hyper,
        seed=fold_seed(seed, fold),
        feature_names=matrix.names,
    )


def _run_fold(args):
    matrix, assignment, fold, hyper, seed = args
    model = train_fold(matrix, assignment, fold, hyper, seed)
    held_out = matrix.rows_for(assignment.folds[fold])
    return matrix.labels[held_out], predict_many(model, matrix.rows[held_out])


def _metric_or_none(fn, *args) -> Optional[float]:
    try:
        return fn(*args)
    except DegenerateInput as e:
        logger.warning("Metric %s undefined: %s", fn.__name__, e)
        return None


def cross_validate(
    corpus: Corpus,
    features: FeatureSetConfig,
    hyper: LearnerHyper,
    k: int = settings.experiments.folds,
    seed: int = DEFAULT_SEED,
    assignment: Optional[FoldAssignment] = None,
    jobs: int = 1,
    matrix: Optional[FeatureMatrix] = None,
) -> RunResult:
    _require_labels(corpus)
    assignment = assignment or split_folds(corpus, k, seed)
    matrix = matrix if matrix is not None else extract(corpus, features, jobs=jobs)

    tasks = [(matrix, assignment, fold, hyper, seed) for fold in range(assignment.k)]
    if jobs > 1 and len(tasks) > 1:
        with Pool(min(jobs, len(tasks))) as pool:
            outcomes = pool.map(_run_fold, tasks)
    else:
        outcomes = [_run_fold(task) for task in tasks]

    pooled = None
    fold_uars: List[float] = []
    references, hypotheses = [], []
    for reference, hypothesis in outcomes:
        cm = confusion_matrix(reference, hypothesis)
        fold_uars.append(uar(cm))
        pooled = cm if pooled is None else pooled + cm
        references.extend(reference.tolist())
        hypotheses.extend(hypothesis.tolist())

    result = RunResult(
        config=row_label(features.variant, features.levels, features.window_size),
        variant=features.variant.value,
        levels=levels_label(features.levels),
        n=features.window_size,
        uar=uar(pooled),
        kappa=_metric_or_none(weighted_kappa, pooled),
        rho=_metric_or_none(spearman_rho, references, hypotheses),
        fold_uars=tuple(fold_uars),
        fingerprint=assignment.fingerprint,
        confusion=tuple(tuple(int(c) for c in row) for row in pooled.counts),
    )
    logger.info("%s: UAR %.4f over %d folds", result.config, result.uar, assignment.k)
    return result


def compare_runs(a: RunResult, b: RunResult) -> SignificanceResult:
    if a.fingerprint != b.fingerprint or len(a.fold_uars) != len(b.fold_uars):
        raise FoldMismatch(f"'{a.config}' and '{b.config}' were not evaluated on the same folds")
    return wilcoxon_signed_rank(a.fold_uars, b.fold_uars)


def _comparison(a: RunResult, b: RunResult) -> Comparison:
    result = compare_runs(a, b)
    return Comparison(
        a=a.config, b=b.config, statistic=result.statistic, n=result.n, p_value=result.p_value, method=result.method
    )


def _with_baseline(row: RunResult, baseline: RunResult) -> RunResult:
    rel = _metric_or_none(relative_improvement, row.uar, baseline.uar)
    return row.model_copy(update={"rel_uar_vs_baseline": rel, "p_value": compare_runs(row, baseline).p_value})


# Protocols


def run_train_eval(corpus: Corpus, config: ExperimentConfig, seed: Optional[int] = None) -> EvalReport:
    seed = config.seed if seed is None else seed
    row = cross_validate(corpus, config.features, config.learner, config.folds, seed, jobs=config.jobs)
    return EvalReport(kind="train-eval", seed=seed, folds=config.folds, rows=(row,))


def run_level_ablation(corpus: Corpus, config: ExperimentConfig, seed: Optional[int] = None) -> EvalReport:
    """The seven level combinations for both feature variants.

    Rows come in combination order, orig before ext. An ext row carries its
    relative UAR change and Wilcoxon p-value against the orig row of the same
    combination; "all" is additionally compared to "no exchange" and
    "no window" within each variant.
    """
    _require_labels(corpus)
    seed = config.seed if seed is None else seed
    assignment = split_folds(corpus, config.folds, seed)

    rows: List[RunResult] = []
    by_key: Dict[Tuple[str, Variant], RunResult] = {}
    for name, levels in LEVEL_COMBINATIONS.items():
        for variant in (Variant.ORIG, Variant.EXT):
            features = config.features.model_copy(update={"variant": variant, "levels": levels})
            row = cross_validate(
                corpus, features, config.learner, config.folds, seed, assignment=assignment, jobs=config.jobs
            )
            if variant == Variant.EXT:
                row = _with_baseline(row, by_key[(name, Variant.ORIG)])
            by_key[(name, variant)] = row
            rows.append(row)

    comparisons = [_comparison(by_key[(name, Variant.EXT)], by_key[(name, Variant.ORIG)]) for name in LEVEL_COMBINATIONS]
    for variant in (Variant.ORIG, Variant.EXT):
        for other in ("no exchange", "no window"):
            comparisons.append(_comparison(by_key[("all", variant)], by_key[(other, variant)]))
    return EvalReport(
        kind="ablation", seed=seed, folds=config.folds, rows=tuple(rows), comparisons=tuple(comparisons)
    )


def affected_percentage(corpus: Corpus, n: int) -> float:
    """Share of dialogues (in %) whose length strictly exceeds the window size."""
    if len(corpus) == 0:
        return 0.0
    return 100.0 * sum(1 for d in corpus.dialogues if len(d) > n) / len(corpus)


def run_window_sweep(
    corpus: Corpus,
    config: ExperimentConfig,
    n_range: Sequence[int],
    seed: Optional[int] = None,
    baseline_window: int = settings.experiments.baseline_window,
    orig_reference: bool = settings.experiments.orig_reference,
) -> EvalReport:
    _require_labels(corpus)
    windows = sorted(set(n_range))
    if not windows:
        raise ConfigInvalid("the window range is empty")
    if windows[0] < 1:
        raise ConfigInvalid("window sizes must be at least 1")
    seed = config.seed if seed is None else seed
    assignment = split_folds(corpus, config.folds, seed)

    def evaluate(n: int, variant: Variant) -> RunResult:
        features = config.features.model_copy(update={"window_size": n, "variant": variant})
        row = cross_validate(
            corpus, features, config.learner, config.folds, seed, assignment=assignment, jobs=config.jobs
        )
        return row.model_copy(update={"affected_pct": affected_percentage(corpus, n)})

    variant = config.features.variant
    results = {n: evaluate(n, variant) for n in windows}
    baseline = results[baseline_window] if baseline_window in results else evaluate(baseline_window, variant)

    rows = tuple(row if row.n == baseline_window else _with_baseline(row, baseline) for row in results.values())
    if baseline_window not in results:
        logger.info("Baseline window %d lies outside the sweep; evaluated separately", baseline_window)

    reference = None
    if orig_reference and variant != Variant.ORIG:
        reference = _with_baseline(evaluate(baseline_window, Variant.ORIG), baseline)
    return EvalReport(
        kind="sweep",
        seed=seed,
        folds=config.folds,
        rows=rows,
        baseline=baseline.config,
        reference=reference,
        baseline_run=None if baseline_window in results else baseline,
    )


# Controls and final models


def permute_labels(corpus: Corpus, seed: int = DEFAULT_SEED) -> Corpus:
    """Shuffle the IQ labels over all exchanges of the corpus."""
    _require_labels(corpus)
    labels = np.array([e.iq_label for d in corpus.dialogues for e in d.exchanges])
    shuffled = iter(np.random.default_rng(seed).permutation(labels).tolist())
    dialogues = tuple(
        Dialogue(
            id=d.id,
            exchanges=tuple(replace(e, iq_label=next(shuffled), rater_labels=None) for e in d.exchanges),
        )
        for d in corpus.dialogues
    )
    return Corpus(dialogues=dialogues, schema_extras=corpus.schema_extras)


def train_final_model(corpus: Corpus, config: ExperimentConfig, seed: Optional[int] = None) -> LinearModel:
    _require_labels(corpus)
    seed = config.seed if seed is None else seed
    matrix = extract(corpus, config.features, jobs=config.jobs)
    return train(matrix.rows, matrix.labels, config.learner, seed=seed, feature_names=matrix.names)

