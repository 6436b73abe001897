"""
Seeded synthetic IQ corpora with a latent quality process.

Each dialogue carries a latent quality q in 1..5 that starts at 5. Failure
events (timeout prompts, ASR rejections) lower q by one with probability
``decay_prob``; ``recovery_run`` successful recognitions in a row raise it by
one. Event probabilities grow as q drops, so the interaction parameters carry
a learnable signal. The exchange label is q, optionally disturbed by +/-1
noise and clamped so that consecutive labels never differ by more than one.
With raters, each rating is that label disturbed the same way and clamped to
the same band; the stored label is then the merged rating.

Dialogue d draws from the d-th child of ``SeedSequence(seed).spawn(dialogues)``.
"""

import logging
from typing import List

import numpy as np
from pydantic import Field, model_validator

from iqestimation.config import ConfigModel, IQ_LABELS, settings
from iqestimation.data.corpus import AsrStatus, Corpus, Dialogue, Exchange, merge_ratings
from iqestimation.exceptions import SpecInvalid

logger = logging.getLogger(__name__)


class GeneratorSpec(ConfigModel):
    error_type = SpecInvalid

    dialogues: int = Field(default=settings.synthgen.dialogues, ge=0)
    min_length: int = Field(default=settings.synthgen.min_length, ge=1)
    max_length: int = Field(default=settings.synthgen.max_length, ge=1)
    p_no_user_turn: float = Field(default=settings.synthgen.p_no_user_turn, ge=0.0, le=1.0)
    p_timeout: float = Field(default=settings.synthgen.p_timeout, ge=0.0, le=1.0)
    p_rejection: float = Field(default=settings.synthgen.p_rejection, ge=0.0, le=1.0)
    p_incomplete: float = Field(default=settings.synthgen.p_incomplete, ge=0.0, le=1.0)
    p_barge_in: float = Field(default=settings.synthgen.p_barge_in, ge=0.0, le=1.0)
    quality_sensitivity: float = Field(default=settings.synthgen.quality_sensitivity, ge=0.0)
    decay_prob: float = Field(default=settings.synthgen.decay_prob, ge=0.0, le=1.0)
    recovery_run: int = Field(default=settings.synthgen.recovery_run, ge=1)
    label_noise: float = Field(default=settings.synthgen.label_noise, ge=0.0, le=1.0)
    raters: int = Field(default=settings.synthgen.raters, ge=0)
    rater_noise: float = Field(default=settings.synthgen.rater_noise, ge=0.0, le=1.0)
    seed: int = settings.experiments.seed

    @model_validator(mode="after")
    def _check_lengths(self):
        if self.min_length > self.max_length:
            raise ValueError("min_length must not exceed max_length")
        return self


def _conditioned(p: float, q: int, sensitivity: float) -> float:
    return min(1.0, p * (1.0 + sensitivity * (5 - q)))


def _clamp(value: int, low: int, high: int) -> int:
    return max(low, min(high, value))


def _confidence(rng: np.random.Generator, status: AsrStatus) -> float:
    if status == AsrStatus.COMPLETE:
        return float(rng.beta(8.0, 2.0))
    return float(rng.beta(2.0, 5.0))


def _generate_dialogue(spec: GeneratorSpec, dialogue_id: str, rng: np.random.Generator) -> Dialogue:
    length = int(rng.integers(spec.min_length, spec.max_length + 1))
    q = 5
    successes = 0
    previous_label = None
    exchanges: List[Exchange] = []
    for index in range(1, length + 1):
        status, confidence = AsrStatus.NONE, None
        timeout = rejection = barge_in = False

        # the opening system prompt never carries a user turn
        if index > 1:
            if rng.random() < spec.p_no_user_turn:
                timeout = bool(rng.random() < _conditioned(spec.p_timeout, q, spec.quality_sensitivity))
            else:
                rejection = bool(rng.random() < _conditioned(spec.p_rejection, q, spec.quality_sensitivity))
                incomplete = rng.random() < _conditioned(spec.p_incomplete, q, spec.quality_sensitivity)
                status = AsrStatus.INCOMPLETE if rejection or incomplete else AsrStatus.COMPLETE
                confidence = _confidence(rng, status)
                barge_in = bool(rng.random() < spec.p_barge_in)

        if timeout or rejection:
            successes = 0
            if rng.random() < spec.decay_prob:
                q = max(1, q - 1)
        elif status == AsrStatus.COMPLETE:
            successes += 1
            if successes >= spec.recovery_run:
                q = min(5, q + 1)
                successes = 0

        if index == 1:
            low = high = 5
        else:
            low, high = previous_label - 1, previous_label + 1
        label = 5 if index == 1 else q
        if index > 1 and spec.label_noise > 0 and rng.random() < spec.label_noise:
            label = _clamp(q + int(rng.choice([-1, 1])), 1, 5)
        label = _clamp(label, low, high)

        ratings = None
        if spec.raters:
            ratings = tuple(
                _clamp(_clamp(label + int(rng.choice([-1, 1])), 1, 5), low, high)
                if rng.random() < spec.rater_noise
                else label
                for _ in range(spec.raters)
            )
            # clamping is monotone, so the merged label stays inside [low, high]
            label = merge_ratings(ratings)
        previous_label = label

        exchanges.append(
            Exchange(
                index=index,
                asr_status=status,
                asr_confidence=confidence,
                timeout_prompt=timeout,
                asr_rejection=rejection,
                barge_in=barge_in,
                rater_labels=ratings,
                iq_label=label,
            )
        )
    return Dialogue(id=dialogue_id, exchanges=tuple(exchanges))


def generate(spec: GeneratorSpec) -> Corpus:
    if not isinstance(spec, GeneratorSpec):
        raise SpecInvalid("generate expects a GeneratorSpec")
    streams = np.random.SeedSequence(spec.seed).spawn(spec.dialogues)
    width = len(str(max(spec.dialogues, 1)))
    dialogues = tuple(
        _generate_dialogue(spec, f"synth-{d + 1:0{width}d}", np.random.default_rng(stream))
        for d, stream in enumerate(streams)
    )
    corpus = Corpus(dialogues=dialogues)
    labels = [e.iq_label for d in dialogues for e in d.exchanges]
    logger.info(
        "Generated %d dialogues with %d exchanges (label counts %s)",
        len(dialogues),
        len(labels),
        {label: labels.count(label) for label in IQ_LABELS},
    )
    return corpus
