"""
Interaction parameters on the exchange, window and dialogue level.

Names follow ``<prefix><base>:<view>``: the prefix marks the level and the
aggregate (``#`` count, ``%`` percentage, ``Mean`` on the dialogue level;
``{#}``/``{Mean}`` on the window level; none on the exchange level) and the
view decides which exchanges form the denominator. The system view uses
every exchange, the user view only exchanges that contain a user turn.

Feature ordering is level-major (exchange, window, dialogue), then base name
alphabetical, then aggregate, then view (sys before usr).
"""

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from multiprocessing import Pool
from pathlib import Path
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pandera import check_types
from pandera.typing import DataFrame
from pydantic import Field, field_validator

from iqestimation.config import ConfigModel, RECALCULATED_PARAMETERS, settings
from iqestimation.data.corpus import AsrStatus, Corpus, Dialogue, Exchange, ExtraKind
from iqestimation.data.df_schema import FeatureRecord
from iqestimation.data.utils import write_frame_csv
from iqestimation.exceptions import ConfigInvalid, EmptyDialogue, UnknownParam

logger = logging.getLogger(__name__)


class View(str, Enum):
    SYSTEM = "sys"
    USER = "usr"


class Level(str, Enum):
    EXCHANGE = "exchange"
    WINDOW = "window"
    DIALOGUE = "dialogue"


class Variant(str, Enum):
    ORIG = "orig"
    EXT = "ext"


ALL_LEVELS = frozenset(Level)

# Ordered as the rows of the level ablation table.
LEVEL_COMBINATIONS: Dict[str, FrozenSet[Level]] = {
    "only exchange": frozenset({Level.EXCHANGE}),
    "only window": frozenset({Level.WINDOW}),
    "no dialogue": frozenset({Level.EXCHANGE, Level.WINDOW}),
    "only dialogue": frozenset({Level.DIALOGUE}),
    "no window": frozenset({Level.EXCHANGE, Level.DIALOGUE}),
    "no exchange": frozenset({Level.WINDOW, Level.DIALOGUE}),
    "all": ALL_LEVELS,
}

CONFIDENCE = "ASRConfidence"
USER_TURN = "UserTurnPresent"

EVENTS: Dict[str, Callable[[Exchange], bool]] = {
    "ASRSuccess": lambda e: e.asr_status == AsrStatus.COMPLETE,
    "TimeOutPrompt": lambda e: e.timeout_prompt,
    "ASRRejection": lambda e: e.asr_rejection,
    "TimeOutASRRej": lambda e: e.timeout_prompt or e.asr_rejection,
    "BargeIn": lambda e: e.barge_in,
}

COUNT, PERCENT, MEAN, VALUE = "count", "percent", "mean", "value"
DIALOGUE_PREFIXES = {COUNT: "#", PERCENT: "%", MEAN: "Mean"}
WINDOW_PREFIXES = {COUNT: "{#}", MEAN: "{Mean}"}


def parse_levels(value) -> FrozenSet[Level]:
    """Parse a level set from a named combination, a comma list or an iterable."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text in LEVEL_COMBINATIONS:
            return LEVEL_COMBINATIONS[text]
        items = [item.strip() for item in text.split(",") if item.strip()]
    else:
        items = list(value)
    levels = set()
    for item in items:
        try:
            levels.add(Level(item))
        except ValueError:
            raise ConfigInvalid(f"unknown level '{item}'")
    return frozenset(levels)


def levels_label(levels: Iterable[Level]) -> str:
    levels = frozenset(levels)
    for name, combination in LEVEL_COMBINATIONS.items():
        if combination == levels:
            return name
    return "+".join(level.value for level in Level if level in levels)


class FeatureSetConfig(ConfigModel):
    error_type = ConfigInvalid

    variant: Variant = Variant(settings.features.variant)
    levels: FrozenSet[Level] = parse_levels(settings.features.levels)
    window_size: int = Field(default=settings.features.window_size, ge=1)
    discard: FrozenSet[str] = frozenset(settings.features.discard)

    @field_validator("levels", mode="before")
    @classmethod
    def _parse_levels(cls, v):
        levels = parse_levels(v)
        if not levels:
            raise ValueError("at least one level is required")
        return levels

    @field_validator("discard", mode="before")
    @classmethod
    def _parse_discard(cls, v):
        if isinstance(v, str):
            return frozenset(item.strip() for item in v.split(",") if item.strip())
        return v


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    level: Level
    base: str
    aggregate: str
    view: Optional[View]


def _base_kinds(extras: Mapping[str, ExtraKind]) -> Dict[str, str]:
    kinds = {base: "event" for base in EVENTS}
    kinds[CONFIDENCE] = "confidence"
    for name, kind in extras.items():
        if name in kinds or name == USER_TURN:
            raise ConfigInvalid(f"extra parameter '{name}' clashes with a built-in parameter")
        kinds[name] = "boolean" if kind == ExtraKind.BOOLEAN else "numeric"
    return kinds


def _sort_key(base: str):
    return (base.lower(), base)


def _views(prefixed: str, variant: Variant) -> List[View]:
    if prefixed in RECALCULATED_PARAMETERS and variant == Variant.EXT:
        return [View.SYSTEM, View.USER]
    return [View.SYSTEM]


def feature_plan(
    config: FeatureSetConfig, extras: Optional[Mapping[str, ExtraKind]] = None
) -> List[FeatureSpec]:
    kinds = _base_kinds(extras or {})
    plan: List[FeatureSpec] = []
    for level in Level:
        if level not in config.levels:
            continue
        bases = sorted(kinds, key=_sort_key)
        if level == Level.EXCHANGE:
            bases = sorted(list(kinds) + [USER_TURN], key=_sort_key)
        for base in bases:
            if base in config.discard:
                continue
            if level == Level.EXCHANGE:
                plan.append(FeatureSpec(base, level, base, VALUE, None))
                continue
            countable = kinds[base] in ("event", "boolean")
            if level == Level.WINDOW:
                aggregates = [COUNT] if countable else [MEAN]
                prefixes = WINDOW_PREFIXES
            else:
                aggregates = [COUNT, PERCENT] if countable else [MEAN]
                prefixes = DIALOGUE_PREFIXES
            for aggregate in aggregates:
                prefixed = prefixes[aggregate] + base
                for view in _views(prefixed, config.variant):
                    plan.append(FeatureSpec(f"{prefixed}:{view.value}", level, base, aggregate, view))
    return plan


def feature_names(
    config: FeatureSetConfig, extras: Optional[Mapping[str, ExtraKind]] = None
) -> List[str]:
    return [spec.name for spec in feature_plan(config, extras)]


# Aggregation over exchange sequences


def _total(values: Iterable[float]) -> float:
    # Left fold; builtin sum() may compensate and would not match running totals.
    total = 0.0
    for value in values:
        total = total + value
    return total


def _eligible(exchange: Exchange, view: View) -> bool:
    return view == View.SYSTEM or exchange.user_turn_present


def _event(exchange: Exchange, base: str) -> int:
    if base in EVENTS:
        return int(EVENTS[base](exchange))
    return int(exchange.extras_boolean[base])


def _aggregate(aggregate: str, base: str, view: View, exchanges: Sequence[Exchange]) -> float:
    if aggregate == COUNT:
        return float(sum(_event(e, base) for e in exchanges))
    if aggregate == PERCENT:
        if not exchanges:
            return 0.0
        return sum(_event(e, base) for e in exchanges) / len(exchanges)
    if base == CONFIDENCE:
        scored = [e.asr_confidence for e in exchanges if e.has_asr_result]
        denominator = len(scored) if view == View.USER else len(exchanges)
        return _total(scored) / denominator if denominator else 0.0
    if not exchanges:
        return 0.0
    return _total(e.extras_numeric[base] for e in exchanges) / len(exchanges)


def _parse_param(param: str, prefixes: Mapping[str, str]) -> Tuple[str, str]:
    # Longest prefix first so that "Mean" is not shadowed.
    for aggregate, prefix in sorted(prefixes.items(), key=lambda kv: -len(kv[1])):
        if param.startswith(prefix) and len(param) > len(prefix):
            return aggregate, param[len(prefix):]
    raise UnknownParam(f"unknown parameter '{param}'")


def _check_base(param: str, aggregate: str, base: str, sample: Exchange) -> None:
    countable = base in EVENTS or base in sample.extras_boolean
    averaged = base == CONFIDENCE or base in sample.extras_numeric
    if (aggregate in (COUNT, PERCENT) and not countable) or (aggregate == MEAN and not averaged):
        raise UnknownParam(f"unknown parameter '{param}'")


def dialogue_level_value(param: str, view: View, prefix_exchanges: Sequence[Exchange]) -> float:
    """Dialogue-level value of e.g. ``%ASRSuccess`` over exchanges 1..current."""
    if not prefix_exchanges:
        raise EmptyDialogue("the exchange prefix is empty")
    aggregate, base = _parse_param(param, DIALOGUE_PREFIXES)
    _check_base(param, aggregate, base, prefix_exchanges[0])
    eligible = [e for e in prefix_exchanges if _eligible(e, View(view))]
    return _aggregate(aggregate, base, View(view), eligible)


def window_level_value(param: str, view: View, prefix_exchanges: Sequence[Exchange], n: int) -> float:
    """Window-level value of e.g. ``{#}ASRSuccess`` over the last n eligible exchanges."""
    if not prefix_exchanges:
        raise EmptyDialogue("the exchange prefix is empty")
    if n < 1:
        raise ConfigInvalid("window size must be at least 1")
    aggregate, base = _parse_param(param, WINDOW_PREFIXES)
    _check_base(param, aggregate, base, prefix_exchanges[0])
    eligible = [e for e in prefix_exchanges if _eligible(e, View(view))]
    return _aggregate(aggregate, base, View(view), eligible[-n:])


def _exchange_value(exchange: Exchange, base: str) -> float:
    if base == CONFIDENCE:
        return exchange.asr_confidence if exchange.has_asr_result else 0.0
    if base == USER_TURN:
        return float(exchange.user_turn_present)
    if base in exchange.extras_numeric:
        return exchange.extras_numeric[base]
    return float(_event(exchange, base))


# Streaming extraction


class _ViewState:
    """Running dialogue totals and the sliding window for one view."""

    def __init__(self, view: View, window_size: int, counted: Sequence[str], averaged: Sequence[str]):
        self.view = view
        self.window: deque = deque(maxlen=window_size)
        self.eligible = 0
        self.counts = {base: 0 for base in counted}
        self.totals = {base: 0.0 for base in averaged}
        self.scored = 0

    def push(self, exchange: Exchange) -> None:
        if not _eligible(exchange, self.view):
            return
        self.window.append(exchange)
        self.eligible += 1
        for base in self.counts:
            self.counts[base] += _event(exchange, base)
        for base in self.totals:
            if base == CONFIDENCE:
                if exchange.has_asr_result:
                    self.totals[base] = self.totals[base] + exchange.asr_confidence
                    self.scored += 1
            else:
                self.totals[base] = self.totals[base] + exchange.extras_numeric[base]

    def dialogue_value(self, aggregate: str, base: str) -> float:
        if aggregate == COUNT:
            return float(self.counts[base])
        if aggregate == PERCENT:
            return self.counts[base] / self.eligible if self.eligible else 0.0
        if base == CONFIDENCE and self.view == View.USER:
            denominator = self.scored
        else:
            denominator = self.eligible
        return self.totals[base] / denominator if denominator else 0.0

    def window_value(self, aggregate: str, base: str) -> float:
        return _aggregate(aggregate, base, self.view, list(self.window))


def _extract_dialogue(args) -> np.ndarray:
    dialogue, plan, window_size = args
    sample = dialogue.exchanges[0]
    counted = list(EVENTS) + sorted(sample.extras_boolean)
    averaged = [CONFIDENCE] + sorted(sample.extras_numeric)
    states = {view: _ViewState(view, window_size, counted, averaged) for view in View}
    rows = np.zeros((len(dialogue), len(plan)), dtype=np.float64)
    for i, exchange in enumerate(dialogue.exchanges):
        for state in states.values():
            state.push(exchange)
        for j, spec in enumerate(plan):
            if spec.level == Level.EXCHANGE:
                rows[i, j] = _exchange_value(exchange, spec.base)
            elif spec.level == Level.WINDOW:
                rows[i, j] = states[spec.view].window_value(spec.aggregate, spec.base)
            else:
                rows[i, j] = states[spec.view].dialogue_value(spec.aggregate, spec.base)
    return rows


@dataclass(frozen=True)
class FeatureMatrix:
    names: Tuple[str, ...]
    rows: np.ndarray
    labels: Optional[np.ndarray]
    keys: Tuple[Tuple[str, int], ...]

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def dialogue_ids(self) -> np.ndarray:
        return np.array([key[0] for key in self.keys], dtype=object)

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.names.index(name)]

    def value(self, dialogue_id: str, index: int, name: str) -> float:
        return float(self.rows[self.keys.index((dialogue_id, index)), self.names.index(name)])

    def rows_for(self, dialogue_ids) -> np.ndarray:
        wanted = set(dialogue_ids)
        return np.array([key[0] in wanted for key in self.keys], dtype=bool)

    def take(self, mask: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(
            names=self.names,
            rows=self.rows[mask],
            labels=None if self.labels is None else self.labels[mask],
            keys=tuple(key for key, keep in zip(self.keys, mask) if keep),
        )

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        columns = [self.names.index(name) for name in names]
        return FeatureMatrix(
            names=tuple(names), rows=self.rows[:, columns], labels=self.labels, keys=self.keys
        )

    @check_types
    def to_frame(self) -> DataFrame[FeatureRecord]:
        df = pd.DataFrame(self.rows, columns=list(self.names))
        df.insert(0, "dialogue_id", pd.Series([k[0] for k in self.keys], dtype=object))
        df.insert(1, "exchange_index", pd.Series([k[1] for k in self.keys], dtype="int64"))
        labels = [None] * len(self.keys) if self.labels is None else list(self.labels)
        df["iq_label"] = pd.array(labels, dtype="Int64")
        return df

    def to_csv(self, path) -> Path:
        return write_frame_csv(self.to_frame(), path)


def _assemble(corpus: Corpus, names: Sequence[str], blocks: List[np.ndarray]) -> FeatureMatrix:
    rows = np.vstack(blocks) if blocks else np.zeros((0, len(names)), dtype=np.float64)
    rows.setflags(write=False)
    labels = None
    if corpus.is_labeled:
        labels = np.array([e.iq_label for d in corpus.dialogues for e in d.exchanges], dtype=np.int64)
    keys = tuple((d.id, e.index) for d in corpus.dialogues for e in d.exchanges)
    return FeatureMatrix(names=tuple(names), rows=rows, labels=labels, keys=keys)


def extract(corpus: Corpus, config: FeatureSetConfig, jobs: int = 1) -> FeatureMatrix:
    """Streaming extraction: one pass per dialogue with running totals and a window."""
    if not isinstance(config, FeatureSetConfig):
        raise ConfigInvalid("extract expects a FeatureSetConfig")
    plan = feature_plan(config, corpus.schema_extras)
    tasks = [(dialogue, plan, config.window_size) for dialogue in corpus.dialogues]
    if jobs > 1 and len(tasks) > 1:
        with Pool(jobs) as pool:
            blocks = pool.map(_extract_dialogue, tasks)
    else:
        blocks = [_extract_dialogue(task) for task in tasks]
    logger.debug(
        "Extracted %d features for %d exchanges (variant=%s, n=%d)",
        len(plan),
        corpus.exchange_count,
        config.variant.value,
        config.window_size,
    )
    return _assemble(corpus, [spec.name for spec in plan], blocks)


def _recompute_dialogue(dialogue: Dialogue, plan: Sequence[FeatureSpec], window_size: int) -> np.ndarray:
    rows = np.zeros((len(dialogue), len(plan)), dtype=np.float64)
    for i, exchange in enumerate(dialogue.exchanges):
        prefix = dialogue.exchanges[: i + 1]
        for j, spec in enumerate(plan):
            if spec.level == Level.EXCHANGE:
                rows[i, j] = _exchange_value(exchange, spec.base)
            elif spec.level == Level.WINDOW:
                param = WINDOW_PREFIXES[spec.aggregate] + spec.base
                rows[i, j] = window_level_value(param, spec.view, prefix, window_size)
            else:
                param = DIALOGUE_PREFIXES[spec.aggregate] + spec.base
                rows[i, j] = dialogue_level_value(param, spec.view, prefix)
    return rows


def recompute_features(corpus: Corpus, config: FeatureSetConfig) -> FeatureMatrix:
    """Reference extractor recomputing every value from the exchange prefix."""
    plan = feature_plan(config, corpus.schema_extras)
    blocks = [_recompute_dialogue(d, plan, config.window_size) for d in corpus.dialogues]
    return _assemble(corpus, [spec.name for spec in plan], blocks)
