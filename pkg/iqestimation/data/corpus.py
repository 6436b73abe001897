"""
Dialogue data model and corpus CSV ingestion.

A corpus is a list of dialogues; a dialogue is an ordered list of
system-user exchanges. Exchanges carry the ASR outcome, three event flags,
optional rater labels and generic extra parameters declared through
``x_num_`` / ``x_bool_`` prefixed columns.
"""

import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd
from pandera import check_types
from pandera.typing import DataFrame

from iqestimation.config import IQ_LABELS
from iqestimation.data.df_schema import CorpusRecord
from iqestimation.data.utils import write_frame_csv
from iqestimation.exceptions import (
    CellTypeError,
    ConfidencePresenceMismatch,
    CorpusError,
    DuplicateDialogue,
    EmptyRatings,
    InconsistentExchange,
    IndexGap,
    LabelOutOfRange,
    MalformedRow,
    MissingColumn,
    PartialLabels,
    RatingOutOfRange,
    UndeclaredColumn,
)

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = (
    "dialogue_id",
    "exchange_index",
    "asr_status",
    "asr_confidence",
    "timeout_prompt",
    "asr_rejection",
    "barge_in",
)
NUMERIC_PREFIX = "x_num_"
BOOLEAN_PREFIX = "x_bool_"
RATING_PREFIX = "rating_"


class AsrStatus(str, Enum):
    COMPLETE = "complete"
    INCOMPLETE = "incomplete"
    NONE = "none"


class ExtraKind(str, Enum):
    NUMERIC = "numeric"
    BOOLEAN = "boolean"


@dataclass(frozen=True)
class Exchange:
    index: int
    asr_status: AsrStatus
    asr_confidence: Optional[float] = None
    timeout_prompt: bool = False
    asr_rejection: bool = False
    barge_in: bool = False
    rater_labels: Optional[Tuple[int, ...]] = None
    iq_label: Optional[int] = None
    extras_numeric: Mapping[str, float] = field(default_factory=dict)
    extras_boolean: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        if (self.asr_confidence is not None) != (self.asr_status != AsrStatus.NONE):
            raise ConfidencePresenceMismatch(
                "asr_confidence must be present exactly when asr_status is not 'none'"
            )
        if self.iq_label is not None and self.iq_label not in IQ_LABELS:
            raise LabelOutOfRange(f"iq_label {self.iq_label} outside 1..5")
        if self.asr_status == AsrStatus.COMPLETE and self.asr_rejection:
            raise InconsistentExchange("a rejected recognition cannot be complete")

    @property
    def user_turn_present(self) -> bool:
        return self.asr_status != AsrStatus.NONE or self.barge_in

    @property
    def has_asr_result(self) -> bool:
        return self.asr_status != AsrStatus.NONE


@dataclass(frozen=True)
class Dialogue:
    id: str
    exchanges: Tuple[Exchange, ...]

    def __post_init__(self):
        if not self.exchanges:
            raise CorpusError("dialogue has no exchanges", dialogue=self.id)
        for expected, exchange in enumerate(self.exchanges, start=1):
            if exchange.index != expected:
                raise IndexGap(self.id, expected, exchange.index)
        labeled = [e.iq_label is not None for e in self.exchanges]
        if any(labeled) and not all(labeled):
            raise PartialLabels("labels must be given for all or none of the exchanges", dialogue=self.id)

    def __len__(self) -> int:
        return len(self.exchanges)

    @property
    def is_labeled(self) -> bool:
        return self.exchanges[0].iq_label is not None

    @property
    def labels(self) -> List[int]:
        return [e.iq_label for e in self.exchanges]


@dataclass(frozen=True)
class Corpus:
    dialogues: Tuple[Dialogue, ...] = ()
    schema_extras: Mapping[str, ExtraKind] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        numeric = {n for n, k in self.schema_extras.items() if k == ExtraKind.NUMERIC}
        boolean = {n for n, k in self.schema_extras.items() if k == ExtraKind.BOOLEAN}
        for dialogue in self.dialogues:
            if dialogue.id in seen:
                raise DuplicateDialogue("dialogue id is not unique", dialogue=dialogue.id)
            seen.add(dialogue.id)
            for exchange in dialogue.exchanges:
                if set(exchange.extras_numeric) != numeric or set(exchange.extras_boolean) != boolean:
                    raise CorpusError(
                        "extra parameters do not match the declared schema",
                        dialogue=dialogue.id,
                    )

    def __len__(self) -> int:
        return len(self.dialogues)

    @property
    def exchange_count(self) -> int:
        return sum(len(d) for d in self.dialogues)

    @property
    def max_length(self) -> int:
        return max((len(d) for d in self.dialogues), default=0)

    @property
    def is_labeled(self) -> bool:
        return bool(self.dialogues) and all(d.is_labeled for d in self.dialogues)

    @property
    def ids(self) -> List[str]:
        return [d.id for d in self.dialogues]

    def subset(self, ids) -> "Corpus":
        wanted = set(ids)
        return Corpus(
            dialogues=tuple(d for d in self.dialogues if d.id in wanted),
            schema_extras=self.schema_extras,
        )


@dataclass(frozen=True)
class CorpusSchema:
    """Declared extra columns, keyed by full column name (with prefix)."""

    extras: Mapping[str, ExtraKind] = field(default_factory=dict)

    @classmethod
    def infer(cls, columns: Sequence[str]) -> "CorpusSchema":
        extras = {}
        for column in columns:
            if column.startswith(NUMERIC_PREFIX):
                extras[column] = ExtraKind.NUMERIC
            elif column.startswith(BOOLEAN_PREFIX):
                extras[column] = ExtraKind.BOOLEAN
        return cls(extras=extras)

    def base_names(self) -> Dict[str, ExtraKind]:
        return {_strip_prefix(column): kind for column, kind in self.extras.items()}


def _strip_prefix(column: str) -> str:
    for prefix in (NUMERIC_PREFIX, BOOLEAN_PREFIX):
        if column.startswith(prefix):
            return column[len(prefix):]
    return column


def merge_ratings(labels: Sequence[int]) -> int:
    """Median of the rater labels; the lower median for even-length lists."""
    if len(labels) == 0:
        raise EmptyRatings("at least one rating is required")
    for label in labels:
        if label not in IQ_LABELS:
            raise RatingOutOfRange(f"rating {label} outside 1..5")
    ordered = sorted(labels)
    return ordered[(len(ordered) - 1) // 2]


def first_exchange_label_check(dialogue: Dialogue) -> List[str]:
    if not dialogue.is_labeled:
        return []
    first = dialogue.exchanges[0].iq_label
    if first != 5:
        return [f"dialogue '{dialogue.id}' starts with IQ {first}, expected 5"]
    return []


def check_labeling_guidelines(corpus: Corpus) -> List[str]:
    warnings = []
    for dialogue in corpus.dialogues:
        warnings.extend(first_exchange_label_check(dialogue))
        if not dialogue.is_labeled:
            continue
        labels = dialogue.labels
        for previous, (position, current) in zip(labels, enumerate(labels[1:], start=2)):
            if abs(current - previous) > 1:
                warnings.append(
                    f"dialogue '{dialogue.id}' jumps from IQ {previous} to {current} at exchange {position}"
                )
    for warning in warnings:
        logger.warning(warning)
    return warnings


def rater_agreement(corpus: Corpus) -> Optional[float]:
    """Mean pairwise Cohen's kappa over the rater columns."""
    from iqestimation.metrics import unweighted_kappa

    columns: Dict[int, List[int]] = {}
    rows = [e.rater_labels for d in corpus.dialogues for e in d.exchanges if e.rater_labels]
    if not rows:
        return None
    raters = min(len(r) for r in rows)
    if raters < 2:
        return None
    for r in range(raters):
        columns[r] = [row[r] for row in rows]
    kappas = [unweighted_kappa(columns[a], columns[b]) for a, b in combinations(range(raters), 2)]
    return sum(kappas) / len(kappas)


# Parsing


def _parse_int(value: str, row: int, column: str) -> int:
    try:
        return int(value.strip())
    except ValueError:
        raise CellTypeError(f"expected an integer, got '{value}'", row=row, column=column)


def _parse_flag(value: str, row: int, column: str) -> bool:
    value = value.strip()
    if value not in ("0", "1"):
        raise CellTypeError(f"expected 0 or 1, got '{value}'", row=row, column=column)
    return value == "1"


def _parse_float(value: str, row: int, column: str) -> float:
    try:
        number = float(value.strip())
    except ValueError:
        raise CellTypeError(f"expected a decimal number, got '{value}'", row=row, column=column)
    if not math.isfinite(number):
        raise CellTypeError(f"expected a finite number, got '{value}'", row=row, column=column)
    return number


def _parse_label(value: str, row: int, column: str) -> int:
    label = _parse_int(value, row, column)
    if label not in IQ_LABELS:
        raise LabelOutOfRange(f"label {label} outside 1..5", row=row, column=column)
    return label


def _parse_row(record: Mapping[str, str], row: int, rating_columns, schema: CorpusSchema) -> Exchange:
    index = _parse_int(record["exchange_index"], row, "exchange_index")

    status_text = record["asr_status"].strip()
    try:
        status = AsrStatus(status_text)
    except ValueError:
        raise CellTypeError(
            f"asr_status must be one of complete|incomplete|none, got '{status_text}'",
            row=row,
            column="asr_status",
        )

    confidence_text = record["asr_confidence"].strip()
    if (confidence_text != "") != (status != AsrStatus.NONE):
        raise ConfidencePresenceMismatch(
            "asr_confidence must be empty exactly when asr_status is 'none'",
            row=row,
            column="asr_confidence",
        )
    confidence = None
    if confidence_text:
        confidence = _parse_float(confidence_text, row, "asr_confidence")
        if not 0.0 <= confidence <= 1.0:
            raise CellTypeError(f"asr_confidence {confidence} outside [0, 1]", row=row, column="asr_confidence")

    timeout = _parse_flag(record["timeout_prompt"], row, "timeout_prompt")
    rejection = _parse_flag(record["asr_rejection"], row, "asr_rejection")
    barge_in = _parse_flag(record["barge_in"], row, "barge_in")
    if status == AsrStatus.COMPLETE and rejection:
        raise InconsistentExchange("a rejected recognition cannot be complete", row=row, column="asr_rejection")

    ratings = tuple(
        _parse_label(record[c], row, c) for c in rating_columns if record[c].strip() != ""
    )
    label = None
    label_text = record.get("iq_label", "").strip()
    if label_text:
        label = _parse_label(label_text, row, "iq_label")
    elif ratings:
        label = merge_ratings(ratings)

    numeric, boolean = {}, {}
    for column, kind in schema.extras.items():
        name = _strip_prefix(column)
        if kind == ExtraKind.NUMERIC:
            numeric[name] = _parse_float(record[column], row, column)
        else:
            boolean[name] = _parse_flag(record[column], row, column)

    return Exchange(
        index=index,
        asr_status=status,
        asr_confidence=confidence,
        timeout_prompt=timeout,
        asr_rejection=rejection,
        barge_in=barge_in,
        rater_labels=ratings or None,
        iq_label=label,
        extras_numeric=numeric,
        extras_boolean=boolean,
    )


def _rating_columns(columns: Sequence[str]) -> List[str]:
    ratings = [c for c in columns if c.startswith(RATING_PREFIX) and c[len(RATING_PREFIX):].isdigit()]
    return sorted(ratings, key=lambda c: int(c[len(RATING_PREFIX):]))


def _read_table(path: Path) -> pd.DataFrame:
    # header=None: the header line fixes the field count, so surplus fields are
    # reported instead of being taken as an implicit index
    try:
        raw = pd.read_csv(
            path, header=None, index_col=False, dtype=str, keep_default_na=False, encoding="utf-8"
        )
    except pd.errors.EmptyDataError:
        raise MissingColumn("file has no header row", column=REQUIRED_COLUMNS[0])
    except pd.errors.ParserError as e:
        line = re.search(r"line (\d+)", str(e))
        row = int(line.group(1)) - 1 if line else None
        raise MalformedRow(f"malformed CSV row: {e}", row=row)
    except UnicodeDecodeError as e:
        raise CellTypeError(f"file is not valid UTF-8: {e}")

    short = raw.isna().any(axis=1)
    if short.any():
        row = int(short.to_numpy().argmax())
        raise MalformedRow(f"row has fewer fields than the header ({raw.shape[1]})", row=row)
    df = raw.iloc[1:].reset_index(drop=True)
    df.columns = [str(c).strip() for c in raw.iloc[0]]
    return df


def parse_corpus(path, schema: Optional[CorpusSchema] = None) -> Corpus:
    """Read and validate a corpus CSV. Errors name the first offending row."""
    path = Path(path)
    df = _read_table(path)

    columns = list(df.columns)
    for column in REQUIRED_COLUMNS:
        if column not in columns:
            raise MissingColumn("required column missing", column=column)

    inferred = CorpusSchema.infer(columns)
    if schema is None:
        schema = inferred
    else:
        for column in schema.extras:
            if column not in columns:
                raise MissingColumn("declared extra column missing", column=column)
        for column in inferred.extras:
            if column not in schema.extras:
                raise UndeclaredColumn("extra column is not declared in the schema", column=column)
    rating_columns = _rating_columns(columns)

    grouped: Dict[str, List[Exchange]] = {}
    order: List[str] = []
    previous_id = None
    for row, record in enumerate(df.to_dict(orient="records"), start=1):
        dialogue_id = record["dialogue_id"].strip()
        if dialogue_id == "":
            raise CellTypeError("dialogue_id must not be empty", row=row, column="dialogue_id")
        if dialogue_id != previous_id:
            if dialogue_id in grouped:
                raise DuplicateDialogue("rows of a dialogue must be contiguous", row=row, dialogue=dialogue_id)
            grouped[dialogue_id] = []
            order.append(dialogue_id)
            previous_id = dialogue_id

        exchange = _parse_row(record, row, rating_columns, schema)
        exchanges = grouped[dialogue_id]
        expected = len(exchanges) + 1
        if exchange.index != expected:
            raise IndexGap(dialogue_id, expected, exchange.index, row=row)
        if exchanges and (exchanges[0].iq_label is None) != (exchange.iq_label is None):
            raise PartialLabels("labels must be given for all or none of the exchanges", row=row, dialogue=dialogue_id)
        exchanges.append(exchange)

    corpus = Corpus(
        dialogues=tuple(Dialogue(id=i, exchanges=tuple(grouped[i])) for i in order),
        schema_extras=schema.base_names(),
    )
    logger.info(
        "Parsed %d dialogues with %d exchanges from %s",
        len(corpus),
        corpus.exchange_count,
        path,
    )
    return corpus


@check_types
def corpus_to_frame(corpus: Corpus) -> DataFrame[CorpusRecord]:
    raters = max(
        (len(e.rater_labels) for d in corpus.dialogues for e in d.exchanges if e.rater_labels),
        default=0,
    )
    records = []
    for dialogue in corpus.dialogues:
        for exchange in dialogue.exchanges:
            record = {
                "dialogue_id": dialogue.id,
                "exchange_index": exchange.index,
                "asr_status": exchange.asr_status.value,
                "asr_confidence": exchange.asr_confidence,
                "timeout_prompt": int(exchange.timeout_prompt),
                "asr_rejection": int(exchange.asr_rejection),
                "barge_in": int(exchange.barge_in),
            }
            ratings = exchange.rater_labels or ()
            for r in range(raters):
                record[f"{RATING_PREFIX}{r + 1}"] = ratings[r] if r < len(ratings) else None
            record["iq_label"] = exchange.iq_label
            for name, kind in corpus.schema_extras.items():
                if kind == ExtraKind.NUMERIC:
                    record[NUMERIC_PREFIX + name] = exchange.extras_numeric[name]
                else:
                    record[BOOLEAN_PREFIX + name] = int(exchange.extras_boolean[name])
            records.append(record)

    columns = list(REQUIRED_COLUMNS) + [f"{RATING_PREFIX}{r + 1}" for r in range(raters)] + ["iq_label"]
    columns += [
        (NUMERIC_PREFIX if kind == ExtraKind.NUMERIC else BOOLEAN_PREFIX) + name
        for name, kind in corpus.schema_extras.items()
    ]
    df = pd.DataFrame.from_records(records, columns=columns)
    df = df.astype(
        {
            "dialogue_id": str,
            "exchange_index": "int64",
            "asr_status": str,
            "asr_confidence": "float64",
            "timeout_prompt": "int64",
            "asr_rejection": "int64",
            "barge_in": "int64",
        }
    )
    label_columns = [c for c in columns if c.startswith(RATING_PREFIX) or c == "iq_label"]
    return df.astype({c: "Int64" for c in label_columns})


def serialize_corpus(corpus: Corpus, path) -> Path:
    return write_frame_csv(corpus_to_frame(corpus), path)
