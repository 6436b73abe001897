"""
Exception types raised by the IQ estimation workbench.

Every error derives from ``IQEstimationError`` and from the builtin that
callers would naturally catch (mostly ``ValueError``).
"""

from typing import Optional


class IQEstimationError(Exception):
    """Base class for all workbench errors."""


# Corpus ingestion


class CorpusError(IQEstimationError, ValueError):
    """A corpus file or object violates the corpus schema."""

    def __init__(
        self,
        message: str,
        row: Optional[int] = None,
        column: Optional[str] = None,
        dialogue: Optional[str] = None,
    ):
        self.row = row
        self.column = column
        self.dialogue = dialogue
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if dialogue is not None:
            location.append(f"dialogue '{dialogue}'")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(prefix + message)


class MissingColumn(CorpusError):
    pass


class UndeclaredColumn(CorpusError):
    pass


class CellTypeError(CorpusError):
    """A cell cannot be read as the type its column requires."""


class MalformedRow(CorpusError):
    """A CSV row does not have as many fields as the header."""


class IndexGap(CorpusError):
    def __init__(self, dialogue: str, expected: int, found: int, row: Optional[int] = None):
        self.expected = expected
        self.found = found
        super().__init__(
            f"expected exchange_index {expected}, found {found}",
            row=row,
            column="exchange_index",
            dialogue=dialogue,
        )


class LabelOutOfRange(CorpusError):
    pass


class ConfidencePresenceMismatch(CorpusError):
    pass


class InconsistentExchange(CorpusError):
    pass


class DuplicateDialogue(CorpusError):
    pass


class PartialLabels(CorpusError):
    pass


class EmptyRatings(IQEstimationError, ValueError):
    pass


class RatingOutOfRange(IQEstimationError, ValueError):
    pass


# Feature extraction


class ConfigInvalid(IQEstimationError, ValueError):
    pass


class UnknownParam(IQEstimationError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown parameter"


class EmptyDialogue(IQEstimationError, ValueError):
    pass


# Learner


class DimensionMismatch(IQEstimationError, ValueError):
    pass


class ModelFormatError(IQEstimationError, ValueError):
    pass


class SingleClassData(UserWarning):
    """Training data carries a single label; the model predicts it constantly."""


# Metrics


class EmptyMatrix(IQEstimationError, ValueError):
    pass


class LengthMismatch(IQEstimationError, ValueError):
    pass


class DegenerateInput(IQEstimationError, ValueError):
    pass


# Experiments


class TooFewDialogues(IQEstimationError, ValueError):
    pass


class FoldMismatch(IQEstimationError, ValueError):
    pass


class UnlabeledCorpus(IQEstimationError, ValueError):
    pass


# Synthetic corpora


class SpecInvalid(IQEstimationError, ValueError):
    pass
