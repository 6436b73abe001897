import pandas as pd
import pandera as pa
from pandera.typing import Series

from iqestimation.config import IQ_LABELS

ASR_STATUSES = ["complete", "incomplete", "none"]


class CorpusRecord(pa.DataFrameModel):
    """One exchange row of the corpus CSV. Rating and extra columns ride along."""

    dialogue_id: Series[str] = pa.Field(coerce=False)
    exchange_index: Series[int] = pa.Field(ge=1, coerce=False)
    asr_status: Series[str] = pa.Field(isin=ASR_STATUSES, coerce=False)
    asr_confidence: Series[float] = pa.Field(ge=0.0, le=1.0, nullable=True, coerce=False)
    timeout_prompt: Series[int] = pa.Field(isin=[0, 1], coerce=False)
    asr_rejection: Series[int] = pa.Field(isin=[0, 1], coerce=False)
    barge_in: Series[int] = pa.Field(isin=[0, 1], coerce=False)

    class Config:
        strict = False


class FeatureRecord(pa.DataFrameModel):
    """Feature matrix export; feature columns are dynamic and float-valued."""

    dialogue_id: Series[str] = pa.Field(coerce=False)
    exchange_index: Series[int] = pa.Field(ge=1, coerce=False)
    iq_label: Series[pd.Int64Dtype] = pa.Field(isin=list(IQ_LABELS), nullable=True)

    class Config:
        strict = False


class ReportRecord(pa.DataFrameModel):
    config: Series[str] = pa.Field(coerce=False)
    variant: Series[str] = pa.Field(isin=["orig", "ext"], coerce=False)
    levels: Series[str] = pa.Field(coerce=False)
    n: Series[int] = pa.Field(ge=1, coerce=False)
    uar: Series[float] = pa.Field(ge=0.0, le=1.0, coerce=False)
    kappa: Series[float] = pa.Field(le=1.0, nullable=True, coerce=False)
    rho: Series[float] = pa.Field(ge=-1.0, le=1.0, nullable=True, coerce=False)
    rel_uar_vs_baseline: Series[float] = pa.Field(nullable=True, coerce=False)
    p_value: Series[float] = pa.Field(ge=0.0, le=1.0, nullable=True, coerce=False)
    affected_pct: Series[float] = pa.Field(ge=0.0, le=100.0, nullable=True, coerce=False)

    class Config:
        strict = True
        ordered = True


class PlotRecord(pa.DataFrameModel):
    n: Series[int] = pa.Field(ge=1, coerce=False)
    uar: Series[float] = pa.Field(ge=0.0, le=1.0, coerce=False)
    kappa: Series[float] = pa.Field(le=1.0, nullable=True, coerce=False)
    rho: Series[float] = pa.Field(nullable=True, coerce=False)
    affected_pct: Series[float] = pa.Field(ge=0.0, le=100.0, nullable=True, coerce=False)

    class Config:
        strict = True
        ordered = True
