from dataclasses import replace

import pytest

from iqestimation.data.corpus import AsrStatus, Corpus, Dialogue, parse_corpus
from iqestimation.synthgen import GeneratorSpec, generate

# Seven exchanges: no user turn twice, two recognitions, one rejected
# (incomplete) turn, a timeout and a final recognition with barge-in.
FIG2_CSV = """dialogue_id,exchange_index,asr_status,asr_confidence,timeout_prompt,asr_rejection,barge_in,iq_label
fig2,1,none,,0,0,0,5
fig2,2,none,,1,0,0,5
fig2,3,complete,0.9,0,0,0,5
fig2,4,complete,0.8,0,0,0,4
fig2,5,incomplete,0.3,0,1,0,4
fig2,6,none,,1,0,0,3
fig2,7,complete,0.7,0,0,1,3
"""

HEADER = "dialogue_id,exchange_index,asr_status,asr_confidence,timeout_prompt,asr_rejection,barge_in,iq_label\n"


@pytest.fixture
def fig2_csv(tmp_path):
    path = tmp_path / "fig2.csv"
    path.write_text(FIG2_CSV, encoding="utf-8")
    return path


@pytest.fixture
def fig2_corpus(fig2_csv):
    return parse_corpus(fig2_csv)


@pytest.fixture
def write_csv(tmp_path):
    """Write CSV text to a file in the test directory and return its path."""

    def _write(text, name="corpus.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture(scope="session")
def small_corpus():
    return generate(GeneratorSpec(dialogues=40, min_length=9, max_length=14, seed=11))


@pytest.fixture(scope="session")
def separable_corpus():
    """Labels are 5 for a complete recognition and 1 otherwise."""
    corpus = generate(GeneratorSpec(dialogues=60, min_length=9, max_length=14, seed=5))
    dialogues = tuple(
        Dialogue(
            id=d.id,
            exchanges=tuple(
                replace(e, iq_label=5 if e.asr_status == AsrStatus.COMPLETE else 1) for e in d.exchanges
            ),
        )
        for d in corpus.dialogues
    )
    return Corpus(dialogues=dialogues)
