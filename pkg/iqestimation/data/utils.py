import hashlib
from pathlib import Path

import pandas as pd


def read_text_file(filepath) -> str:
    with open(filepath, "r", encoding="utf-8") as file:
        content = file.read()
    return content


def file_sha256(filepath) -> str:
    digest = hashlib.sha256()
    with open(filepath, "rb") as file:
        for chunk in iter(lambda: file.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_frame_csv(df: pd.DataFrame, path) -> Path:
    """Write a frame deterministically: '\\n' line endings, '' for missing values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, na_rep="", lineterminator="\n", encoding="utf-8")
    return path
