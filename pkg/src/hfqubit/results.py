"""Tabular results with a bit-stable CSV dialect.

Header names follow ``name_unit`` (``temp_k``, ``t1_s``); metadata rides in
leading ``# key: value`` comment lines. Floats are written with 12
significant digits so outputs are identical across numba/numpy backends.
"""

from __future__ import annotations

import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FLOAT_FORMAT = "{:.12g}"
QUALITY_COLUMN = "quality"


def format_value(value) -> str:
    if isinstance(value, (str, np.str_)):
        return str(value)
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if v == 0.0:
        return "0"
    return FLOAT_FORMAT.format(v)


@dataclass
class ResultTable:
    columns: dict[str, np.ndarray]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        cols = {}
        n = None
        for name, values in self.columns.items():
            arr = np.asarray(values)
            if arr.ndim != 1:
                raise ValueError(f"column {name!r} must be one-dimensional")
            if n is not None and arr.shape[0] != n:
                raise ValueError(f"column {name!r} has {arr.shape[0]} rows, expected {n}")
            n = arr.shape[0]
            cols[name] = arr
        self.columns = cols
        self._check_finite()

    def _check_finite(self):
        if QUALITY_COLUMN in self.columns:
            return
        for name, arr in self.columns.items():
            if arr.dtype.kind in "fc" and not np.all(np.isfinite(arr)):
                raise ValueError(f"column {name!r} has non-finite values and there is no quality column")

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise KeyError(f"no column {name!r}; have {list(self.columns)}") from None

    def __len__(self) -> int:
        return 0 if not self.columns else len(next(iter(self.columns.values())))

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in sorted(self.metadata):
            buf.write(f"# {key}: {self.metadata[key]}\n")
        buf.write(",".join(self.columns) + "\n")
        cols = list(self.columns.values())
        for i in range(len(self)):
            buf.write(",".join(format_value(c[i]) for c in cols) + "\n")
        return buf.getvalue()

    def write_csv(self, path: str | os.PathLike) -> Path:
        return atomic_write_text(path, self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        meta: dict[str, str] = {}
        lines = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            elif line.strip():
                lines.append(line)
        if not lines:
            raise ValueError("CSV has no header row")
        header = [h.strip() for h in lines[0].split(",")]
        raw = [[c.strip() for c in line.split(",")] for line in lines[1:]]
        columns = {}
        for j, name in enumerate(header):
            vals = [row[j] if j < len(row) else "" for row in raw]
            try:
                columns[name] = np.array([float(v) if v != "" else np.nan for v in vals])
            except ValueError:
                columns[name] = np.array(vals, dtype=object)
        table = cls.__new__(cls)
        table.columns = columns
        table.metadata = meta
        return table

    @classmethod
    def read_csv(cls, path: str | os.PathLike) -> "ResultTable":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


def _stage(path: Path, text: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except BaseException:
        os.unlink(tmp)
        raise
    return tmp


def atomic_write_texts(files: dict) -> list[Path]:
    """Write several files so that either all of them land or none is touched.

    Every file is first staged next to its target; targets are replaced only
    once all staging succeeded.
    """
    staged: list[tuple[str, Path]] = []
    try:
        for path, text in files.items():
            path = Path(path)
            staged.append((_stage(path, text), path))
        for tmp, path in staged:
            os.replace(tmp, path)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise
    return [path for _, path in staged]


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    """Write via a temp file in the same directory, then rename over the target."""
    return atomic_write_texts({path: text})[0]
