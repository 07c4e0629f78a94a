"""Observational datasets and their CSV representation (header x1..xd, a, y)."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataFormatError(ValueError):
    """Malformed dataset file; the message carries the offending line."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows ``(x, a, y)``: covariate vector, scalar treatment, scalar outcome."""

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        a = np.asarray(self.a, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if not (x.shape[0] == a.size == y.size):
            raise ValueError("x, a and y must have the same number of rows")
        for arr in (x, a, y):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.a.size

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.a[idx], self.y[idx])

    def is_discrete(self, max_levels: int = 10) -> bool:
        """Treatment looks discrete when it takes at most ``max_levels`` values."""
        return np.unique(self.a).size <= max_levels

    def levels(self) -> np.ndarray:
        return np.unique(self.a)

    def split(self, rng, n_folds: int = 2) -> list[np.ndarray]:
        """Random partition of row indices into ``n_folds`` near-equal folds."""
        perm = np.random.default_rng(rng).permutation(self.n)
        return [np.sort(f) for f in np.array_split(perm, n_folds)]

    def columns(self) -> list[str]:
        return [f"x{k + 1}" for k in range(self.d)] + ["a", "y"]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        for xi, ai, yi in zip(self.x, self.a, self.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(ai)), repr(float(yi))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def read_csv(path) -> Dataset:
    """Read a dataset; the header must be ``x1..xd,a,y`` (d may be 0)."""
    text = Path(path).read_text()
    return parse_csv(text)


def parse_csv(text: str) -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    lines = [(k + 1, r) for k, r in enumerate(rows) if r and not r[0].startswith("#")]
    if not lines:
        raise DataFormatError("empty file: expected a header x1..xd,a,y")
    header_line, header = lines[0]
    header = [h.strip() for h in header]
    d = len(header) - 2
    expected = [f"x{k + 1}" for k in range(d)] + ["a", "y"]
    if d < 0 or header != expected:
        raise DataFormatError(
            f"line {header_line}: header must be {','.join(expected) if d >= 0 else 'x1..xd,a,y'}, "
            f"got {','.join(header)}")
    values = []
    for lineno, r in lines[1:]:
        if len(r) != len(header):
            raise DataFormatError(f"line {lineno}: expected {len(header)} fields, got {len(r)}")
        try:
            vals = [float(v) for v in r]
        except ValueError as exc:
            raise DataFormatError(f"line {lineno}: {exc}") from None
        if not all(np.isfinite(vals)):
            raise DataFormatError(f"line {lineno}: non-finite value")
        values.append(vals)
    if not values:
        raise DataFormatError("no data rows")
    arr = np.asarray(values)
    return Dataset(arr[:, :d].reshape(len(arr), d), arr[:, d], arr[:, d + 1])
