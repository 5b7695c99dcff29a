"""Canonical sparse matrices stored as row-major COO triplets.

The canonical entry order (row, then column) makes equality tests and
golden-file exports deterministic. Heavy lifting (products) is delegated
to scipy CSR.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np
import scipy.sparse as sp

Entry = Tuple[int, int, float]


class SparseError(ValueError):
    pass


@dataclass(frozen=True)
class SparseMatrix:
    rows: int
    cols: int
    entries: Tuple[Entry, ...]

    @classmethod
    def from_entries(cls, rows: int, cols: int, entries: Iterable[Entry]) -> "SparseMatrix":
        canon = sorted((int(r), int(c), float(v)) for r, c, v in entries)
        prev = None
        for r, c, v in canon:
            if not (0 <= r < rows and 0 <= c < cols):
                raise SparseError(f"entry ({r},{c}) out of range for {rows}x{cols}")
            if not math.isfinite(v):
                raise SparseError(f"non-finite value at ({r},{c})")
            if prev == (r, c):
                raise SparseError(f"duplicate entry at ({r},{c})")
            prev = (r, c)
        return cls(rows, cols, tuple(canon))

    @property
    def nnz(self) -> int:
        return len(self.entries)

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_entries(
            self.cols, self.rows, ((c, r, v) for r, c, v in self.entries)
        )

    def to_csr(self) -> sp.csr_matrix:
        if not self.entries:
            return sp.csr_matrix((self.rows, self.cols))
        r, c, v = zip(*self.entries)
        return sp.csr_matrix((np.array(v), (np.array(r), np.array(c))), shape=(self.rows, self.cols))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        for r, c, v in self.entries:
            out[r, c] = v
        return out

    def row_sums(self) -> np.ndarray:
        out = np.zeros(self.rows)
        for r, _, v in self.entries:
            out[r] += v
        return out

    def col_sums(self) -> np.ndarray:
        out = np.zeros(self.cols)
        for _, c, v in self.entries:
            out[c] += v
        return out

    def scale_rows(self, factors: np.ndarray) -> "SparseMatrix":
        """Multiply each row by its factor (used for degree normalization)."""
        return SparseMatrix.from_entries(
            self.rows, self.cols, ((r, c, v * factors[r]) for r, c, v in self.entries)
        )

    def to_triplet_text(self) -> str:
        """Export as `row col value` lines in canonical order."""
        lines = [f"{r} {c} {v!r}" for r, c, v in self.entries]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_triplet_text(cls, rows: int, cols: int, text: str) -> "SparseMatrix":
        entries = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            r, c, v = line.split()
            entries.append((int(r), int(c), float(v)))
        return cls.from_entries(rows, cols, entries)
