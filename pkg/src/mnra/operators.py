"""Linear measurement maps ``A: tensor -> R^p`` and their adjoints."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

from .tensor import ShapeError, format_shape_header, parse_shape_header


class SamplingOperator:
    """Entrywise sampling on an observed index set Omega.

    Omega is stored as strictly increasing canonical (first-index-fastest)
    linear indices; entry ``k`` of a measurement vector corresponds to the
    ``k``-th smallest observed index.
    """

    def __init__(self, shape: Sequence[int], omega: Sequence[int]):
        self.shape: Tuple[int, ...] = tuple(int(n) for n in shape)
        self.size = math.prod(self.shape)
        idx = np.asarray(omega, dtype=np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= self.size):
            raise ValueError(f"observed index out of bounds for shape {self.shape}")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("observed indices must be strictly increasing (sorted, no duplicates)")
        self.omega = idx
        self.omega.setflags(write=False)
        self._subs = np.unravel_index(idx, self.shape, order="F")

    @classmethod
    def from_multi_indices(cls, shape: Sequence[int], indices) -> "SamplingOperator":
        """Build from 0-based multi-indices (rows of an ``|Omega| x N`` array), any order."""
        shape = tuple(int(n) for n in shape)
        indices = np.asarray(indices, dtype=np.int64).reshape(-1, len(shape))
        for k, n in enumerate(shape):
            if np.any((indices[:, k] < 0) | (indices[:, k] >= n)):
                raise ValueError(f"multi-index out of bounds in mode {k}")
        lin = np.ravel_multi_index(tuple(indices.T), shape, order="F")
        lin = np.sort(lin)
        if np.any(np.diff(lin) == 0):
            raise ValueError("duplicate multi-indices in Omega")
        return cls(shape, lin)

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "SamplingOperator":
        mask = np.asarray(mask, dtype=bool)
        return cls(mask.shape, np.flatnonzero(mask.ravel(order="F")))

    def __len__(self) -> int:
        return int(self.omega.size)

    def __repr__(self) -> str:
        return f"SamplingOperator(shape={self.shape}, |omega|={len(self)})"

    @property
    def multi_indices(self) -> np.ndarray:
        """0-based multi-indices of Omega, one row per observation."""
        return np.stack(self._subs, axis=1) if len(self) else np.zeros((0, len(self.shape)), dtype=np.int64)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[self._subs] = True
        return m

    def complement(self) -> "SamplingOperator":
        keep = np.ones(self.size, dtype=bool)
        keep[self.omega] = False
        return SamplingOperator(self.shape, np.flatnonzero(keep))

    def apply(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t)
        if t.shape != self.shape:
            raise ShapeError(f"tensor shape {t.shape} does not match operator shape {self.shape}")
        return t[self._subs].astype(np.float64, copy=False)

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        if v.size != len(self):
            raise ShapeError(f"measurement vector has length {v.size}, expected {len(self)}")
        out = np.zeros(self.shape)
        out[self._subs] = v
        return out

    def operator_norm_bound(self) -> float:
        """Exact operator norm: 1 for nonempty Omega (``A A* = I``), else 0."""
        return 1.0 if len(self) else 0.0

    # -- Omega text format ----------------------------------------------
    #   shape: n1 ... nN
    #   j1 j2 ... jN      one 1-based multi-index per line, canonical order

    def save(self, path: Union[str, Path]) -> None:
        lines = [format_shape_header(self.shape)]
        for row in self.multi_indices + 1:
            lines.append(" ".join(str(int(j)) for j in row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SamplingOperator":
        text = Path(path).read_text().splitlines()
        if not text:
            raise ValueError(f"{path}: empty Omega file")
        shape = parse_shape_header(text[0])
        rows = [[int(tok) for tok in line.split()] for line in text[1:] if line.strip()]
        for row in rows:
            if len(row) != len(shape):
                raise ValueError(f"{path}: multi-index {row} does not match order {len(shape)}")
        idx = np.asarray(rows, dtype=np.int64).reshape(-1, len(shape)) - 1
        op = cls.from_multi_indices(shape, idx)
        if not np.array_equal(op.multi_indices, idx):
            raise ValueError(f"{path}: multi-indices are not in canonical sorted order")
        return op


class DenseSensingOperator:
    """General linear map given by a ``p x prod(shape)`` matrix acting on the
    canonical vectorization of the tensor."""

    def __init__(self, shape: Sequence[int], matrix: np.ndarray):
        self.shape = tuple(int(n) for n in shape)
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != math.prod(self.shape):
            raise ShapeError(
                f"sensing matrix of shape {self.matrix.shape} incompatible with tensor shape {self.shape}"
            )

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def apply(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t)
        if t.shape != self.shape:
            raise ShapeError(f"tensor shape {t.shape} does not match operator shape {self.shape}")
        return self.matrix @ t.ravel(order="F")

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        if v.size != len(self):
            raise ShapeError(f"measurement vector has length {v.size}, expected {len(self)}")
        return (self.matrix.T @ v).reshape(self.shape, order="F")

    def operator_norm_bound(self) -> float:
        """Spectral norm of the sensing matrix."""
        if self.matrix.size == 0:
            return 0.0
        return float(np.linalg.norm(self.matrix, 2))
