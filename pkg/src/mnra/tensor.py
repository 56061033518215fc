"""Dense N-way tensors: unfolding, folding, inner products and mode products.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. The canonical
linearization is generalized column-major (first index varies fastest), so
the mode-i unfolding places tensor element ``(j_1, ..., j_N)`` at matrix
position ``(j_i, l)`` with

    l = sum_{k != i} j_k * L_k,    L_k = prod_{j < k, j != i} n_j

in 0-based indices. Modes are 0-based throughout the Python API.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

MAX_ORDER = 8

Shape = Tuple[int, ...]


class ShapeError(ValueError):
    """Raised when tensor or matrix dimensions do not agree."""


def as_tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Validate ``data`` and return it as a float64 tensor.

    If ``shape`` is given, ``data`` is treated as a flat buffer in canonical
    (first-index-fastest) order and reshaped accordingly.
    """
    arr = np.asarray(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(n) for n in shape)
        if arr.size != math.prod(shape):
            raise ShapeError(
                f"buffer of length {arr.size} does not match shape {shape}"
            )
        arr = arr.reshape(shape, order="F")
    if arr.ndim < 1 or arr.ndim > MAX_ORDER:
        raise ShapeError(f"tensor order must be in [1, {MAX_ORDER}], got {arr.ndim}")
    if any(n < 1 for n in arr.shape):
        raise ShapeError(f"all mode lengths must be >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


def _check_mode(mode: int, order: int) -> int:
    if not 0 <= mode < order:
        raise ShapeError(f"mode {mode} out of range for an order-{order} tensor")
    return mode


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding: an ``n_mode x T_mode`` matrix whose columns are
    the mode fibers, ordered with the remaining indices first-fastest."""
    t = np.asarray(t)
    _check_mode(mode, t.ndim)
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1, order="F")


def fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    shape = tuple(int(n) for n in shape)
    _check_mode(mode, len(shape))
    m = np.asarray(m)
    rest = shape[:mode] + shape[mode + 1:]
    expected = (shape[mode], math.prod(rest))
    if m.shape != expected:
        raise ShapeError(
            f"matrix of shape {m.shape} cannot fold along mode {mode} "
            f"into {shape}; expected {expected}"
        )
    return np.moveaxis(m.reshape((shape[mode],) + rest, order="F"), 0, mode)


def unfolding_column(index: Sequence[int], mode: int, shape: Sequence[int]) -> int:
    """Column of the mode-``mode`` unfolding holding the element at ``index``.

    Direct evaluation of the stride formula; used as a brute-force reference
    for :func:`unfold`.
    """
    col = 0
    stride = 1
    for k, (j, n) in enumerate(zip(index, shape)):
        if k == mode:
            continue
        col += j * stride
        stride *= n
    return col


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def inner(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    _check_same_shape(a, b)
    return float(np.vdot(a, b))


def frobenius_norm(t: np.ndarray) -> float:
    return float(np.linalg.norm(np.ravel(t)))


def mode_product(t: np.ndarray, mode: int, u: np.ndarray) -> np.ndarray:
    """i-mode product ``t x_mode u``, defined by ``unfold(out) = u @ unfold(t)``."""
    t = np.asarray(t)
    u = np.asarray(u, dtype=np.float64)
    _check_mode(mode, t.ndim)
    if u.ndim != 2 or u.shape[1] != t.shape[mode]:
        raise ShapeError(
            f"matrix of shape {u.shape} incompatible with mode {mode} "
            f"of length {t.shape[mode]}"
        )
    out = np.tensordot(u, t, axes=(1, mode))
    return np.moveaxis(out, 0, mode)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same_shape(np.asarray(a), np.asarray(b))
    return np.add(a, b)


def subtract(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same_shape(np.asarray(a), np.asarray(b))
    return np.subtract(a, b)


def scale(alpha: float, t: np.ndarray) -> np.ndarray:
    return float(alpha) * np.asarray(t, dtype=np.float64)


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return ``alpha * x + y``."""
    _check_same_shape(np.asarray(x), np.asarray(y))
    return float(alpha) * np.asarray(x) + np.asarray(y)


def n_rank(t: np.ndarray, rtol: float = 1e-9) -> Tuple[int, ...]:
    """Numerical rank of every unfolding, relative to its largest singular value."""
    ranks = []
    for mode in range(np.ndim(t)):
        s = np.linalg.svd(unfold(t, mode), compute_uv=False)
        ranks.append(int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0)
    return tuple(ranks)


def check_ranks(ranks: Sequence[int], shape: Sequence[int]) -> Tuple[int, ...]:
    """Validate an n-rank bound against a tensor shape.

    Each ``r_i`` must satisfy ``0 <= r_i <= min(n_i, T_i)``.
    """
    ranks = tuple(int(r) for r in ranks)
    shape = tuple(shape)
    if len(ranks) != len(shape):
        raise ShapeError(f"n-rank {ranks} has length {len(ranks)}, tensor order is {len(shape)}")
    total = math.prod(shape)
    for i, (r, n) in enumerate(zip(ranks, shape)):
        bound = min(n, total // n)
        if not 0 <= r <= bound:
            raise ValueError(f"rank r_{i}={r} outside [0, {bound}] for shape {shape}")
    return ranks


# -- serialization ----------------------------------------------------------
#
# Text format:
#   shape: n1 n2 ... nN
#   <value>            one per line, canonical order, repr() precision


def format_shape_header(shape: Sequence[int]) -> str:
    return "shape: " + " ".join(str(int(n)) for n in shape)


def parse_shape_header(line: str) -> Shape:
    key, _, rest = line.partition(":")
    if key.strip() != "shape" or not rest.split():
        raise ValueError(f"expected 'shape: n1 ... nN' header, got {line.strip()!r}")
    return tuple(int(tok) for tok in rest.split())


def save_tensor(path: Union[str, Path], t: np.ndarray) -> None:
    t = as_tensor(t)
    lines = [format_shape_header(t.shape)]
    lines.extend(repr(float(v)) for v in t.ravel(order="F"))
    Path(path).write_text("\n".join(lines) + "\n")


def load_tensor(path: Union[str, Path]) -> np.ndarray:
    text = Path(path).read_text().splitlines()
    if not text:
        raise ValueError(f"{path}: empty tensor file")
    shape = parse_shape_header(text[0])
    values = [float(v) for v in text[1:] if v.strip()]
    return as_tensor(values, shape)
