"""Iterative hard thresholding for minimum n-rank approximation.

Each iteration takes a gradient step on ``||A(X) - b||^2`` and replaces the
result by a convex combination of its per-mode rank-``r_i`` truncations::

    Y = X - tau * A*(A(X) - b)
    X <- sum_i w_i * fold(R_{r_i}(unfold(Y, i)), i)

:func:`solve_fixed_rank` runs this with a known n-rank bound (IHTr);
:func:`solve_heuristic_rank` predicts the n-rank on the fly (IHT).
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .linalg import SketchConfig, approx_hard_threshold, hard_threshold_rank
from .tensor import check_ranks, fold, frobenius_norm, unfold

logger = logging.getLogger(__name__)

SAFE_TAU = (0.5, 1.5)
DIVERGENCE_LIMIT = 1e6
SKETCH_MARGIN = 5


class DivergenceError(FloatingPointError):
    """The iteration blew up, typically because the step size is too large."""


@dataclass
class SolverConfig:
    """Parameters shared by both solvers.

    ``weights=None`` means uniform ``1/N``. ``svd`` is ``"exact"`` or
    ``"sketch"``; the sketch uses ``ceil(min(n_i, T_i) / 2)`` uniformly drawn
    columns per mode unless ``sketch_columns`` overrides it. ``xi`` is only
    read by the heuristic solver.
    """

    tau: float = 1.4
    weights: Optional[Sequence[float]] = None
    tol: float = 1e-8
    max_iter: int = 5000
    svd: str = "exact"
    sketch_columns: Optional[int] = None
    sketch_seed: int = 0
    xi: float = 1e-2

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not SAFE_TAU[0] < self.tau < SAFE_TAU[1]:
            logger.info("tau=%g lies outside the convergence-safe band (1/2, 3/2)", self.tau)
        if self.svd not in ("exact", "sketch"):
            raise ValueError(f"svd must be 'exact' or 'sketch', got {self.svd!r}")
        if not 0 < self.xi < 1:
            raise ValueError(f"xi must lie in (0, 1), got {self.xi}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if np.any(w < 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"weights must lie in [0, 1] and sum to 1, got {self.weights}")

    def mode_weights(self, order: int) -> np.ndarray:
        if self.weights is None:
            return np.full(order, 1.0 / order)
        w = np.asarray(self.weights, dtype=np.float64)
        if w.size != order:
            raise ValueError(f"{w.size} weights given for an order-{order} tensor")
        return w


@dataclass
class SolverTrace:
    """Per-iteration diagnostics; row ``k`` describes the step producing X^{k+1}."""

    rel_change: List[float] = field(default_factory=list)
    residual: List[float] = field(default_factory=list)
    grad_norm: List[float] = field(default_factory=list)
    ranks: List[Tuple[int, ...]] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rel_change)

    def append(self, rel_change, residual, grad_norm, ranks, seconds):
        self.rel_change.append(float(rel_change))
        self.residual.append(float(residual))
        self.grad_norm.append(float(grad_norm))
        self.ranks.append(tuple(int(r) for r in ranks))
        self.seconds.append(float(seconds))

    def to_csv(self, path: Union[str, Path], status: str = "") -> None:
        """Write ``iter, rel_change, residual, grad_norm, r_1..r_N, seconds, flag``.

        ``flag`` is empty except on the final row, where it carries ``status``.
        """
        order = len(self.ranks[0]) if self.ranks else 0
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["iter", "rel_change", "residual", "grad_norm"]
                + [f"r_{i + 1}" for i in range(order)]
                + ["seconds", "flag"]
            )
            n = len(self)
            for k in range(n):
                writer.writerow(
                    [k + 1, repr(self.rel_change[k]), repr(self.residual[k]), repr(self.grad_norm[k])]
                    + list(self.ranks[k])
                    + [f"{self.seconds[k]:.6f}", status if k == n - 1 else ""]
                )


@dataclass
class SolverResult:
    solution: np.ndarray
    iterations: int
    converged: bool
    final_rank: Tuple[int, ...]
    trace: SolverTrace

    @property
    def status(self) -> str:
        return "converged" if self.converged else "max_iter"


def stopping_check(x_prev: np.ndarray, x_next: np.ndarray, tol: float) -> bool:
    """``||x_next - x_prev|| / max(1, ||x_prev||) < tol`` (strict)."""
    return relative_change(x_prev, x_next) < tol


def relative_change(x_prev: np.ndarray, x_next: np.ndarray) -> float:
    if np.shape(x_prev) != np.shape(x_next):
        raise ValueError(f"shape mismatch: {np.shape(x_prev)} vs {np.shape(x_next)}")
    return frobenius_norm(np.subtract(x_next, x_prev)) / max(1.0, frobenius_norm(x_prev))


class _Thresholder:
    """Per-mode rank truncation under the configured SVD strategy."""

    def __init__(self, shape: Tuple[int, ...], cfg: SolverConfig):
        self.shape = shape
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.sketch_seed) if cfg.svd == "sketch" else None

    def __call__(self, y: np.ndarray, mode: int, r: int, census: bool):
        """Return (truncated unfolding, singular values or None)."""
        m = unfold(y, mode)
        if self.cfg.svd == "exact":
            if census:
                return hard_threshold_rank(m, r, return_spectrum=True)
            return hard_threshold_rank(m, r), None
        rows, cols = m.shape
        if r >= min(rows, cols) and not census:
            return m.copy(), None
        c_s = self.cfg.sketch_columns or math.ceil(min(rows, cols) / 2)
        c_s = max(1, min(c_s, cols))
        sv = r + SKETCH_MARGIN if census else r
        sv = max(1, min(sv, c_s))
        sketch = SketchConfig(c_s=c_s, sv=sv)
        out, sigma = approx_hard_threshold(m, min(r, sv), sketch, rng=self.rng, return_spectrum=True)
        return out, sigma


def _gradient_step(x, op, b, tau):
    residual = op.apply(x) - b
    grad = op.adjoint(residual)
    return x - tau * grad, float(np.linalg.norm(residual)), frobenius_norm(grad)


def _combine(y, ranks, weights, threshold, census=False):
    out = np.zeros_like(y)
    spectra = []
    for mode, (r, w) in enumerate(zip(ranks, weights)):
        if w == 0 and not census:
            spectra.append(None)
            continue
        m, sigma = threshold(y, mode, r, census)
        spectra.append(sigma)
        if w != 0:
            out += w * fold(m, mode, y.shape)
    return out, spectra


def iht_step(x, op, b, ranks, cfg: Optional[SolverConfig] = None) -> np.ndarray:
    """One iteration from ``x`` with fixed n-rank bound ``ranks``."""
    cfg = cfg or SolverConfig()
    x = np.asarray(x, dtype=np.float64)
    ranks = check_ranks(ranks, x.shape)
    y, _, _ = _gradient_step(x, op, np.asarray(b, dtype=np.float64), cfg.tau)
    out, _ = _combine(y, ranks, cfg.mode_weights(x.ndim), _Thresholder(x.shape, cfg))
    return out


def _rank_caps(shape) -> Tuple[int, ...]:
    total = math.prod(shape)
    return tuple(min(n, total // n) for n in shape)


def _iterate(op, b, cfg, ranks, heuristic, callback):
    shape = op.shape
    order = len(shape)
    weights = cfg.mode_weights(order)
    caps = _rank_caps(shape)
    threshold = _Thresholder(shape, cfg)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.size != len(op):
        raise ValueError(f"measurement vector has length {b.size}, expected {len(op)}")

    x = np.zeros(shape)
    trace = SolverTrace()
    ranks = tuple(ranks)
    prev_grad = math.inf
    spectra = []
    converged = False
    start = time.perf_counter()
    for k in range(1, cfg.max_iter + 1):
        y, res_norm, grad_norm = _gradient_step(x, op, b, cfg.tau)
        if heuristic and k >= 2:
            # census of the previous Y, then +1 if the gradient-image norm grew
            grow = grad_norm > prev_grad
            new = []
            for i, sigma in enumerate(spectra):
                if sigma is None or sigma.size == 0 or sigma[0] <= 0:
                    r = 0
                else:
                    r = int(np.count_nonzero(sigma > cfg.xi * sigma[0]))
                if grow:
                    r += 1
                if r > caps[i]:
                    logger.debug("heuristic rank for mode %d capped at %d", i, caps[i])
                    r = caps[i]
                new.append(r)
            ranks = tuple(new)
        prev_grad = grad_norm
        x_next, spectra = _combine(y, ranks, weights, threshold, census=heuristic)

        change = relative_change(x, x_next)
        if not np.isfinite(change) or change > DIVERGENCE_LIMIT or not np.all(np.isfinite(x_next)):
            raise DivergenceError(
                f"iteration {k} diverged (relative change {change:.3g}); "
                f"step size tau={cfg.tau} is likely too large"
            )
        trace.append(change, res_norm, grad_norm, ranks, time.perf_counter() - start)
        x = x_next
        if callback is not None:
            callback(k, x)
        if change < cfg.tol:
            converged = True
            break
    return SolverResult(
        solution=x,
        iterations=len(trace),
        converged=converged,
        final_rank=tuple(ranks),
        trace=trace,
    )


def solve_fixed_rank(
    op,
    b,
    ranks: Sequence[int],
    cfg: Optional[SolverConfig] = None,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> SolverResult:
    """IHTr: iterate from ``X^0 = 0`` with the n-rank bound ``ranks``.

    ``callback(k, X^k)`` is invoked after every iteration. Hitting
    ``max_iter`` is reported through ``converged=False``.
    """
    cfg = cfg or SolverConfig()
    ranks = check_ranks(ranks, op.shape)
    return _iterate(op, b, cfg, ranks, heuristic=False, callback=callback)


def solve_heuristic_rank(
    op,
    b,
    cfg: Optional[SolverConfig] = None,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> SolverResult:
    """IHT: as :func:`solve_fixed_rank` with a predicted n-rank.

    Starts from ``r_i = ceil(n_i / 2)``. From the second iteration on, ``r_i``
    is the number of singular values of the previous ``unfold(Y, i)`` above
    ``cfg.xi`` times its largest one, plus 1 if the norm of
    ``A*(A(X) - b)`` grew since the previous iteration. Ranks are capped at
    ``min(n_i, T_i)``.
    """
    cfg = cfg or SolverConfig()
    ranks = check_ranks([min(math.ceil(n / 2), c) for n, c in zip(op.shape, _rank_caps(op.shape))], op.shape)
    return _iterate(op, b, cfg, ranks, heuristic=True, callback=callback)


def solve(op, b, cfg: Optional[SolverConfig] = None, ranks: Optional[Sequence[int]] = None, callback=None) -> SolverResult:
    """Dispatch to :func:`solve_fixed_rank` when ``ranks`` is given, else
    :func:`solve_heuristic_rank`."""
    if ranks is None:
        return solve_heuristic_rank(op, b, cfg, callback)
    return solve_fixed_rank(op, b, ranks, cfg, callback)
