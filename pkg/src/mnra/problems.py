"""Random low n-rank completion problems and recovery metrics.

Randomness comes from numpy's ``Generator`` with the PCG64 bit generator,
seeded by an integer. Within :func:`make_instance` draws are consumed in a
fixed order: core tensor, factors ``U_1..U_N`` (each column-major), the
observed index set, then the noise tensor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .operators import SamplingOperator
from .tensor import ShapeError, check_ranks, frobenius_norm, mode_product

SeedLike = Union[int, np.random.Generator]


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(int(seed)))


def generate_low_nrank(shape: Sequence[int], ranks: Sequence[int], seed: SeedLike = 0) -> np.ndarray:
    """Gaussian Tucker tensor ``S x_1 U_1 ... x_N U_N`` with n-rank at most ``ranks``."""
    shape = tuple(int(n) for n in shape)
    ranks = check_ranks(ranks, shape)
    rng = make_rng(seed)
    t = rng.standard_normal(math.prod(ranks)).reshape(ranks, order="F")
    factors = [rng.standard_normal((r, n)).T for n, r in zip(shape, ranks)]
    for mode, u in enumerate(factors):
        t = mode_product(t, mode, u)
    return np.ascontiguousarray(t)


def sample_count(shape: Sequence[int], sr: float) -> int:
    total = math.prod(shape)
    return min(total, int(math.floor(sr * total + 0.5)))


def sample_omega(shape: Sequence[int], sr: float, seed: SeedLike = 0) -> SamplingOperator:
    """Observe ``round(sr * prod(shape))`` entries chosen uniformly without replacement."""
    if not 0 < sr <= 1:
        raise ValueError(f"sampling ratio must lie in (0, 1], got {sr}")
    shape = tuple(int(n) for n in shape)
    total = math.prod(shape)
    count = sample_count(shape, sr)
    if count == total:
        return SamplingOperator(shape, np.arange(total))
    rng = make_rng(seed)
    idx = rng.choice(total, size=count, replace=False)
    return SamplingOperator(shape, np.sort(idx))


@dataclass(frozen=True)
class ProblemInstance:
    ground_truth: np.ndarray
    observed: np.ndarray
    operator: SamplingOperator
    b: np.ndarray
    noise_level: float
    true_rank: Tuple[int, ...]
    seed: int

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.ground_truth.shape


def make_instance(
    shape: Sequence[int],
    ranks: Sequence[int],
    sr: float,
    sigma: float = 0.0,
    seed: int = 0,
) -> ProblemInstance:
    """Completion problem ``b = A(M_bar + sigma * E)`` with Gaussian ``E``."""
    if sigma < 0:
        raise ValueError(f"noise level must be nonnegative, got {sigma}")
    shape = tuple(int(n) for n in shape)
    rng = make_rng(seed)
    truth = generate_low_nrank(shape, ranks, rng)
    op = sample_omega(shape, sr, rng)
    if sigma > 0:
        observed = truth + sigma * rng.standard_normal(shape)
    else:
        observed = truth
    return ProblemInstance(
        ground_truth=truth,
        observed=observed,
        operator=op,
        b=op.apply(observed),
        noise_level=float(sigma),
        true_rank=tuple(int(r) for r in ranks),
        seed=int(seed),
    )


def rel_err(sol: np.ndarray, truth: np.ndarray) -> float:
    """``||sol - truth||_F / ||truth||_F``."""
    sol = np.asarray(sol)
    truth = np.asarray(truth)
    if sol.shape != truth.shape:
        raise ShapeError(f"shape mismatch: {sol.shape} vs {truth.shape}")
    denom = frobenius_norm(truth)
    if denom == 0:
        raise ValueError("relative error undefined for a zero reference tensor")
    return frobenius_norm(sol - truth) / denom


def nrmse(sol: np.ndarray, truth: np.ndarray, op: SamplingOperator) -> float:
    """Range-normalized RMS error over the unobserved entries.

    ``truth`` is the clean tensor; the normalizer is the range of ``truth``
    on the complement of the observed set.
    """
    sol = np.asarray(sol)
    truth = np.asarray(truth)
    if sol.shape != truth.shape or truth.shape != op.shape:
        raise ShapeError(f"shape mismatch: {sol.shape}, {truth.shape}, operator {op.shape}")
    hidden = ~op.mask()
    count = int(hidden.sum())
    if count == 0:
        raise ValueError("NRMSE undefined: every entry is observed")
    ref = truth[hidden]
    spread = float(ref.max() - ref.min())
    if spread == 0:
        raise ValueError("NRMSE undefined: reference is constant on the unobserved set")
    return float(np.linalg.norm(sol[hidden] - ref)) / (spread * math.sqrt(count))
