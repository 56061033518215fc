"""Truncated SVD services: exact rank-r hard thresholding and the Monte Carlo
column-sampling approximation (LinearTimeSVD)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SvdResult:
    """Singular values in descending order with their left (and optionally
    right) singular vectors as columns.

    ``truncated`` is set by :func:`linear_time_svd` when fewer pairs than
    requested had a nonzero singular value.
    """

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: Optional[np.ndarray] = None
    truncated: bool = False


@dataclass(frozen=True)
class SketchConfig:
    """Parameters of :func:`linear_time_svd`.

    Attributes
    ----------
    c_s : int
        Number of sampled columns.
    sv : int
        Number of singular pairs requested, ``1 <= sv <= c_s``.
    probabilities : ndarray, optional
        Column sampling distribution. ``None`` means uniform.
    seed : int
        Seed for the column draw when no generator is passed explicitly.
    replace : bool
        Draw columns i.i.d. (with replacement). ``False`` draws distinct
        columns, which for ``c_s == ncols`` and uniform probabilities makes
        the sketch an exact column permutation.
    """

    c_s: int
    sv: int
    probabilities: Optional[np.ndarray] = None
    seed: int = 0
    replace: bool = True

    @classmethod
    def default_for(cls, shape: tuple[int, int], sv: int, seed: int = 0) -> "SketchConfig":
        """``c_s = ceil(min(rows, cols) / 2)`` with uniform column probabilities."""
        rows, cols = shape
        c_s = max(1, math.ceil(min(rows, cols) / 2))
        return cls(c_s=c_s, sv=max(1, min(sv, c_s)), seed=seed)

    def validate(self, ncols: int) -> np.ndarray:
        """Check the config against a column count and return the probabilities."""
        if not 1 <= self.sv <= self.c_s <= ncols:
            raise ValueError(
                f"need 1 <= sv <= c_s <= ncols, got sv={self.sv}, c_s={self.c_s}, ncols={ncols}"
            )
        if self.probabilities is None:
            return np.full(ncols, 1.0 / ncols)
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.shape != (ncols,):
            raise ValueError(f"expected {ncols} column probabilities, got shape {p.shape}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("column probabilities must be nonnegative and sum to 1")
        if not self.replace and np.count_nonzero(p) < self.c_s:
            raise ValueError("not enough columns with nonzero probability to draw without replacement")
        return p


def _as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite values")
    return m


def exact_svd(m: np.ndarray) -> SvdResult:
    """Thin SVD ``m = U diag(s) V^T`` via LAPACK."""
    m = _as_matrix(m)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return SvdResult(singular_values=s, left_vectors=u, right_vectors=vt.T)


def _gram_eigh(m: np.ndarray):
    """Eigenpairs of the smaller Gram matrix, sorted descending.

    Returns (sigma, vecs, left) where ``left`` tells whether ``vecs`` are left
    singular vectors (``m m^T``) or right ones (``m^T m``).
    """
    rows, cols = m.shape
    left = rows <= cols
    gram = m @ m.T if left else m.T @ m
    w, v = np.linalg.eigh(gram)
    w = w[::-1]
    v = v[:, ::-1]
    return np.sqrt(np.clip(w, 0.0, None)), v, left


def top_singular_values(m: np.ndarray) -> np.ndarray:
    """All ``min(rows, cols)`` singular values, descending (Gram route)."""
    return _gram_eigh(np.asarray(m, dtype=np.float64))[0]


def hard_threshold_rank(m: np.ndarray, r: int, return_spectrum: bool = False):
    """Best rank-``r`` approximation of ``m`` (the operator R_r).

    The projector onto the top-``r`` singular subspace is taken from the
    eigendecomposition of the smaller Gram matrix, which is several times
    cheaper than a full SVD for the very wide unfoldings the solver produces.
    Ties between equal singular values keep the first ``r`` in the order the
    eigensolver returns, so the result is then one of several minimizers.

    With ``return_spectrum=True`` also returns the singular values of ``m``.
    """
    m = np.asarray(m, dtype=np.float64)
    if r < 0:
        raise ValueError(f"rank must be nonnegative, got {r}")
    k = min(m.shape)
    if r > k:
        logger.debug("clamping rank %d to %d for a %dx%d matrix", r, k, *m.shape)
        r = k
    if r == k and not return_spectrum:
        return m.copy()
    sigma, v, left = _gram_eigh(m)
    if r == 0:
        out = np.zeros_like(m)
    elif r == k:
        out = m.copy()
    else:
        basis = v[:, :r]
        if left:
            out = basis @ (basis.T @ m)
        else:
            out = (m @ basis) @ basis.T
    if return_spectrum:
        return out, sigma
    return out


def linear_time_svd(
    m: np.ndarray,
    cfg: SketchConfig,
    rng: Optional[np.random.Generator] = None,
) -> SvdResult:
    """Approximate top-``sv`` singular values and left vectors by column sampling.

    Draws ``c_s`` column indices from ``cfg.probabilities``, rescales column
    ``t`` by ``1 / sqrt(c_s * p[i_t])`` to form ``C``, eigendecomposes
    ``C^T C`` and returns ``sigma_t(C)`` and ``h_t = C y_t / sigma_t(C)``.
    Pairs whose ``sigma_t(C)`` is numerically zero are dropped and
    ``truncated`` is set.
    """
    m = _as_matrix(m)
    ncols = m.shape[1]
    p = cfg.validate(ncols)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    idx = rng.choice(ncols, size=cfg.c_s, replace=cfg.replace, p=p)
    if np.any(p[idx] == 0):
        raise ValueError("sampled a column with zero probability")
    c = m[:, idx] / np.sqrt(cfg.c_s * p[idx])

    w, y = np.linalg.eigh(c.T @ c)
    order = np.argsort(w)[::-1][: cfg.sv]
    w = w[order]
    y = y[:, order]
    # eigenvalues of C^T C below this level are rounding noise
    floor = max(w[0], 0.0) * cfg.c_s * np.finfo(np.float64).eps * 10
    keep = w > floor
    if not keep.any():
        return SvdResult(
            singular_values=np.zeros(0),
            left_vectors=np.zeros((m.shape[0], 0)),
            truncated=True,
        )
    sigma = np.sqrt(w[keep])
    h = (c @ y[:, keep]) / sigma
    return SvdResult(
        singular_values=sigma,
        left_vectors=h,
        truncated=bool(sigma.size < cfg.sv),
    )


def approx_hard_threshold(
    m: np.ndarray,
    r: int,
    cfg: SketchConfig,
    rng: Optional[np.random.Generator] = None,
    return_spectrum: bool = False,
):
    """Project ``m`` onto the span of its approximate top-``r`` left singular
    vectors, ``H_r H_r^T m``. The sampled basis is passed through a thin QR
    first, which leaves its span unchanged.

    ``cfg.sv`` may exceed ``r`` (the extra values are only reported through
    ``return_spectrum``).
    """
    m = np.asarray(m, dtype=np.float64)
    if r <= 0 and not return_spectrum:
        return np.zeros_like(m)
    res = linear_time_svd(m, cfg, rng)
    h = res.left_vectors[:, : max(r, 0)]
    if h.shape[1] == 0:
        out = np.zeros_like(m)
    else:
        # re-orthonormalize: h_t loses orthogonality when sigma_t(C) is tiny
        h, _ = np.linalg.qr(h)
        out = h @ (h.T @ m)
    if return_spectrum:
        return out, res.singular_values
    return out
