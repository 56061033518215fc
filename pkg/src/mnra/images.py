"""Color images as third-order tensors, binary PPM I/O, and best
rank-(r_1, ..., r_N) preprocessing by higher-order orthogonal iteration."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from .tensor import check_ranks, frobenius_norm, mode_product, unfold

SAMPLE_IMAGE = "astronaut512.ppm"


def _read_token(buf: bytes, pos: int) -> Tuple[bytes, int]:
    while pos < len(buf):
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(buf) and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ValueError("truncated PPM header")
    return buf[start:pos], pos


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    """Read a binary (P6) PPM into an ``H x W x 3`` unsigned integer array."""
    buf = Path(path).read_bytes()
    magic, pos = _read_token(buf, 0)
    if magic != b"P6":
        raise ValueError(f"{path}: not a binary PPM (magic {magic!r})")
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ValueError(f"{path}: malformed PPM dimensions {width}x{height}, maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    count = width * height * 3
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
    if data.size != count:
        raise ValueError(f"{path}: pixel data truncated")
    pixels = data.reshape(height, width, 3)
    return pixels.astype(np.uint8 if maxval < 256 else np.uint16)


def write_ppm(path: Union[str, Path], pixels: np.ndarray) -> None:
    """Write an ``H x W x 3`` uint8 array as binary PPM."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {pixels.shape}")
    if pixels.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {pixels.dtype}")
    height, width, _ = pixels.shape
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(pixels).tobytes())


def load_sample_image() -> np.ndarray:
    """The bundled 512x512 test image (public-domain NASA astronaut portrait)."""
    with resources.as_file(resources.files("mnra") / "data" / SAMPLE_IMAGE) as p:
        return read_ppm(p)


def image_to_tensor(pixels: np.ndarray, maxval: int | None = None) -> np.ndarray:
    """Scale channel data to ``[0, 1]`` floats; the tensor is ``H x W x 3``."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or min(pixels.shape) < 1:
        raise ValueError(f"expected an H x W x 3 image, got shape {pixels.shape}")
    if np.any(pixels < 0):
        raise ValueError("pixel values must be nonnegative")
    if maxval is None:
        maxval = np.iinfo(pixels.dtype).max if pixels.dtype.kind in "ui" else 1
    return pixels.astype(np.float64) / float(maxval)


def tensor_to_image(t: np.ndarray) -> np.ndarray:
    """Clamp to ``[0, 1]`` and quantize to 8-bit."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3 or t.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 tensor, got shape {t.shape}")
    return np.rint(np.clip(t, 0.0, 1.0) * 255.0).astype(np.uint8)


def _leading_left(m: np.ndarray, r: int) -> np.ndarray:
    u, _, _ = np.linalg.svd(m, full_matrices=False)
    return u[:, :r]


def hooi(t: np.ndarray, ranks: Sequence[int], sweeps: int = 10):
    """Higher-order orthogonal iteration.

    Factors start from the truncated SVDs of the unfoldings (HOSVD); each
    sweep then updates every factor in turn to the leading left singular
    vectors of the unfolding of ``t`` projected on the other factors.

    Returns ``(core, factors, residuals)`` where ``residuals[s]`` is the fit
    error ``||t - core x_1 U_1 ... x_N U_N||_F`` after sweep ``s`` (index 0 is
    the HOSVD starting point).
    """
    t = np.asarray(t, dtype=np.float64)
    ranks = check_ranks(ranks, t.shape)
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    order = t.ndim
    factors: List[np.ndarray] = [_leading_left(unfold(t, i), r) for i, r in enumerate(ranks)]
    norm_sq = frobenius_norm(t) ** 2

    def project(skip=None):
        g = t
        for j in range(order):
            if j != skip:
                g = mode_product(g, j, factors[j].T)
        return g

    def residual(core):
        # orthonormal factors: ||t - expand(core)||^2 = ||t||^2 - ||core||^2
        return float(np.sqrt(max(norm_sq - frobenius_norm(core) ** 2, 0.0)))

    core = project()
    residuals = [residual(core)]
    for _ in range(sweeps):
        for i, r in enumerate(ranks):
            factors[i] = _leading_left(unfold(project(skip=i), i), r)
        core = project()
        residuals.append(residual(core))
    return core, factors, residuals


def expand(core: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    out = core
    for i, u in enumerate(factors):
        out = mode_product(out, i, u)
    return out


def best_nrank_preprocess(t: np.ndarray, ranks: Sequence[int], sweeps: int = 10) -> np.ndarray:
    """Approximate best rank-``ranks`` approximation of ``t`` via :func:`hooi`."""
    t = np.asarray(t, dtype=np.float64)
    if tuple(ranks) == t.shape:
        return t.copy()
    core, factors, _ = hooi(t, ranks, sweeps)
    return expand(core, factors)
