"""Dense tensors and the numeric kernels every layer builds on.

All tensors in this package are C-order (row-major) ``numpy.ndarray``
objects. Model state is stored as float32; the kernels here preserve the
dtype of their inputs, so verification code can run the identical
computation in float64. All functions are pure: inputs are never mutated.

Randomness comes from one generator type everywhere: NumPy's ``Generator``
seeded with PCG64 (see :func:`make_rng`). A fixed seed reproduces the same
stream on any platform running the same NumPy version.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, ValidationError

DTYPE = np.float32


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; the single source of randomness in the repo."""
    return np.random.Generator(np.random.PCG64(seed))


def tensor_new(shape, fill: float = 0.0) -> np.ndarray:
    """Allocate a float32 tensor of `shape` with every element set to `fill`."""
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0 or any(d < 1 for d in shape):
        raise ShapeError(f"all dimensions must be >= 1, got {shape}")
    return np.full(shape, fill, dtype=DTYPE)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of a 2-D (m,k) by a 2-D (k,n) array."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def im2col(x: np.ndarray) -> np.ndarray:
    """Extract zero-padded 3x3 stride-1 patches from an (H, W, C) tensor.

    Returns an (H*W, 9*C) matrix. Row ``i*W + j`` holds the 3x3xC receptive
    field centred on pixel (i, j), flattened row-major, i.e. column
    ``(ki*3 + kj)*C + c`` is input pixel (i+ki-1, j+kj-1, c), zero outside
    the image. Multiplying by kernels reshaped to (9*C, C_out) realises a
    same-padded convolution.
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"expected (H, W, C) input, got shape {x.shape}")
    h, w, c = x.shape
    padded = np.zeros((h + 2, w + 2, c), dtype=x.dtype)
    padded[1 : h + 1, 1 : w + 1] = x
    # windows: (H, W, C, 3, 3) -> reorder so each patch flattens as (ki, kj, c)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(0, 1))
    return windows.transpose(0, 1, 3, 4, 2).reshape(h * w, 9 * c)


def he_normal(rng: np.random.Generator, fan_in: int, count: int) -> np.ndarray:
    """Draw `count` float32 samples from N(0, 2/fan_in).

    The standard deviation sqrt(2/fan_in) keeps activation variance stable
    through rectifier layers.
    """
    if fan_in < 1:
        raise ValidationError(f"fan_in must be >= 1, got {fan_in}")
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    std = np.sqrt(2.0 / fan_in)
    return rng.normal(0.0, std, size=count).astype(DTYPE)
