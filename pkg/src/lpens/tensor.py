"""Dense float32 tensor kernels for inference and quantization.

All operations are pure functions over C-contiguous float32 arrays.
Reductions run in a fixed order (never delegated to variable-order BLAS
kernels), so two calls on identical inputs are bit-identical regardless
of threading or library build.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

Tensor = np.ndarray


def as_tensor(values, shape=None) -> Tensor:
    """Build a C-ordered float32 tensor, validating finiteness."""
    t = np.array(values, dtype=np.float32, order="C")
    if shape is not None:
        t = t.reshape(shape)
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor values must be finite")
    return t


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product accumulated left-to-right in float32.

    The k-th rank-one contribution is added in increasing k, which fixes
    the summation order inside every dot product and makes the result
    bit-reproducible.
    """
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float32)
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def softmax(z: Tensor) -> Tensor:
    """Probabilities over the trailing axis, max-shifted for stability."""
    z = np.asarray(z, dtype=np.float32)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_sum_exp(z: Tensor) -> Tensor:
    """log(sum(exp(z))) over the trailing axis, max-shifted."""
    z = np.asarray(z, dtype=np.float32)
    m = np.max(z, axis=-1)
    e = np.exp(z - m[..., np.newaxis])
    return m + np.log(np.sum(e, axis=-1))


def relu(z: Tensor) -> Tensor:
    return np.maximum(z, np.float32(0.0))


def mean_stack(stack: Tensor) -> Tensor:
    """Mean over the leading axis, accumulated in float64.

    Float64 accumulation makes the mean of identical slices reduce to
    exactly their common value; the result is cast back to float32.
    """
    return np.mean(stack, axis=0, dtype=np.float64).astype(np.float32)
