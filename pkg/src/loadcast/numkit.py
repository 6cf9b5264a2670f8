"""Small numeric kernel shared by every model.

Matrices are plain 2-D ``float64`` numpy arrays in C (row-major) order.  The
helpers here add the checks the models rely on: shape errors that name both
operands and a hard failure whenever a non-finite value appears.

Random streams come from numpy's ``PCG64`` bit generator, seeded with a 64-bit
integer, so a seed reproduces the same stream on every platform numpy supports.
"""

import numpy as np

from loadcast.errors import NonFiniteError, ShapeError

ACTIVATIONS = ("tanh", "sigmoid")


def as_matrix(a, name="matrix"):
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    check_finite(m, name)
    return m


def check_finite(a, name="value"):
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return a


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return check_finite(out, "matmul result")


def sigmoid(x):
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activate(x, kind):
    if kind == "tanh":
        return np.tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activate_grad(x, kind):
    """Derivative of ``activate(x, kind)`` with respect to ``x``."""
    y = activate(x, kind)
    if kind == "tanh":
        return 1.0 - y * y
    return y * (1.0 - y)


def make_rng(seed=0):
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def rng_matrix(rng, rows, cols, scale=None):
    """Uniform draws in ``[-scale, scale]``; ``scale`` defaults to ``1/sqrt(cols)``."""
    if scale is None:
        scale = 1.0 / np.sqrt(cols)
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return rng.uniform(-scale, scale, size=(rows, cols))


def finite_diff_grad(f, x, eps=1e-5, order=2):
    """Central-difference gradient of the scalar function ``f`` at ``x``.

    ``order=2`` is the two-point stencil ``(f(x+e) - f(x-e)) / 2e``.
    ``order=4`` uses the five-point stencil, whose O(eps**4) truncation error
    permits a larger ``eps`` and therefore far less cancellation noise.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if order == 2:
        stencil = ((1, 0.5), (-1, -0.5))
    elif order == 4:
        stencil = ((2, -1 / 12), (1, 8 / 12), (-1, -8 / 12), (-2, 1 / 12))
    else:
        raise ValueError("order must be 2 or 4")
    x = np.array(x, dtype=np.float64).ravel()
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        acc = 0.0
        for k, w in stencil:
            x[i] = orig + k * eps
            v = float(f(x))
            if not np.isfinite(v):
                x[i] = orig
                raise NonFiniteError(f"function is not finite near coordinate {i}")
            acc += w * v
        x[i] = orig
        grad[i] = acc / eps
    return grad


def relative_error(a, b, floor=1e-8):
    """Per-coordinate ``|a - b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
