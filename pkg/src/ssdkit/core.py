"""Core selective state-space kernel: recurrence, transitions, kernel matrix.

A sequence layer is driven by per-position coefficients (a_t, B_t, C_t) and a
scalar input channel x_t per head.  The state update and readout are

    h_t = a_t * h_{t-1} + B_t * x_t        h_t in R^N
    y_t = C_t . h_t

The same map can be written as one lower-triangular operator y = M x with
M[i, j] = C_i . B_j * prod(a_k for k in j+1..i).  This module implements the
recurrent evaluation, the scalar cumulative-transition products, and the
materialized kernel matrix; the block-decomposed evaluations live in
``ssdkit.chunked``.

Array conventions (all float64):
    x, y : (batch, length, heads)
    a    : (batch, length, heads)          transition scalars, 0 < a
    B, C : (batch, length, heads, state)
    h    : (batch, heads, state)
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ValidationError

__all__ = [
    "SsmCoefficients",
    "random_coefficients",
    "cumulative_transition",
    "build_kernel_matrix",
    "recurrent_scan",
]


def _as_f64(arr, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise ValidationError(f"{name} contains non-finite values")
    return out


class SsmCoefficients:
    """Per-position coefficient tensors for one sequence layer.

    Attributes:
        a:    (batch, length, heads) positive transition scalars.
        Bmat: (batch, length, heads, state) input maps.
        Cmat: (batch, length, heads, state) readout maps.
    """

    __slots__ = ("a", "Bmat", "Cmat")

    def __init__(self, a, Bmat, Cmat, *, validate: bool = True):
        if validate:
            a = _as_f64(a, "a")
            Bmat = _as_f64(Bmat, "Bmat")
            Cmat = _as_f64(Cmat, "Cmat")
            if a.ndim != 3 or Bmat.ndim != 4 or Cmat.ndim != 4:
                raise DimensionError(
                    "expected a:(b,t,h), Bmat:(b,t,h,n), Cmat:(b,t,h,n); got "
                    f"{a.shape}, {Bmat.shape}, {Cmat.shape}"
                )
            if Bmat.shape != Cmat.shape or Bmat.shape[:3] != a.shape:
                raise DimensionError(
                    f"coefficient extents disagree: a {a.shape}, "
                    f"Bmat {Bmat.shape}, Cmat {Cmat.shape}"
                )
            if a.shape[1] < 1:
                raise ValidationError("sequence length must be at least 1")
            if not np.all(a > 0.0):
                raise ValidationError("transition scalars must be positive")
        self.a = a
        self.Bmat = Bmat
        self.Cmat = Cmat

    @property
    def batch(self) -> int:
        return self.a.shape[0]

    @property
    def length(self) -> int:
        return self.a.shape[1]

    @property
    def heads(self) -> int:
        return self.a.shape[2]

    @property
    def state_dim(self) -> int:
        return self.Bmat.shape[3]

    def slice_time(self, start: int, stop: int) -> "SsmCoefficients":
        """Return a zero-copy time-slice view (used by the chunk partitioner)."""
        return SsmCoefficients(
            self.a[:, start:stop],
            self.Bmat[:, start:stop],
            self.Cmat[:, start:stop],
            validate=False,
        )


def random_coefficients(rng: np.random.Generator, batch: int, length: int,
                        heads: int, state_dim: int) -> SsmCoefficients:
    """Draw a well-conditioned random coefficient set for tests and benchmarks.

    Transitions are squashed into (0, 1) through exp(-softplus(z)) so decay
    products stay positive and bounded; B and C are scaled to keep readouts
    O(1) at any state size.
    """
    z = rng.standard_normal((batch, length, heads))
    a = np.exp(-np.logaddexp(0.0, z))
    scale = 1.0 / np.sqrt(state_dim)
    Bmat = rng.standard_normal((batch, length, heads, state_dim)) * scale
    Cmat = rng.standard_normal((batch, length, heads, state_dim)) * scale
    return SsmCoefficients(a, Bmat, Cmat)


def _check_state(h0, batch: int, heads: int, state_dim: int) -> np.ndarray:
    h0 = _as_f64(h0, "h0")
    if h0.shape != (batch, heads, state_dim):
        raise DimensionError(
            f"initial state shape {h0.shape} does not match "
            f"({batch}, {heads}, {state_dim})"
        )
    return h0


def _check_inputs(coeffs: SsmCoefficients, x) -> np.ndarray:
    x = _as_f64(x, "x")
    if x.shape != (coeffs.batch, coeffs.length, coeffs.heads):
        raise DimensionError(
            f"input shape {x.shape} does not match coefficients "
            f"({coeffs.batch}, {coeffs.length}, {coeffs.heads})"
        )
    return x


def cumulative_transition(a, i: int, j: int) -> float:
    """Product of transition scalars over positions j+1 .. i (1-based).

    Returns 1.0 when i == j and 0.0 when i < j, matching the off-diagonal
    structure of the kernel matrix.  Positions index boundaries 0..T, so the
    factor for position k is a[k-1].
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise DimensionError(f"expected 1-D transition series, got shape {a.shape}")
    n = a.shape[0]
    if not (0 <= i <= n and 0 <= j <= n):
        raise IndexError(f"boundary indices ({i}, {j}) out of range for length {n}")
    if i < j:
        return 0.0
    p = 1.0
    for k in range(j + 1, i + 1):  # ascending, fixed order
        p = p * float(a[k - 1])
    return p


def build_kernel_matrix(a) -> np.ndarray:
    """Materialize the (length, length) decay kernel for one transition series.

    L[i, j] = prod(a[k] for k in j+1..i), unit diagonal, zero above it.  Rows
    are filled by running products (L[i, j] = a[i] * L[i-1, j]) so no division
    is ever taken; every entry agrees bit-exactly with cumulative_transition.
    """
    a = _as_f64(a, "a")
    if a.ndim != 1:
        raise DimensionError(f"expected 1-D transition series, got shape {a.shape}")
    if a.shape[0] < 1:
        raise ValidationError("transition series must have length >= 1")
    if not np.all(a > 0.0):
        raise ValidationError("transition scalars must be positive")
    return _kernel_blocks(a[None, :, None])[0, 0]


def _kernel_blocks(a: np.ndarray) -> np.ndarray:
    """Batched kernel blocks: a (b, q, h) -> L (b, h, q, q).

    Same row recursion as build_kernel_matrix, vectorized over batch/heads.
    """
    b, q, h = a.shape
    L = np.zeros((b, h, q, q), dtype=np.float64)
    L[..., 0, 0] = 1.0
    for i in range(1, q):
        L[..., i, :i] = a[:, i, :, None] * L[..., i - 1, :i]
        L[..., i, i] = 1.0
    return L


def recurrent_scan(coeffs: SsmCoefficients, x, h0=None):
    """Stepwise evaluation of the recurrence; the sequential ground truth.

    Args:
        coeffs: per-position coefficients.
        x:      (batch, length, heads) input channels.
        h0:     (batch, heads, state) initial state; zeros when omitted.

    Returns:
        (y, hT): outputs (batch, length, heads) and final state
        (batch, heads, state).  Peak auxiliary memory is one state vector
        regardless of length.
    """
    x = _check_inputs(coeffs, x)
    b, t, heads = x.shape
    n = coeffs.state_dim
    if h0 is None:
        h = np.zeros((b, heads, n), dtype=np.float64)
    else:
        h = _check_state(h0, b, heads, n).copy()
    y = np.empty((b, t, heads), dtype=np.float64)
    a, Bmat, Cmat = coeffs.a, coeffs.Bmat, coeffs.Cmat
    for step in range(t):
        h = a[:, step, :, None] * h + Bmat[:, step] * x[:, step, :, None]
        y[:, step] = np.einsum("bhn,bhn->bh", Cmat[:, step], h)
    return y, h
