"""Fourier pseudo-spectral machinery on the periodic grid over [0, 2*pi).

Only even point counts are supported; the differentiation matrices are the
standard even-n real trigonometric ones, built as circulants so that the
order-1 matrix is exactly antisymmetric and the order-2 matrix exactly
symmetric in floating point.  Zero column sums per D-factor are what make
the discretized divergence-form operators conserve mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dense import DenseTensor
from .errors import InputError
from .htucker import HTensor, contract_all


@dataclass(frozen=True)
class PeriodicGrid:
    """Evenly spaced points x_j = 2*pi*j/n, j = 0..n-1, with Gauss weight 2*pi/n."""

    n: int

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise InputError(f"grid size must be even and >= 4, got {self.n}")

    @property
    def nodes(self):
        return 2.0 * np.pi * np.arange(self.n) / self.n

    @property
    def weight(self):
        return 2.0 * np.pi / self.n


def _circulant(first_column):
    n = len(first_column)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return first_column[idx]


def diff_matrix(n, order):
    """Fourier differentiation matrix of the given order (1 or 2).

    Exact on trigonometric polynomials resolvable on the grid.  The
    circulant column is mirrored explicitly, so antisymmetry (order 1) and
    symmetry (order 2) hold bit-exactly.
    """
    if n < 4 or n % 2:
        raise InputError(f"differentiation matrices need even n >= 4, got {n}")
    h = 2.0 * np.pi / n
    col = np.zeros(n)
    if order == 1:
        for k in range(1, n // 2):
            val = 0.5 * (-1.0) ** k / np.tan(0.5 * k * h)
            col[k] = val
            col[n - k] = -val
        # Nyquist entry vanishes: cot(pi/2) = 0
        return _circulant(col)
    if order == 2:
        col[0] = -np.pi**2 / (3.0 * h * h) - 1.0 / 6.0
        for k in range(1, n // 2 + 1):
            val = -0.5 * (-1.0) ** k / np.sin(0.5 * k * h) ** 2
            col[k] = val
            col[n - k] = val
        return _circulant(col)
    raise InputError(f"only orders 1 and 2 are implemented, got {order}")


def diag_of(samples):
    """Diagonal multiplication matrix from pointwise samples."""
    return np.diag(np.asarray(samples, dtype=float))


def quad_integral(t, grid):
    """Integral over the torus by the trapezoidal (Gauss) rule.

    For HT tensors the sum is computed by contracting every mode with a
    ones vector; the dense tensor is never formed.
    """
    if isinstance(t, HTensor):
        if any(n != grid.n for n in t.dims):
            raise InputError(f"tensor dims {t.dims} do not match grid n={grid.n}")
        total = contract_all(t, [np.ones(grid.n)] * len(t.dims))
        return grid.weight ** len(t.dims) * total
    if not isinstance(t, DenseTensor):
        t = DenseTensor(t)
    if any(n != grid.n for n in t.dims):
        raise InputError(f"tensor dims {t.dims} do not match grid n={grid.n}")
    return grid.weight ** t.ndim * float(t.array.sum())


def l2_norm(t, grid):
    """Weighted L2 norm matching the quadrature rule."""
    if isinstance(t, HTensor):
        frob = t.norm()
        d = len(t.dims)
    else:
        if not isinstance(t, DenseTensor):
            t = DenseTensor(t)
        frob = t.norm()
        d = t.ndim
    return grid.weight ** (d / 2.0) * frob
