"""Dense d-way tensors: matricization, mode products, inner products.

This module is the exact-arithmetic substrate that every low-rank operation
is checked against.  Values are immutable after construction and all
operations are pure functions.

Linearization convention
------------------------
The documented flat ordering of a tensor is column-major by mode index
(mode 0 varies fastest), i.e. ``array.ravel(order="F")``.  Matricizations
follow the same convention: the row multi-index runs over the selected
modes with the first selected mode fastest, and likewise for the columns
over the complementary modes.  Modes are 0-based throughout.
"""

from __future__ import annotations

import numpy as np

from .errors import BudgetError, InputError

# Dense tensors are the desk-scale oracle only; anything bigger than this
# must stay in low-rank form.
DEFAULT_ELEMENT_BUDGET = 10_000_000

_element_budget = DEFAULT_ELEMENT_BUDGET

TENSOR_TEXT_HEADER = "steptrunc dense-tensor v1"


def set_element_budget(budget):
    """Set the global cap on dense tensor sizes. Returns the previous value."""
    global _element_budget
    if int(budget) < 1:
        raise InputError(f"element budget must be positive, got {budget}")
    previous = _element_budget
    _element_budget = int(budget)
    return previous


def element_budget():
    return _element_budget


def check_budget(dims):
    size = int(np.prod([int(n) for n in dims], dtype=np.int64))
    if size > _element_budget:
        raise BudgetError(
            f"dense tensor with dims {tuple(dims)} has {size} elements, "
            f"exceeding the element budget of {_element_budget}"
        )
    return size


class DenseTensor:
    """A d-way array of reals with a fixed documented linearization order.

    Wraps a float ndarray; the wrapper enforces the element budget and
    carries the serialization format used by golden tests.
    """

    __slots__ = ("array",)

    def __init__(self, array):
        arr = np.asarray(array, dtype=float)
        if arr.ndim < 1:
            arr = arr.reshape(1)
        if any(n < 1 for n in arr.shape):
            raise InputError(f"all dims must be >= 1, got {arr.shape}")
        check_budget(arr.shape)
        self.array = arr

    @classmethod
    def zeros(cls, dims):
        check_budget(dims)
        return cls(np.zeros(tuple(int(n) for n in dims)))

    @classmethod
    def from_vector(cls, vec, dims):
        """Rebuild from the documented column-major linearization."""
        vec = np.asarray(vec, dtype=float)
        if vec.size != int(np.prod(dims)):
            raise InputError(f"vector of length {vec.size} does not match dims {tuple(dims)}")
        return cls(vec.reshape(tuple(dims), order="F"))

    @property
    def dims(self):
        return self.array.shape

    @property
    def ndim(self):
        return self.array.ndim

    @property
    def size(self):
        return self.array.size

    def to_vector(self):
        """Flatten in the documented column-major order."""
        return self.array.ravel(order="F")

    def norm(self):
        return float(np.linalg.norm(self.array))

    def copy(self):
        return DenseTensor(self.array.copy())

    def __repr__(self):
        return f"DenseTensor(dims={self.dims})"

    # -- round-trip text format: header line, d, dims, then one value per
    #    line in column-major order (repr round-trips doubles exactly) --

    def save_text(self, path):
        with open(path, "w") as fh:
            fh.write(TENSOR_TEXT_HEADER + "\n")
            fh.write(f"{self.ndim}\n")
            fh.write(" ".join(str(n) for n in self.dims) + "\n")
            for value in self.to_vector():
                fh.write(repr(float(value)) + "\n")

    @classmethod
    def load_text(cls, path):
        with open(path) as fh:
            header = fh.readline().strip()
            if header != TENSOR_TEXT_HEADER:
                raise InputError(f"unrecognized tensor file header: {header!r}")
            d = int(fh.readline())
            dims = tuple(int(tok) for tok in fh.readline().split())
            if len(dims) != d:
                raise InputError(f"header d={d} but {len(dims)} dims listed")
            vec = np.array([float(fh.readline()) for _ in range(int(np.prod(dims)))])
        return cls.from_vector(vec, dims)

    def save_npy(self, path):
        np.save(path, self.array)

    @classmethod
    def load_npy(cls, path):
        return cls(np.load(path))


def as_mode_set(modes, d):
    """Validate a mode selection: nonempty, strictly increasing, within 0..d-1."""
    modes = tuple(int(k) for k in modes)
    if not modes:
        raise InputError("mode set must be nonempty")
    if any(k < 0 or k >= d for k in modes):
        raise InputError(f"mode set {modes} out of bounds for a {d}-way tensor")
    if any(a >= b for a, b in zip(modes, modes[1:])):
        raise InputError(f"mode set {modes} must be strictly increasing")
    return modes


def matricize(t, modes):
    """Unfold `t` into a matrix with rows indexed by `modes`.

    Columns run over the complementary modes; both multi-indices are
    column-major (first mode fastest).  The reshaping is bijective and
    :func:`dematricize` inverts it bit-exactly.
    """
    arr = t.array if isinstance(t, DenseTensor) else np.asarray(t, dtype=float)
    modes = as_mode_set(modes, arr.ndim)
    comp = [k for k in range(arr.ndim) if k not in modes]
    nrows = int(np.prod([arr.shape[k] for k in modes]))
    return np.transpose(arr, list(modes) + comp).reshape(nrows, -1, order="F")


def dematricize(matrix, modes, dims):
    """Inverse of :func:`matricize` for the same `modes` and original `dims`."""
    dims = tuple(int(n) for n in dims)
    modes = as_mode_set(modes, len(dims))
    comp = [k for k in range(len(dims)) if k not in modes]
    perm = list(modes) + comp
    shaped = np.asarray(matrix, dtype=float).reshape(
        [dims[k] for k in perm], order="F"
    )
    return DenseTensor(np.transpose(shaped, np.argsort(perm)))


def mode_apply(t, k, matrix):
    """Apply `matrix` along mode `k`: equals dematricize(A @ matricize(t, {k}))."""
    arr = t.array if isinstance(t, DenseTensor) else np.asarray(t, dtype=float)
    matrix = np.asarray(matrix, dtype=float)
    if not (0 <= k < arr.ndim):
        raise InputError(f"mode {k} out of bounds for a {arr.ndim}-way tensor")
    if matrix.ndim != 2 or matrix.shape[1] != arr.shape[k]:
        raise InputError(
            f"matrix of shape {matrix.shape} cannot act on mode {k} of size {arr.shape[k]}"
        )
    moved = np.moveaxis(arr, k, 0)
    shape = moved.shape
    out = matrix @ moved.reshape(shape[0], -1)
    out = out.reshape((matrix.shape[0],) + shape[1:])
    return DenseTensor(np.moveaxis(out, 0, k))


def linear_combine(alpha, x, beta, y):
    """Elementwise alpha*x + beta*y for equal-dims tensors."""
    if x.dims != y.dims:
        raise InputError(f"dims mismatch: {x.dims} vs {y.dims}")
    return DenseTensor(alpha * x.array + beta * y.array)


def inner(x, y):
    """Canonical inner product; inner(x, x) is the squared Frobenius norm."""
    if x.dims != y.dims:
        raise InputError(f"dims mismatch: {x.dims} vs {y.dims}")
    return float(np.dot(x.array.ravel(), y.array.ravel()))
