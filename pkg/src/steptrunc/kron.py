"""Linear operators as sums of Kronecker-product terms of per-mode matrices.

A term stores only its non-identity factors; identities are implicit and
never materialized.  Application is exact: rank growth is left to the
caller's truncation schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dense, htucker
from .dense import DenseTensor, mode_apply
from .errors import InputError

# Exact accumulation in apply_ht re-orthogonalizes whenever an intermediate
# transfer tensor outgrows this, capping ranks at the format's natural
# bounds without any approximation.
_ACCUMULATION_ELEMENT_LIMIT = 1_500_000


@dataclass(frozen=True)
class KronTerm:
    """coeff * (A_1 x ... x A_d) with identity factors kept symbolic."""

    coeff: float
    factors: dict = field(default_factory=dict)

    def factor(self, k, n):
        """The mode-k factor, materializing the identity on demand."""
        if k in self.factors:
            return self.factors[k]
        return np.eye(n)


@dataclass(frozen=True)
class KronSumOperator:
    dims: tuple
    terms: tuple

    def __post_init__(self):
        if len(self.terms) < 1:
            raise InputError("operator needs at least one term")
        for term in self.terms:
            for k, a in term.factors.items():
                if not (0 <= k < len(self.dims)):
                    raise InputError(f"factor mode {k} out of range")
                if a.shape != (self.dims[k], self.dims[k]):
                    raise InputError(
                        f"factor on mode {k} has shape {a.shape}, "
                        f"expected ({self.dims[k]}, {self.dims[k]})"
                    )


def operator(dims, terms):
    norm_terms = []
    for term in terms:
        if not isinstance(term, KronTerm):
            coeff, factors = term
            term = KronTerm(float(coeff), dict(factors))
        norm_terms.append(
            KronTerm(
                float(term.coeff),
                {int(k): np.asarray(a, dtype=float) for k, a in term.factors.items()},
            )
        )
    return KronSumOperator(tuple(int(n) for n in dims), tuple(norm_terms))


def apply_dense(op, t):
    """Evaluate the operator on a dense tensor term by term."""
    if not isinstance(t, DenseTensor):
        t = DenseTensor(t)
    if t.dims != op.dims:
        raise InputError(f"operator dims {op.dims} do not match tensor dims {t.dims}")
    out = np.zeros(t.dims)
    for term in op.terms:
        cur = t
        for k in sorted(term.factors):
            cur = mode_apply(cur, k, term.factors[k])
        out += term.coeff * cur.array
    return DenseTensor(out)


def _apply_term_ht(term, h):
    leaves = []
    for k in range(h.tree.d):
        u = h.leaves[k]
        if k in term.factors:
            u = term.factors[k] @ u
        leaves.append(u)
    out = htucker.HTensor(h.tree, leaves, {i: b.copy() for i, b in h.transfers.items()})
    if term.coeff != 1.0:
        out = htucker.scale(out, term.coeff)
    return out


def apply_ht(op, h):
    """Evaluate the operator on an HT tensor, exactly.

    Each term maps leaf frames through its factors (rank preserved); terms
    are then summed, so every node rank is at most term count times the
    input rank.
    """
    if h.dims != op.dims:
        raise InputError(f"operator dims {op.dims} do not match tensor dims {h.dims}")
    acc = None
    for term in op.terms:
        applied = _apply_term_ht(term, h)
        if acc is None:
            acc = applied
        else:
            acc = htucker.linear_combine(1.0, acc, 1.0, applied)
            largest = max(b.size for b in acc.transfers.values())
            if largest > _ACCUMULATION_ELEMENT_LIMIT:
                acc = htucker.orthogonalize(acc)
    return acc


def assemble_matrix(op):
    """Explicit (prod dims x prod dims) matrix; tiny sizes only, for oracles.

    Row/column ordering matches the documented column-major linearization.
    """
    size = int(np.prod(op.dims))
    dense.check_budget((size, size))
    out = np.zeros((size, size))
    for term in op.terms:
        block = np.eye(1)
        # kron(A_last, ..., A_0) matches mode-0-fastest vectorization
        for k in range(len(op.dims)):
            block = np.kron(term.factor(k, op.dims[k]), block)
        out += term.coeff * block
    return out
