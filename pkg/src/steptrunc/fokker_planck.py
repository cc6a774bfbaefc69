"""Fokker-Planck test problems on the flat torus: drift, operator, initial data.

The drift components couple neighbouring coordinates cyclically,

    mu_i(x) = (gamma(x_{i+1}) - gamma(x_{i-2})) * xi(x_{i-1}) - phi(x_i),

with indices wrapping modulo d.  The generator

    N f = -sum_i d/dx_i (mu_i f) + (sigma^2 / 2) sum_i d^2 f / dx_i^2

is assembled in conservative form: each separable drift summand becomes one
Kronecker term whose mode-i factor is D1 @ diag(...), so the exact zero
column sums of the spectral matrices carry over to mass conservation.  At
d=2 the wrapped indices collide and factors landing on the same mode are
merged pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import htucker, kron, spectral
from .errors import InputError
from .htucker import DimensionTree, HTensor, TruncationControl
from .kron import KronTerm
from .spectral import PeriodicGrid

DRIFT_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp_sin_plus_1": lambda x: np.exp(np.sin(x)) + 1.0,
    "exp_cos": lambda x: np.exp(np.cos(x)),
    "zero": np.zeros_like,
}


@dataclass(frozen=True)
class DriftSpec:
    """Periodic drift factor functions and the diffusion coefficient.

    gamma, xi, phi may be builtin names, callables, or tabulated samples on
    the grid.
    """

    gamma: object = "sin"
    xi: object = "cos"
    phi: object = "exp_sin_plus_1"
    sigma: float = 2.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise InputError(f"diffusion coefficient must be positive, got {self.sigma}")

    def samples(self, which, nodes):
        fn = getattr(self, which)
        if isinstance(fn, str):
            if fn not in DRIFT_FUNCTIONS:
                raise InputError(
                    f"unknown drift function {fn!r}; "
                    f"builtins are {sorted(DRIFT_FUNCTIONS)}"
                )
            return DRIFT_FUNCTIONS[fn](nodes)
        if callable(fn):
            return np.asarray(fn(nodes), dtype=float)
        arr = np.asarray(fn, dtype=float)
        if arr.shape != nodes.shape:
            raise InputError(
                f"tabulated samples for {which} have shape {arr.shape}, "
                f"expected {nodes.shape}"
            )
        return arr


DRIFT_2D_PAPER = DriftSpec(gamma="sin", xi="cos", phi="exp_sin_plus_1", sigma=2.0)
DRIFT_4D_PAPER = DriftSpec(gamma="sin", xi="exp_sin_plus_1", phi="cos", sigma=2.0)


def drift_samples(d, n, drift):
    """Pointwise mu_i on the full grid, one d-way array per coordinate.

    Direct (non-separated) evaluation; this is the oracle the Kronecker
    assembly is tested against.
    """
    grid = PeriodicGrid(n)
    x = grid.nodes
    gamma = drift.samples("gamma", x)
    xi = drift.samples("xi", x)
    phi = drift.samples("phi", x)
    def on_axis(samples, j):
        shape = [1] * d
        shape[j] = n
        return samples.reshape(shape)

    out = []
    for i in range(d):
        mu = (
            (on_axis(gamma, (i + 1) % d) - on_axis(gamma, (i - 2) % d))
            * on_axis(xi, (i - 1) % d)
            - on_axis(phi, i)
        )
        out.append(np.broadcast_to(mu, (n,) * d).copy())
    return out


def build_fp_operator(d, n, drift):
    """Discrete Fokker-Planck generator as a Kronecker-sum operator.

    Produces 3*d drift terms plus d diffusion terms; wrapped indices that
    land on the same mode are merged by pointwise products of their samples.
    """
    if d < 2:
        raise InputError(f"need d >= 2, got d={d}")
    grid = PeriodicGrid(n)
    x = grid.nodes
    gamma = drift.samples("gamma", x)
    xi = drift.samples("xi", x)
    phi = drift.samples("phi", x)
    d1 = spectral.diff_matrix(n, 1)
    d2 = spectral.diff_matrix(n, 2)
    terms = []
    for i in range(d):
        summands = (
            (1.0, (((i + 1) % d, gamma), ((i - 1) % d, xi))),
            (-1.0, (((i - 2) % d, gamma), ((i - 1) % d, xi))),
            (-1.0, ((i, phi),)),
        )
        for sign, pairs in summands:
            merged = {}
            for mode, samples in pairs:
                merged[mode] = merged[mode] * samples if mode in merged else samples
            factors = {}
            own = merged.pop(i, None)
            factors[i] = d1 @ spectral.diag_of(own) if own is not None else d1
            for mode, samples in merged.items():
                factors[mode] = spectral.diag_of(samples)
            terms.append(KronTerm(coeff=-sign, factors=factors))
    half_sq = 0.5 * drift.sigma**2
    for i in range(d):
        terms.append(KronTerm(coeff=half_sq, factors={i: d2}))
    return kron.operator((n,) * d, terms)


def mass(t, grid):
    """Total probability mass under the quadrature rule."""
    return spectral.quad_integral(t, grid)


def ic_2d(n, tree_kind="balanced"):
    """Unit-mass 2D initial density exp(sin(x1-x2)^2) + sin(x1+x2)^2."""
    grid = PeriodicGrid(n)
    x1 = grid.nodes[:, None]
    x2 = grid.nodes[None, :]
    values = np.exp(np.sin(x1 - x2) ** 2) + np.sin(x1 + x2) ** 2
    values /= grid.weight**2 * values.sum()
    tree = DimensionTree.build(2, tree_kind)
    h, _ = htucker.from_dense(
        values, TruncationControl(eps=1e-12 * float(np.linalg.norm(values))), tree=tree
    )
    return h


def ic_4d(n, terms=10, tree_kind="balanced"):
    """Unit-mass 4D initial density as a sum of 2*terms separable products.

    Term j contributes prod_i (sin((2j-1) x_i) + 1) / 2^(2(j-1)) and
    prod_i exp(cos(2j x_i)) / 2^(2j-1); every node rank is at most 2*terms.
    """
    if terms < 1:
        raise InputError(f"need at least one term, got {terms}")
    grid = PeriodicGrid(n)
    x = grid.nodes
    tree = DimensionTree.build(4, tree_kind)
    acc = None
    for j in range(1, terms + 1):
        v_sin = (np.sin((2 * j - 1) * x) + 1.0) / 2.0 ** (2 * (j - 1))
        v_exp = np.exp(np.cos(2 * j * x)) / 2.0 ** (2 * j - 1)
        for vec in (v_sin, v_exp):
            term = htucker.rank_one(tree, [vec] * 4)
            acc = term if acc is None else htucker.linear_combine(1.0, acc, 1.0, term)
    m0 = mass(acc, grid)
    return htucker.scale(acc, 1.0 / m0)


def _node_with_modes(tree, modes):
    for i, node in enumerate(tree.nodes):
        if node.modes == modes:
            return i
    return None


def marginal_12(h, grid):
    """Marginal density over (x1, x2): integrate out modes 2 and 3.

    Computed by contracting the (2, 3) subtree with quadrature-weighted
    ones vectors when the tree exposes it, falling back to a dense sum
    otherwise.  The marginal carries the same mass as the input.
    """
    if len(h.dims) != 4:
        raise InputError(f"marginal is defined for d=4, got d={len(h.dims)}")
    if any(nk != grid.n for nk in h.dims):
        raise InputError(f"dims {h.dims} do not match grid n={grid.n}")
    w = grid.weight * np.ones(grid.n)
    tree = h.tree
    front = _node_with_modes(tree, (0, 1))
    back = _node_with_modes(tree, (2, 3))
    if front is not None and back is not None and tree.nodes[0].left == front:
        reduced = htucker.contract_subtree(h, back, {2: w, 3: w})
        coupling = np.einsum("ijk,j->ik", h.transfers[0], reduced)[:, 0]
        frame = h.node_frame(front)
        return (frame @ coupling).reshape(grid.n, grid.n, order="F")
    dense_t = h.to_dense()
    return dense_t.array.sum(axis=(2, 3)) * grid.weight**2


@dataclass(frozen=True)
class FPProblem:
    """A ready-to-run configuration: operator, normalized initial state, grid."""

    name: str
    d: int
    n: int
    drift: DriftSpec
    operator: kron.KronSumOperator
    f0: HTensor
    grid: PeriodicGrid


def make_problem(preset, n=None, terms=10, tree_kind="balanced"):
    """Build a named problem preset ('fp2d-paper' or 'fp4d-paper')."""
    if preset == "fp2d-paper":
        n = 50 if n is None else n
        f0 = ic_2d(n, tree_kind)
        drift = DRIFT_2D_PAPER
        d = 2
    elif preset == "fp4d-paper":
        n = 20 if n is None else n
        f0 = ic_4d(n, terms, tree_kind)
        drift = DRIFT_4D_PAPER
        d = 4
    else:
        raise InputError(f"unknown problem preset {preset!r}")
    return FPProblem(
        name=preset,
        d=d,
        n=n,
        drift=drift,
        operator=build_fp_operator(d, n, drift),
        f0=f0,
        grid=PeriodicGrid(n),
    )


PRESETS = ("fp2d-paper", "fp4d-paper")
