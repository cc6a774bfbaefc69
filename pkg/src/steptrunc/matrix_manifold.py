"""Fixed-rank matrix manifold machinery: the d=2 specialization.

Best (Eckart-Young) truncation, the tangent-space projector and its role as
the Jacobian of best truncation, first-order SVD perturbation updates, and
the dynamically (bi-)orthogonal factored ODE systems.  Everything here is a
plain-numpy pure function over small matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, DegenerateSpectrumError, InputError


@dataclass(frozen=True)
class SVDTriple:
    """Reduced rank-r factorization f = q @ diag(sigma) @ v.T.

    sigma is strictly positive and sorted in descending order; q and v have
    orthonormal columns.  Column signs are fixed by making the largest-
    magnitude entry of each q column positive, so perturbation comparisons
    are well-posed.
    """

    q: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        r = len(self.sigma)
        if self.q.shape[1] != r or self.v.shape[1] != r:
            raise InputError("factor shapes inconsistent with rank")
        if np.any(np.diff(self.sigma) > 0) or np.any(self.sigma <= 0):
            raise InputError("singular values must be positive and descending")

    @property
    def rank(self):
        return len(self.sigma)

    def matrix(self):
        return (self.q * self.sigma) @ self.v.T

    @classmethod
    def from_matrix(cls, m, r):
        m = np.asarray(m, dtype=float)
        if not (1 <= r <= min(m.shape)):
            raise InputError(f"rank {r} out of range for shape {m.shape}")
        u, s, vt = np.linalg.svd(m, full_matrices=False)
        u, s, v = u[:, :r], s[:r], vt[:r].T
        signs = np.sign(u[np.abs(u).argmax(axis=0), np.arange(r)])
        signs[signs == 0] = 1.0
        return cls(u * signs, s, v * signs)


def best_truncate_matrix(m, r):
    """Optimal rank-r approximation; returns (matrix, SVDTriple).

    The dropped error is sqrt of the sum of squared trailing singular
    values (Eckart-Young).
    """
    triple = SVDTriple.from_matrix(m, r)
    return triple.matrix(), triple


def truncation_error(m, r):
    """Frobenius distance from m to its best rank-r approximation."""
    s = np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)
    return float(np.sqrt((s[r:] ** 2).sum()))


def tangent_project(f, v):
    """Orthogonal projection of v onto the tangent space at f.

    P_f v = Q Q^T v + v V V^T - Q Q^T v V V^T; idempotent and self-adjoint.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (f.q.shape[0], f.v.shape[0]):
        raise InputError(f"matrix shape {v.shape} does not match the base point")
    qv = f.q @ (f.q.T @ v)
    vv = (v @ f.v) @ f.v.T
    return qv + vv - f.q @ (f.q.T @ vv)


def normal_component_norm(f, v):
    """Norm of the part of v not representable in the tangent space at f."""
    v = np.asarray(v, dtype=float)
    return float(np.linalg.norm(v - tangent_project(f, v)))


def h_matrix(sigma, gap_tol=1e-10):
    """Skew-symmetric matrix of inverse squared-singular-value differences.

    H[i, j] = 1 / (sigma_j^2 - sigma_i^2) off the diagonal.  Defined only
    for well-separated spectra; near-degenerate input raises.
    """
    sigma = np.asarray(sigma, dtype=float)
    sq = sigma**2
    diff = sq[None, :] - sq[:, None]
    scale = max(sq.max(), 1.0)
    off = ~np.eye(len(sigma), dtype=bool)
    if np.any(np.abs(diff[off]) <= gap_tol * scale):
        gap = np.abs(diff[off]).min()
        raise DegenerateSpectrumError(
            f"singular values too close (min squared gap {gap:.3e}); "
            "the first-order SVD update is undefined"
        )
    h = np.zeros_like(diff)
    h[off] = 1.0 / diff[off]
    return h


def svd_perturb_step(f, nval, dt):
    """First-order update of (Q, Sigma, V) for the step f -> f + dt * nval.

    Matches the exact rank-r SVD of f + dt*nval up to O(dt^2).
    """
    nval = np.asarray(nval, dtype=float)
    h = h_matrix(f.sigma)
    s = np.diag(f.sigma)
    s_inv = np.diag(1.0 / f.sigma)
    qnv = f.q.T @ nval @ f.v
    sigma_new = f.sigma + dt * np.diag(qnv)
    q_new = (
        f.q
        + dt * f.q @ (h * (qnv @ s + s @ qnv.T))
        + dt * (nval @ f.v - f.q @ (f.q.T @ nval @ f.v)) @ s_inv
    )
    v_new = (
        f.v
        + dt * f.v @ (h * (s @ qnv + qnv.T @ s))
        + dt * (nval.T @ f.q - f.v @ (f.v.T @ nval.T @ f.q)) @ s_inv
    )
    order = np.argsort(sigma_new)[::-1]
    return SVDTriple(q_new[:, order], sigma_new[order], v_new[:, order])


def svd_rhs(f, nval):
    """Right-hand sides (sigma_dot, q_dot, v_dot) of the fixed-rank SVD flow."""
    nval = np.asarray(nval, dtype=float)
    h = h_matrix(f.sigma)
    s = np.diag(f.sigma)
    s_inv = np.diag(1.0 / f.sigma)
    qnv = f.q.T @ nval @ f.v
    sigma_dot = np.diag(qnv).copy()
    q_dot = f.q @ (h * (qnv @ s + s @ qnv.T)) + (
        nval @ f.v - f.q @ (f.q.T @ nval @ f.v)
    ) @ s_inv
    v_dot = f.v @ (h * (s @ qnv + qnv.T @ s)) + (
        nval.T @ f.q - f.v @ (f.v.T @ nval.T @ f.q)
    ) @ s_inv
    return sigma_dot, q_dot, v_dot


@dataclass(frozen=True)
class DOBOState:
    """Dynamically bi-orthogonal parametrization f = w @ a @ b.T."""

    w: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def matrix(self):
        return self.w @ self.a @ self.b.T


def do_rhs(state, nval, cond_tol=1e-12):
    """Right-hand sides (a_dot, w_dot, b_dot) of the bi-orthogonal flow."""
    nval = np.asarray(nval, dtype=float)
    w, a, b = state.w, state.a, state.b
    svals = np.linalg.svd(a, compute_uv=False)
    if svals[-1] <= cond_tol * svals[0]:
        raise ConditioningError(
            f"coefficient matrix numerically singular (sigma_min={svals[-1]:.3e})",
            sigma_min=float(svals[-1]),
        )
    a_inv = np.linalg.inv(a)
    a_dot = w.T @ nval @ b
    w_dot = (nval @ b - w @ (w.T @ nval @ b)) @ a_inv
    b_dot = (nval.T @ w - b @ (b.T @ nval.T @ w)) @ a_inv.T
    return a_dot, w_dot, b_dot


def consistency_gap(f, v, dt):
    """Distance between rank-r truncation of an Euler step and its tangent surrogate.

    || best(f + dt*v) - (f + dt * P_f v) ||; decays as O(dt^2).
    """
    v = np.asarray(v, dtype=float)
    truncated, _ = best_truncate_matrix(f.matrix() + dt * v, f.rank)
    surrogate = f.matrix() + dt * tangent_project(f, v)
    return float(np.linalg.norm(truncated - surrogate))


@dataclass(frozen=True)
class EquivalenceReport:
    """Boundedness comparison of the two rank-increase indicators.

    khat values are ||(I - P_f) v|| / dt (normal-component form); mhat are
    ||(f + dt v) - best(f + dt v)|| / dt^2 (truncation form).  A sequence is
    ruled bounded when it neither grows materially across the sweep nor
    sits above the roundoff floor while growing.
    """

    dts: np.ndarray
    khat: np.ndarray
    mhat: np.ndarray
    k_bounded: bool
    m_bounded: bool

    @property
    def agree(self):
        return self.k_bounded == self.m_bounded


def _is_bounded(dts, values, floor):
    order = np.argsort(dts)[::-1]
    values = np.asarray(values)[order]
    tail = max(values[-1], 0.0)
    head = max(values[0], 0.0)
    return tail <= 8.0 * head + floor


def equivalence_check(f, v, dts):
    """Evaluate both rank-increase indicators across a step-size sweep."""
    v = np.asarray(v, dtype=float)
    dts = np.asarray(sorted(dts, reverse=True), dtype=float)
    if len(dts) < 2:
        raise InputError("equivalence check needs at least two step sizes")
    base = f.matrix()
    normal = normal_component_norm(f, v)
    khat = normal / dts
    mhat = np.array(
        [
            truncation_error(base + dt * v, f.rank) / dt**2
            for dt in dts
        ]
    )
    floor = 1e-8 * max(np.linalg.norm(v), 1.0)
    return EquivalenceReport(
        dts=dts,
        khat=khat,
        mhat=mhat,
        k_bounded=_is_bounded(dts, khat, floor),
        m_bounded=_is_bounded(dts, mhat, floor),
    )
