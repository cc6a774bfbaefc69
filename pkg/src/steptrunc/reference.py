"""Dense full-tensor reference integration and steady-state detection.

Classical RK4 over :func:`steptrunc.kron.apply_dense`; the operator matrix
is never assembled, so the 4D reference stays feasible.  This is the ground
truth that all low-rank error curves are measured against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kron, spectral
from .dense import DenseTensor
from .errors import InputError, NumericalError, SteadyStateTimeout


def rk4_step(op, f, dt):
    """One classical fourth-order Runge-Kutta step."""
    k1 = kron.apply_dense(op, f).array
    k2 = kron.apply_dense(op, DenseTensor(f.array + 0.5 * dt * k1)).array
    k3 = kron.apply_dense(op, DenseTensor(f.array + 0.5 * dt * k2)).array
    k4 = kron.apply_dense(op, DenseTensor(f.array + dt * k3)).array
    return DenseTensor(f.array + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def integrate_dense(op, f0, dt, n_steps, snapshot_stride=0, callback=None):
    """RK4 from f0 for n_steps; returns (final state, snapshots dict).

    Snapshots keyed by step index are taken every `snapshot_stride` steps
    (0 disables them).  `callback(step, state)` runs after every step.
    """
    if n_steps < 0:
        raise InputError(f"step count must be nonnegative, got {n_steps}")
    state = f0
    snapshots = {}
    for k in range(1, n_steps + 1):
        state = rk4_step(op, state, dt)
        if not np.isfinite(state.array).all():
            raise NumericalError(f"dense reference diverged at step {k}")
        if snapshot_stride and k % snapshot_stride == 0:
            snapshots[k] = state.copy()
        if callback is not None:
            callback(k, state)
    return state, snapshots


@dataclass
class SteadyResult:
    state: DenseTensor
    t: float
    steps: int
    residuals: np.ndarray


def run_to_steady(op, f0, dt, tol, grid, max_steps=2_000_000):
    """Integrate until the weighted residual ||N f||_L2 drops below tol.

    Returns the steady state, its hitting time, and the full residual
    history (useful for checking the tail decreases monotonically).  Raises
    :class:`SteadyStateTimeout` with the last residual if the cap is hit.
    """
    if tol <= 0:
        raise InputError(f"steady-state tolerance must be positive, got {tol}")
    state = f0
    residuals = []
    resid = spectral.l2_norm(kron.apply_dense(op, state), grid)
    if resid < tol:
        return SteadyResult(state=state, t=0.0, steps=0, residuals=np.array([resid]))
    residuals.append(resid)
    for k in range(1, max_steps + 1):
        state = rk4_step(op, state, dt)
        resid = spectral.l2_norm(kron.apply_dense(op, state), grid)
        residuals.append(resid)
        if not np.isfinite(resid):
            raise NumericalError(f"steady-state run diverged at step {k}")
        if resid < tol:
            return SteadyResult(
                state=state, t=k * dt, steps=k, residuals=np.array(residuals)
            )
    raise SteadyStateTimeout(
        f"residual still {residuals[-1]:.3e} after {max_steps} steps "
        f"(tolerance {tol:.3e})",
        last_residual=residuals[-1],
        steps=max_steps,
    )
