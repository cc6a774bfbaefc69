"""Step-truncation time integrators with per-step truncation-threshold schedules.

Each scheme performs a conventional explicit step in the ambient tensor
space with tolerance-mode truncations inserted at fixed places:

* Euler:     f1 = T_a( f + dt * T_b(N f) )
* midpoint:  f1 = T_a( f + dt * T_b( N(f + dt/2 * T_g(N f)) ) )
* AB(s):     f1 = T_a( f + dt * T_b( sum_j b_j T_g(j)(N f_{k-j}) ) )

The thresholds scale with powers of dt chosen so each scheme keeps its
classical order: the solution-level tolerance is O(dt^{p+1}), the increment
tolerance O(dt^p), inner tolerances one power lower.  Threshold arithmetic
is done in decimal so published threshold tables are matched digit for
digit.  In fixed-rank mode all tolerances are replaced by a single rank cap
applied to the solution truncation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from decimal import Decimal

import numpy as np

from . import htucker, kron, spectral
from .errors import InputError, NumericalError
from .htucker import TruncationControl

CSV_SCHEMA_VERSION = "steptrunc step-records csv v1"
CSV_COLUMNS = (
    "k,t,max_rank,ranks,eps_alpha,eps_beta,eps_gamma,"
    "trunc_err_est,mass,err_l2,wall_ms"
)


@dataclass(frozen=True)
class SchemeSpec:
    """An explicit scheme: forward Euler, explicit midpoint, or AB(s)."""

    kind: str
    steps: int = 1

    def __post_init__(self):
        if self.kind not in ("euler", "midpoint", "ab"):
            raise InputError(f"unknown scheme kind {self.kind!r}")
        if self.kind == "ab" and not (1 <= self.steps <= 5):
            raise InputError(f"Adams-Bashforth supports 1..5 steps, got {self.steps}")

    @classmethod
    def euler(cls):
        return cls("euler")

    @classmethod
    def midpoint(cls):
        return cls("midpoint")

    @classmethod
    def adams_bashforth(cls, s):
        return cls("ab", steps=s)

    @classmethod
    def parse(cls, name):
        name = name.strip().lower()
        if name == "euler":
            return cls.euler()
        if name == "midpoint":
            return cls.midpoint()
        if name.startswith("ab") and name[2:].isdigit():
            return cls.adams_bashforth(int(name[2:]))
        raise InputError(f"unknown scheme {name!r}")

    @property
    def order(self):
        return {"euler": 1, "midpoint": 2, "ab": self.steps}[self.kind]

    @property
    def label(self):
        return self.kind if self.kind != "ab" else f"ab{self.steps}"


def ab_coefficients(s):
    """Adams-Bashforth weights b_0..b_{s-1} (order s), newest sample first."""
    table = {
        1: (1.0,),
        2: (3.0 / 2.0, -1.0 / 2.0),
        3: (23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0),
        4: (55.0 / 24.0, -59.0 / 24.0, 37.0 / 24.0, -9.0 / 24.0),
        5: (
            1901.0 / 720.0,
            -2774.0 / 720.0,
            2616.0 / 720.0,
            -1274.0 / 720.0,
            251.0 / 720.0,
        ),
    }
    if s not in table:
        raise InputError(f"Adams-Bashforth weights available for s in 1..5, got {s}")
    return table[s]


@dataclass(frozen=True)
class ThresholdPolicy:
    """Scaling constants in front of the dt powers.

    Euler uses (m1, m2); midpoint uses (a, b, g[0]); AB(s) uses
    (a, b, g[0..s-1]), with the last g entry repeated if fewer are given.
    Defaults are the constants used throughout the experiments here.
    """

    m1: float = 100.0
    m2: float = 100.0
    a: float = 1000.0
    b: float = 1000.0
    g: tuple = (100.0,)

    def __post_init__(self):
        values = (self.m1, self.m2, self.a, self.b, *self.g)
        if any(c < 0 for c in values):
            raise InputError("threshold scaling constants must be nonnegative")

    def g_for(self, count):
        if len(self.g) >= count:
            return self.g[:count]
        return self.g + (self.g[-1],) * (count - len(self.g))


@dataclass(frozen=True)
class Thresholds:
    """Per-step tolerances: solution (alpha), increment (beta), inner (gamma)."""

    eps_alpha: float
    eps_beta: float
    eps_gamma: tuple = ()


def _dec_scaled_power(constant, dt, power):
    # Exact in decimal for decimal-notation inputs, then rounded once to float.
    return float(Decimal(repr(float(constant))) * Decimal(repr(float(dt))) ** power)


def threshold_schedule(scheme, dt, policy):
    """Tolerances for one step of the given scheme at step size dt."""
    if dt <= 0:
        raise InputError(f"step size must be positive, got {dt}")
    if scheme.kind == "euler":
        return Thresholds(
            eps_alpha=_dec_scaled_power(policy.m2, dt, 2),
            eps_beta=_dec_scaled_power(policy.m1, dt, 1),
        )
    if scheme.kind == "midpoint":
        return Thresholds(
            eps_alpha=_dec_scaled_power(policy.a, dt, 3),
            eps_beta=_dec_scaled_power(policy.b, dt, 2),
            eps_gamma=(_dec_scaled_power(policy.g_for(1)[0], dt, 1),),
        )
    s = scheme.steps
    return Thresholds(
        eps_alpha=_dec_scaled_power(policy.a, dt, s + 1),
        eps_beta=_dec_scaled_power(policy.b, dt, s),
        eps_gamma=tuple(_dec_scaled_power(gj, dt, s) for gj in policy.g_for(s)),
    )


@dataclass
class StepRecord:
    """Telemetry for one accepted step."""

    k: int
    t: float
    ranks: tuple
    max_rank: int
    eps_alpha: float = 0.0
    eps_beta: float = 0.0
    eps_gamma: float = 0.0
    est_alpha: float = 0.0
    est_beta: float = 0.0
    est_gamma: float = 0.0
    mass: float | None = None
    err_l2: float | None = None
    wall_ms: float = 0.0

    @property
    def trunc_err_est(self):
        return self.est_alpha


def _truncate(h, eps):
    return htucker.truncate(h, TruncationControl(eps=eps))


def step_euler(h, op, dt, thresholds):
    """One rank-adaptive forward Euler step: T_a(f + dt * T_b(N f))."""
    rhs = kron.apply_ht(op, h)
    rhs_t, est_beta, _ = _truncate(rhs, thresholds.eps_beta)
    pre = htucker.linear_combine(1.0, h, dt, rhs_t)
    out, est_alpha, _ = _truncate(pre, thresholds.eps_alpha)
    return out, {"est_alpha": est_alpha, "est_beta": est_beta, "est_gamma": 0.0}


def step_midpoint(h, op, dt, thresholds):
    """One rank-adaptive explicit midpoint step."""
    k1 = kron.apply_ht(op, h)
    k1_t, est_gamma, _ = _truncate(k1, thresholds.eps_gamma[0])
    half = htucker.linear_combine(1.0, h, 0.5 * dt, k1_t)
    k2 = kron.apply_ht(op, half)
    k2_t, est_beta, _ = _truncate(k2, thresholds.eps_beta)
    pre = htucker.linear_combine(1.0, h, dt, k2_t)
    out, est_alpha, _ = _truncate(pre, thresholds.eps_alpha)
    return out, {
        "est_alpha": est_alpha,
        "est_beta": est_beta,
        "est_gamma": est_gamma,
    }


def step_ab(history, op, dt, thresholds, weights=None):
    """One rank-adaptive Adams-Bashforth step.

    `history` holds the last s states, newest first.
    """
    s = len(history)
    if weights is None:
        weights = ab_coefficients(s)
    if len(weights) != s:
        raise InputError(f"got {len(weights)} weights for {s} history states")
    if len(thresholds.eps_gamma) != s:
        raise InputError("need one inner tolerance per history state")
    est_gamma = 0.0
    acc = None
    for j, (fj, bj) in enumerate(zip(history, weights)):
        gj = kron.apply_ht(op, fj)
        gj_t, est, _ = _truncate(gj, thresholds.eps_gamma[j])
        est_gamma = max(est_gamma, est)
        acc = (
            htucker.scale(gj_t, bj)
            if acc is None
            else htucker.linear_combine(1.0, acc, bj, gj_t)
        )
    acc_t, est_beta, _ = _truncate(acc, thresholds.eps_beta)
    pre = htucker.linear_combine(1.0, history[0], dt, acc_t)
    out, est_alpha, _ = _truncate(pre, thresholds.eps_alpha)
    return out, {
        "est_alpha": est_alpha,
        "est_beta": est_beta,
        "est_gamma": est_gamma,
    }


def step_fixed_rank(history, op, dt, cap, weights=None):
    """One fixed-rank step: untruncated increment, single rank-capped truncation."""
    s = len(history)
    if weights is None:
        weights = ab_coefficients(s)
    acc = None
    for fj, bj in zip(history, weights):
        gj = kron.apply_ht(op, fj)
        acc = (
            htucker.scale(gj, bj)
            if acc is None
            else htucker.linear_combine(1.0, acc, bj, gj)
        )
    pre = htucker.linear_combine(1.0, history[0], dt, acc)
    out, est, _ = htucker.truncate(pre, TruncationControl(max_rank=cap))
    return out, {"est_alpha": est, "est_beta": 0.0, "est_gamma": 0.0}


def _steps_for(T, dt):
    n_float = T / dt
    n = round(n_float)
    if n < 1 or abs(n_float - n) > 1e-9 * max(1.0, abs(n_float)):
        raise InputError(f"horizon T={T} is not an integer multiple of dt={dt}")
    return n


@dataclass
class IntegrationResult:
    records: list
    state: htucker.HTensor
    scheme: SchemeSpec
    dt: float

    @property
    def final_time(self):
        return self.records[-1].t if self.records else 0.0

    def max_rank_over_run(self):
        return max(r.max_rank for r in self.records)


def integrate(
    op,
    f0,
    scheme,
    dt,
    T,
    policy=None,
    mode="adaptive",
    rank_cap=None,
    grid=None,
    reference=None,
    checkpoint=None,
    collect_timings=False,
):
    """Run a step-truncation scheme from f0 to time T = N * dt.

    `mode` is "adaptive" (tolerance schedule from `policy`) or "fixed-rank"
    (`rank_cap` applied to the solution truncation, untruncated increments).
    `grid` enables the mass diagnostic; `reference` is an optional callable
    ``step_index -> DenseTensor`` used for the per-step L2 error.
    `checkpoint` is an optional ``(stride, callback)`` pair; the callback
    receives ``(step_index, state)``.  AB(s) startup: the first s-1 steps
    use the rank-adaptive midpoint scheme (sharing a, b and g[0]), keeping
    the overall order for s = 2.

    Raises on NaN/inf with the failing step index; records are emitted for
    every completed step.
    """
    if policy is None:
        policy = ThresholdPolicy()
    if mode not in ("adaptive", "fixed-rank"):
        raise InputError(f"unknown integration mode {mode!r}")
    if mode == "fixed-rank" and rank_cap is None:
        raise InputError("fixed-rank mode needs a rank cap")
    n_steps = _steps_for(T, dt)
    thresholds = threshold_schedule(scheme, dt, policy)
    mid_thresholds = threshold_schedule(SchemeSpec.midpoint(), dt, policy)
    weights = ab_coefficients(scheme.steps) if scheme.kind == "ab" else None

    records = []
    history = [f0]
    state = f0
    for k in range(n_steps):
        started = time.perf_counter() if collect_timings else 0.0
        if mode == "fixed-rank":
            if scheme.kind == "euler":
                state, ests = step_fixed_rank([state], op, dt, rank_cap)
            elif scheme.kind == "midpoint":
                raise InputError("fixed-rank midpoint is not provided; use euler/ab")
            else:
                if len(history) < scheme.steps:
                    state, ests = step_fixed_rank([state], op, dt, rank_cap)
                else:
                    state, ests = step_fixed_rank(
                        history[: scheme.steps], op, dt, rank_cap, weights
                    )
            used = Thresholds(0.0, 0.0, (0.0,))
        elif scheme.kind == "euler":
            state, ests = step_euler(state, op, dt, thresholds)
            used = thresholds
        elif scheme.kind == "midpoint":
            state, ests = step_midpoint(state, op, dt, thresholds)
            used = thresholds
        else:
            if len(history) < scheme.steps:
                state, ests = step_midpoint(history[0], op, dt, mid_thresholds)
                used = mid_thresholds
            else:
                state, ests = step_ab(
                    history[: scheme.steps], op, dt, thresholds, weights
                )
                used = thresholds
        history.insert(0, state)
        del history[max(scheme.steps, 1):]

        norm = state.norm()
        if not np.isfinite(norm):
            raise NumericalError(f"non-finite state norm at step {k + 1}")

        record = StepRecord(
            k=k + 1,
            t=(k + 1) * dt,
            ranks=state.ranks_in_node_order(),
            max_rank=state.max_rank(),
            eps_alpha=used.eps_alpha,
            eps_beta=used.eps_beta,
            eps_gamma=max(used.eps_gamma) if used.eps_gamma else 0.0,
            est_alpha=ests["est_alpha"],
            est_beta=ests["est_beta"],
            est_gamma=ests["est_gamma"],
        )
        if grid is not None:
            record.mass = spectral.quad_integral(state, grid)
        if reference is not None:
            ref = reference(k + 1)
            if ref is not None:
                diff = state.to_dense().array - ref.array
                weight = grid.weight if grid is not None else 1.0
                record.err_l2 = float(
                    weight ** (len(state.dims) / 2.0) * np.linalg.norm(diff)
                )
        if collect_timings:
            record.wall_ms = (time.perf_counter() - started) * 1e3
        records.append(record)
        if checkpoint is not None:
            stride, callback = checkpoint
            if stride > 0 and (k + 1) % stride == 0:
                callback(k + 1, state)
    return IntegrationResult(records=records, state=state, scheme=scheme, dt=dt)


def _format_float(value):
    return repr(float(value))


def write_records_csv(path, records, extra_header=()):
    """Write step records in the fixed, versioned CSV layout.

    `ranks` is semicolon-joined in dimension-tree node order (preorder,
    root first).  All floats use shortest round-trip decimal form, so runs
    with identical inputs produce byte-identical files.
    """
    with open(path, "w") as fh:
        fh.write(f"# {CSV_SCHEMA_VERSION}\n")
        for line in extra_header:
            fh.write(f"# {line}\n")
        fh.write(CSV_COLUMNS + "\n")
        for r in records:
            fields = [
                str(r.k),
                _format_float(r.t),
                str(r.max_rank),
                ";".join(str(x) for x in r.ranks),
                _format_float(r.eps_alpha),
                _format_float(r.eps_beta),
                _format_float(r.eps_gamma),
                _format_float(r.trunc_err_est),
                "" if r.mass is None else _format_float(r.mass),
                "" if r.err_l2 is None else _format_float(r.err_l2),
                _format_float(r.wall_ms),
            ]
            fh.write(",".join(fields) + "\n")


def fit_order(dts, errors):
    """Least-squares slope and intercept constant of log(err) vs log(dt)."""
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if np.any(errors <= 0):
        raise NumericalError("cannot fit an order through non-positive errors")
    slope, intercept = np.polyfit(np.log(dts), np.log(errors), 1)
    return float(slope), float(np.exp(intercept))


def error_constant(dts, errors, order):
    """Smallest Q with err <= Q * dt^order across the sweep."""
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    return float(np.max(errors / dts**order))
