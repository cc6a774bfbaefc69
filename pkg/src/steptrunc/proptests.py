"""Randomized property suites, runnable from the CLI and reused by the tests.

Each suite returns a list of (check name, passed, detail) tuples.  The
random streams are seeded, so a (suite, seed, count) triple is reproducible.
"""

from __future__ import annotations

import numpy as np

from . import htucker, matrix_manifold as mm
from .dense import DenseTensor, matricize
from .errors import InputError
from .htucker import DimensionTree, TruncationControl

SUITES = ("truncation", "prop5-equivalence", "manifold")


def random_htensor(rng, dims, rank, noise_rank=0, noise_scale=0.0, tree=None):
    """Random HT tensor, optionally plus a small-norm random HT perturbation."""
    if tree is None:
        tree = DimensionTree.balanced(len(dims))

    def draw(rank_of):
        leaves = [rng.standard_normal((n, rank_of)) for n in dims]
        transfers = {}
        for i, node in enumerate(tree.nodes):
            if node.is_leaf:
                continue
            rt = 1 if i == 0 else rank_of
            transfers[i] = rng.standard_normal((rank_of, rank_of, rt))
        return htucker.HTensor(tree, leaves, transfers)

    base = draw(rank)
    if noise_rank and noise_scale:
        noise = draw(noise_rank)
        amount = noise_scale * base.norm() / max(noise.norm(), 1e-300)
        return htucker.linear_combine(1.0, base, amount, noise)
    return base


def quasi_best_lower_bound(t, ranks):
    """Eckart-Young lower bound on any fixed-ranks approximation error.

    Every candidate with the given node ranks has matricization rank at
    most r_node per node, so the discarded singular-value tail of each
    dense unfolding bounds its error from below; the max over nodes is the
    reported bound.  Independent of the hierarchical code path.
    """
    bound = 0.0
    for modes, r in ranks.items():
        if len(modes) == t.ndim:
            continue
        s = np.linalg.svd(matricize(t, modes), compute_uv=False)
        bound = max(bound, float(np.sqrt((s[r:] ** 2).sum())))
    return bound


def truncation_suite(seed=0, count=60):
    """Dense-verified tolerance guarantees, Eckart-Young agreement, quasi-optimality."""
    rng = np.random.default_rng(seed)
    guarantee_bad = []
    eckart_bad = []
    quasi_bad = []
    for trial in range(count):
        d = int(rng.integers(2, 5))
        dims = tuple(int(rng.integers(2, 9)) for _ in range(d))
        base_rank = int(rng.integers(1, 5))
        h = random_htensor(
            rng,
            dims,
            base_rank,
            noise_rank=int(rng.integers(1, 4)),
            noise_scale=10.0 ** rng.uniform(-6, -1),
        )
        norm = h.norm()
        eps = norm * 10.0 ** rng.uniform(-8, -0.5)
        out, est, ranks = htucker.truncate(h, TruncationControl(eps=eps))
        dense_in = h.to_dense().array
        dense_out = out.to_dense().array
        true_err = float(np.linalg.norm(dense_in - dense_out))
        slack = 1e-10 * norm
        if not (true_err <= est + slack and est <= eps):
            guarantee_bad.append((trial, true_err, est, eps))

        if d == 2:
            r = max(1, min(dims) - 1)
            fixed, _, _ = htucker.truncate(h, TruncationControl(max_rank=r))
            ht_err = float(np.linalg.norm(dense_in - fixed.to_dense().array))
            best_err = mm.truncation_error(dense_in, r)
            if abs(ht_err - best_err) > 1e-11 * max(norm, 1.0):
                eckart_bad.append((trial, ht_err, best_err))

        if all(nk <= 6 for nk in dims):
            bound = quasi_best_lower_bound(DenseTensor(dense_in), ranks)
            limit = htucker.quasi_opt_factor(d) * bound + slack
            if true_err > limit:
                quasi_bad.append((trial, true_err, limit))
    return [
        (
            "truncation/tolerance-guarantee",
            not guarantee_bad,
            f"{count - len(guarantee_bad)}/{count} verified against the dense oracle",
        ),
        (
            "truncation/eckart-young-d2",
            not eckart_bad,
            "fixed-rank d=2 truncation matches matrix SVD error"
            + ("" if not eckart_bad else f"; failures: {eckart_bad[:3]}"),
        ),
        (
            "truncation/quasi-optimality",
            not quasi_bad,
            "error within sqrt(2d-3) of the per-node Eckart-Young bound"
            + ("" if not quasi_bad else f"; failures: {quasi_bad[:3]}"),
        ),
    ]


def random_triple(rng, n1=8, n2=7, r=3, sigma_range=(0.5, 3.0)):
    q, _ = np.linalg.qr(rng.standard_normal((n1, r)))
    v, _ = np.linalg.qr(rng.standard_normal((n2, r)))
    sigma = np.sort(rng.uniform(*sigma_range, size=r))[::-1]
    # enforce a comfortable spectral gap so curvature terms stay moderate
    sigma += np.arange(r, 0, -1) * 0.25
    return mm.SVDTriple(q, sigma, v)


def equivalence_suite(seed=0, count=40):
    """Verdict agreement between the normal-component and truncation indicators."""
    rng = np.random.default_rng(seed)
    dts = [2.0**-k for k in range(4, 13)]
    disagreements = []
    misclassified = []
    for trial in range(count):
        f = random_triple(rng)
        generic = trial % 2 == 0
        v = rng.standard_normal((f.q.shape[0], f.v.shape[0]))
        if not generic:
            v = mm.tangent_project(f, v)
        report = mm.equivalence_check(f, v, dts)
        if not report.agree:
            disagreements.append(trial)
        expected_bounded = not generic
        if report.k_bounded != expected_bounded:
            misclassified.append(trial)
    return [
        (
            "prop5/verdict-agreement",
            not disagreements,
            f"{count - len(disagreements)}/{count} instances agree",
        ),
        (
            "prop5/expected-verdicts",
            not misclassified,
            "tangent perturbations bounded, generic ones unbounded",
        ),
    ]


def rk4_system(state, rhs, dt):
    """Generic RK4 for a tuple-valued state; rhs maps tuple -> tuple."""
    k1 = rhs(state)
    k2 = rhs(tuple(s + 0.5 * dt * k for s, k in zip(state, k1)))
    k3 = rhs(tuple(s + 0.5 * dt * k for s, k in zip(state, k2)))
    k4 = rhs(tuple(s + dt * k for s, k in zip(state, k3)))
    return tuple(
        s + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d)
        for s, a, b, c, d in zip(state, k1, k2, k3, k4)
    )


def co_integrate_do_bo(rng, t_final=0.1, dt=1e-3, n1=8, n2=7, r=3):
    """Integrate the SVD-form and bi-orthogonal flows side by side.

    Both parametrize the same fixed-rank trajectory of the linear matrix
    ODE f' = L f + f R; returns the largest reconstruction discrepancy.
    """
    left = rng.standard_normal((n1, n1)) / n1
    right = rng.standard_normal((n2, n2)) / n2

    def field(m):
        return left @ m + m @ right

    f = random_triple(rng, n1, n2, r)
    svd_state = (f.sigma.copy(), f.q.copy(), f.v.copy())
    do_state = (f.sigma * np.eye(r), f.q.copy(), f.v.copy())

    def svd_flow(state):
        sigma, q, v = state
        triple = mm.SVDTriple(q, sigma, v)
        nval = field(triple.matrix())
        return mm.svd_rhs(triple, nval)

    def do_flow(state):
        a, w, b = state
        st = mm.DOBOState(w=w, a=a, b=b)
        nval = field(st.matrix())
        return mm.do_rhs(st, nval)

    worst = 0.0
    steps = round(t_final / dt)
    for _ in range(steps):
        svd_state = rk4_system(svd_state, svd_flow, dt)
        do_state = rk4_system(do_state, do_flow, dt)
        sigma, q, v = svd_state
        a, w, b = do_state
        gap = np.linalg.norm((q * sigma) @ v.T - w @ a @ b.T)
        worst = max(worst, float(gap))
    return worst


def manifold_suite(seed=0, count=30):
    """Projector identities, Eckart-Young optimality, derivative checks, DO/BO."""
    rng = np.random.default_rng(seed)
    results = []

    projector_bad = 0
    pythagoras_bad = 0
    for _ in range(count):
        f = random_triple(rng)
        u = rng.standard_normal((f.q.shape[0], f.v.shape[0]))
        w = rng.standard_normal((f.q.shape[0], f.v.shape[0]))
        pu = mm.tangent_project(f, u)
        if np.linalg.norm(mm.tangent_project(f, pu) - pu) > 1e-11 * np.linalg.norm(u):
            projector_bad += 1
        lhs = float(np.sum(pu * w))
        rhs = float(np.sum(u * mm.tangent_project(f, w)))
        if abs(lhs - rhs) > 1e-11 * np.linalg.norm(u) * np.linalg.norm(w):
            projector_bad += 1
        normal = mm.normal_component_norm(f, u)
        total = np.linalg.norm(u) ** 2
        if abs(total - (np.linalg.norm(pu) ** 2 + normal**2)) > 1e-9 * total:
            pythagoras_bad += 1
    results.append(
        (
            "manifold/projector",
            projector_bad == 0,
            "idempotent and self-adjoint to 1e-11",
        )
    )
    results.append(
        ("manifold/pythagoras", pythagoras_bad == 0, "tangent/normal split is orthogonal")
    )

    optimality_bad = 0
    competitors = max(10, 1000 // count)
    for _ in range(count):
        m = rng.standard_normal((9, 7))
        r = 3
        best_err = mm.truncation_error(m, r)
        for _ in range(competitors):
            a = rng.standard_normal((9, r))
            coef, *_ = np.linalg.lstsq(a, m, rcond=None)
            if np.linalg.norm(m - a @ coef) < best_err - 1e-12:
                optimality_bad += 1
    results.append(
        (
            "manifold/eckart-young-optimality",
            optimality_bad == 0,
            f"best truncation beat {competitors} random competitors per trial",
        )
    )

    slope_bad = []
    hs = np.array([1e-3, 1e-4, 1e-5, 1e-6])
    for trial in range(count):
        f = random_triple(rng)
        v = rng.standard_normal((f.q.shape[0], f.v.shape[0]))
        base = f.matrix()
        pv = mm.tangent_project(f, v)
        errs = []
        for h in hs:
            fd = (mm.best_truncate_matrix(base + h * v, f.rank)[0] - base) / h
            errs.append(np.linalg.norm(fd - pv))
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        if slope < 0.9:
            slope_bad.append((trial, slope))
    results.append(
        (
            "manifold/truncation-jacobian",
            not slope_bad,
            "finite differences of best truncation converge to the tangent projector"
            + ("" if not slope_bad else f"; bad slopes {slope_bad[:3]}"),
        )
    )

    gap_bad = []
    for trial in range(count):
        f = random_triple(rng)
        v = rng.standard_normal((f.q.shape[0], f.v.shape[0]))
        dt = 2.0**-6
        ratio = mm.consistency_gap(f, v, dt / 2) / mm.consistency_gap(f, v, dt)
        if not (0.15 <= ratio <= 0.35):
            gap_bad.append((trial, ratio))
    results.append(
        (
            "manifold/consistency-gap-order",
            not gap_bad,
            "halving dt quarters the tangent-surrogate gap"
            + ("" if not gap_bad else f"; bad ratios {gap_bad[:3]}"),
        )
    )

    perturb_bad = []
    for trial in range(count):
        f = random_triple(rng)
        nval = rng.standard_normal((f.q.shape[0], f.v.shape[0]))
        defects = []
        for k in (5, 6, 7, 8):
            dt = 2.0**-k
            stepped = mm.svd_perturb_step(f, nval, dt)
            exact, _ = mm.best_truncate_matrix(f.matrix() + dt * nval, f.rank)
            defects.append(np.linalg.norm(stepped.matrix() - exact))
        ratios = [b / a for a, b in zip(defects, defects[1:])]
        if not all(0.2 <= rho <= 0.3 for rho in ratios):
            perturb_bad.append((trial, ratios))
    results.append(
        (
            "manifold/svd-perturbation-order",
            not perturb_bad,
            "first-order update defect is O(dt^2)"
            + ("" if not perturb_bad else f"; bad ratios {perturb_bad[:2]}"),
        )
    )

    worst = max(co_integrate_do_bo(rng) for _ in range(max(3, count // 10)))
    results.append(
        (
            "manifold/do-bo-equivalence",
            worst <= 1e-6,
            f"largest factorization gap over [0, 0.1] was {worst:.2e}",
        )
    )
    return results


def run_suite(name, seed=0, count=None):
    if name == "truncation":
        return truncation_suite(seed, count or 60)
    if name == "prop5-equivalence":
        return equivalence_suite(seed, count or 40)
    if name == "manifold":
        return manifold_suite(seed, count or 30)
    if name == "all":
        out = []
        for suite in SUITES:
            out.extend(run_suite(suite, seed, count))
        return out
    raise InputError(f"unknown suite {name!r}; choose from {SUITES + ('all',)}")
