"""
Verify Engine – independent oracles behind ``cli.py verify``.

* clipDCD against the projected-gradient QP oracle on random PD box QPs;
* the dense and block-operator clipDCD paths against each other;
* the weighted-subproblem duals (split and printed forms) against a direct
  primal solve with scipy SLSQP on an explicit feature map of K̃;
* the pinball / ε-pinball / hinge duals against the same primal oracle.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import minimize

from models.kernels import KernelSpec, gram
from models.losses import hinge_loss, pinball_eps_loss
from models.svm import HyperParams, make_hyper
from services.hq_engine import WeightedSubproblem, assemble_weighted_dual, pinball_dual, solve_weighted_subproblem
from services.qp_engine import BlockOperator, QpProblem, clipdcd_solve, qp_oracle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    cases: int
    worst: float
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark} {self.name}: {self.cases} case(s), worst={self.worst:.3e} {self.detail}".rstrip()


# ── Primal oracles ──────────────────────────────────────────────────────────

def feature_map(K: np.ndarray) -> np.ndarray:
    """Φ with ΦΦᵀ = K (eigen-factorisation; negative round-off eigenvalues dropped)."""
    vals, vecs = eigh(K)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _slsqp(fun, jac, x0, A, b, n_free: int) -> float:
    """min fun(x) s.t. A x ≥ b and x[n_free:] ≥ 0."""
    bounds = [(None, None)] * n_free + [(0.0, None)] * (x0.size - n_free)
    res = minimize(
        fun, x0, jac=jac, method="SLSQP", bounds=bounds,
        constraints=[{"type": "ineq", "fun": lambda x: A @ x - b, "jac": lambda x: A}],
        options={"ftol": 1e-14, "maxiter": 2000},
    )
    if not res.success:
        logger.debug("[VERIFY] SLSQP: %s", res.message)
    return float(fun(res.x))


def weighted_primal_oracle(sub: WeightedSubproblem, p: float, tau: float, eps: float) -> float:
    """
    min ½‖w‖² + Σ ω_i [(p/2)ξ⁺² + (1−p)ξ⁺ + τ((p/2)ξ⁻² + (1−p)ξ⁻)]
    s.t. ξ⁺ ≥ z − ε, ξ⁻ ≥ −z − ε/τ, ξ± ≥ 0, with z = 1 − y Φw.
    """
    Phi = feature_map(sub.gram)
    n, r = Phi.shape
    Y = sub.labels[:, None] * Phi
    om = sub.omega

    def fun(x):
        w, sp, sm = x[:r], x[r:r + n], x[r + n:]
        return 0.5 * w @ w + om @ (0.5 * p * sp * sp + (1 - p) * sp + tau * (0.5 * p * sm * sm + (1 - p) * sm))

    def jac(x):
        w, sp, sm = x[:r], x[r:r + n], x[r + n:]
        return np.concatenate([w, om * (p * sp + (1 - p)), om * tau * (p * sm + (1 - p))])

    I = np.eye(n)
    # ξ⁺ + yΦw ≥ 1 − ε ;  ξ⁻ − yΦw ≥ −1 − ε/τ
    A = np.block([[Y, I, np.zeros((n, n))], [-Y, np.zeros((n, n)), I]])
    b = np.concatenate([np.full(n, 1 - eps), np.full(n, -1 - eps / tau)])
    x0 = np.concatenate([np.zeros(r), np.full(n, 1.0 + eps), np.zeros(n)])
    return _slsqp(fun, jac, x0, A, b, r)


def convex_primal_oracle(K: np.ndarray, labels: np.ndarray, C: float, variant: str,
                         tau: float = 1.0, eps: float = 0.0) -> float:
    """Primal value of the pinball / ε-pinball / hinge SVM with slack variables."""
    Phi = feature_map(K)
    n, r = Phi.shape
    Y = labels[:, None] * Phi
    I, Z = np.eye(n), np.zeros((n, n))

    if variant == "hinge":
        def fun(x):
            return 0.5 * x[:r] @ x[:r] + C * np.sum(x[r:])

        def jac(x):
            return np.concatenate([x[:r], np.full(n, C)])

        A = np.hstack([Y, I])
        b = np.ones(n)
        x0 = np.concatenate([np.zeros(r), np.ones(n)])
        return _slsqp(fun, jac, x0, A, b, r)

    def fun(x):
        return 0.5 * x[:r] @ x[:r] + C * np.sum(x[r:])

    def jac(x):
        return np.concatenate([x[:r], np.full(2 * n, C)])

    # ξ⁺ + yΦw ≥ 1 − ε ;  ξ⁻ − τyΦw ≥ −τ − ε
    A = np.block([[Y, I, Z], [-tau * Y, Z, I]])
    b = np.concatenate([np.full(n, 1 - eps), np.full(n, -tau - eps)])
    x0 = np.concatenate([np.zeros(r), np.full(n, 1.0 + eps), np.zeros(n)])
    return _slsqp(fun, jac, x0, A, b, r)


# ── Suites ──────────────────────────────────────────────────────────────────

def _random_pd(rng: np.random.Generator, d: int) -> np.ndarray:
    M = rng.standard_normal((d, d))
    return M @ M.T + 0.1 * np.eye(d)


def suite_qp_oracle(rng: np.random.Generator, cases: int = 100) -> SuiteResult:
    worst = 0.0
    feasible = True
    for _ in range(cases):
        d = int(rng.integers(2, 26))
        lo = np.where(rng.random(d) < 0.5, 0.0, -rng.random(d) * 2)
        hi = np.where(rng.random(d) < 0.5, np.inf, lo + rng.random(d) * 3 + 0.1)
        prob = QpProblem(_random_pd(rng, d), rng.standard_normal(d) * 3, lo, hi)
        a = clipdcd_solve(prob, tol=1e-10, max_iter=200_000)
        b = qp_oracle(prob, tol=1e-11)
        feasible &= bool(np.all(a.u >= prob.lo) and np.all(a.u <= prob.hi))
        worst = max(worst, abs(a.objective - b.objective) / (1 + abs(b.objective)))
    return SuiteResult("qp_oracle", worst <= 1e-7 and feasible, cases, worst,
                       "" if feasible else "(infeasible iterate)")


def suite_block_operator(rng: np.random.Generator, cases: int = 20) -> SuiteResult:
    mismatches = 0
    for _ in range(cases):
        n = int(rng.integers(2, 12))
        G = _random_pd(rng, n)
        S = np.array([[1.0, -1.0], [-1.0, 1.0]])
        op = BlockOperator(S, G, rng.random(2 * n) + 0.5)
        q = rng.standard_normal(2 * n)
        a = clipdcd_solve(QpProblem(op, q, 0.0, np.inf))
        b = clipdcd_solve(QpProblem(op.dense(), q, 0.0, np.inf))
        mismatches += int(not np.array_equal(a.u, b.u))
    return SuiteResult("block_operator", mismatches == 0, cases, float(mismatches), "(bit-identical iterates)")


def _random_subproblem(rng: np.random.Generator) -> tuple[WeightedSubproblem, HyperParams]:
    n = int(rng.integers(3, 11))
    X = rng.standard_normal((n, 2))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    kernel = KernelSpec(kind="rbf" if rng.random() < 0.5 else "linear", sigma=0.5)
    hp = make_hyper(
        C=1.0,
        loss={"p": float(rng.choice([0.3, 0.5, 0.7, 1.0])), "tau": float(rng.choice([0.3, 0.6, 1.0])),
              "eps": float(rng.choice([0.0, 0.1, 0.5]))},
        kernel=kernel,
        qp_tol=1e-10,
        qp_max_iter=500_000,
    )
    omega = rng.uniform(0.2, 2.0, n)
    return WeightedSubproblem(omega, gram(X, None, kernel), y), hp


def _weighted_gap(sub: WeightedSubproblem, hp: HyperParams, form: str) -> float:
    lp = hp.loss
    alpha, beta, _ = solve_weighted_subproblem(sub, hp, form=form)
    # Exact primal value of the dual-induced w, with the true (nonnegative-slack) loss.
    dual_val = sub.objective(alpha - beta, lp.p, lp.tau, lp.eps)
    oracle = weighted_primal_oracle(sub, lp.p, lp.tau, lp.eps)
    return abs(dual_val - oracle) / max(1.0, abs(oracle))


def suite_dual_arbitration(rng: np.random.Generator, cases: int = 20) -> tuple[SuiteResult, SuiteResult]:
    worst_split, worst_printed, deviating = 0.0, 0.0, 0
    for _ in range(cases):
        sub, hp = _random_subproblem(rng)
        worst_split = max(worst_split, _weighted_gap(sub, hp, "split"))
        gap = _weighted_gap(sub, hp, "printed")
        worst_printed = max(worst_printed, gap)
        deviating += int(gap > 1e-4)
    split = SuiteResult("weighted_dual_split", worst_split <= 1e-4, cases, worst_split)
    printed = SuiteResult("weighted_dual_printed", True, cases, worst_printed,
                          f"(informational: {deviating}/{cases} deviate beyond 1e-4)")
    return split, printed


def suite_convex_duals(rng: np.random.Generator, cases: int = 12) -> SuiteResult:
    worst = 0.0
    for i in range(cases):
        n = int(rng.integers(4, 9))
        X = rng.standard_normal((n, 2))
        y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        K = gram(X, None, KernelSpec(kind="linear"))
        G = K * np.outer(y, y)
        variant = ("hinge", "pinball", "eps_pinball")[i % 3]
        tau = float(rng.choice([0.3, 0.5, 1.0]))
        eps = 0.2 if variant == "eps_pinball" else 0.0
        hp = make_hyper(C=1.0, loss={"tau": tau, "eps": eps}, kernel=KernelSpec(kind="linear"),
                        qp_tol=1e-10, qp_max_iter=500_000)
        if variant == "hinge":
            sol = clipdcd_solve(QpProblem(G, np.ones(n), 0.0, 1.0), tol=1e-10, max_iter=500_000)
            coef = sol.u
        else:
            prob, two_block = pinball_dual(G, hp)
            sol = clipdcd_solve(prob, tol=1e-10, max_iter=500_000)
            coef = sol.u[:n] - tau * sol.u[n:] if two_block else sol.u
        Gc = G @ coef
        z = 1.0 - Gc
        loss = hinge_loss(z) if variant == "hinge" else pinball_eps_loss(z, tau, eps)
        dual_val = float(0.5 * coef @ Gc + np.sum(loss))
        oracle = convex_primal_oracle(K, y, 1.0, variant, tau, eps)
        worst = max(worst, abs(dual_val - oracle) / max(1.0, abs(oracle)))
    return SuiteResult("convex_duals", worst <= 1e-4, cases, worst)


def run_verify(seed: int) -> list[SuiteResult]:
    rng = np.random.default_rng(seed)
    results = [suite_qp_oracle(rng), suite_block_operator(rng)]
    results.extend(suite_dual_arbitration(rng))
    results.append(suite_convex_duals(rng))
    for r in results:
        (logger.info if r.passed else logger.error)("[VERIFY] %s", r.line())
    return results


def check_dual_pd(sub: WeightedSubproblem, p: float, tau: float, eps: float, form: str = "printed") -> bool:
    """True when the assembled Hessian admits a Cholesky factorisation (the split form is only PSD)."""
    H = assemble_weighted_dual(sub, p, tau, eps, form=form).dense()
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        return False
    return True

