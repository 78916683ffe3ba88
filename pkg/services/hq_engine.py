"""
HQ Engine – half-quadratic training of the ε-BAEN kernel SVM

    min_w ½‖w̃‖² + C Σ L_baen^ε(1 − y_i w̃ᵀφ(x̃_i))

Each outer iteration fixes the auxiliary weights ω_i = Cη/(1 + η L_aen^ε(z_i))²,
which turns the bounded loss into a weighted convex asymmetric elastic net
subproblem, solves its box-constrained dual with clipDCD (warm-started from the
previous iterate) and refreshes the weights from the new margins.

The convex baselines (aen/en, pinball, ε-pinball, hinge) are single dual solves
through the same QP engine.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from data_ingestion import Dataset
from errors import ConfigError, DimensionError, SolverError
from models.kernels import gram, signed_gram
from models.losses import aen_eps_loss, baen_eps_loss
from models.svm import CONVEX_VARIANTS, HQ_VARIANTS, HyperParams, Model, TrainDiagnostics, objective_from_margins
from services.qp_engine import BlockOperator, QpProblem, QpSolution, clipdcd_solve

logger = logging.getLogger(__name__)

_OMEGA_FLOOR = 1e-300
# Inner-solve tightening used when an HQ step raises the objective.
_QP_TOL_FLOOR = 1e-12
_REFINE_BUDGET = 10

# Sign pattern of the split dual u = (a₁; a₂; b₁; b₂), c = a₁ + a₂ − b₁ − b₂.
_SPLIT_PATTERN = np.array(
    [[1.0, 1.0, -1.0, -1.0],
     [1.0, 1.0, -1.0, -1.0],
     [-1.0, -1.0, 1.0, 1.0],
     [-1.0, -1.0, 1.0, 1.0]]
)
_PRINTED_PATTERN = np.array([[1.0, -1.0], [-1.0, 1.0]])


@dataclass(frozen=True)
class WeightedSubproblem:
    """min ½‖w̃‖² + Σ ω_i L_aen^ε(z_i) over a fixed bias-absorbed Gram matrix."""

    omega: np.ndarray
    gram: np.ndarray
    labels: np.ndarray
    G: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=np.float64).ravel()
        K = np.asarray(self.gram, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.float64).ravel()
        n = y.size
        if K.shape != (n, n) or omega.size != n:
            raise DimensionError(f"subproblem sizes disagree: gram {K.shape}, omega {omega.size}, labels {n}")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "gram", K)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "G", signed_gram(K, y))

    @property
    def n(self) -> int:
        return self.labels.size

    def objective(self, coef: np.ndarray, p: float, tau: float, eps: float) -> float:
        """½ cᵀGc + Σ ω_i L_aen^ε(z_i) with z = 1 − Gc."""
        Gc = self.G @ coef
        return float(0.5 * coef @ Gc + self.omega @ aen_eps_loss(1.0 - Gc, p, tau, eps))


def hq_update_weights(margins, hp: HyperParams) -> np.ndarray:
    """ω_i = Cη·(−v_i) with v_i = −1/(1 + η L_aen^ε(z_i))²; lies in (0, Cη]."""
    lp = hp.loss
    h = np.asarray(aen_eps_loss(np.asarray(margins, dtype=np.float64), lp.p, lp.tau, lp.eps))
    omega = hp.C * lp.eta / np.square(1.0 + lp.eta * h)
    return np.maximum(np.atleast_1d(omega), _OMEGA_FLOOR)


def assemble_weighted_dual(sub: WeightedSubproblem, p: float, tau: float, eps: float,
                           form: str = "split") -> QpProblem:
    """
    Box-constrained dual of a weighted subproblem.

    ``split`` (used for training) keeps ξ± ≥ 0 and has 4n coordinates
    (a₁; a₂; b₁; b₂) with α = a₁ + a₂, β = b₁ + b₂.  ``printed`` is the 2n
    problem u = (α; β) with the closed-form diagonal corrections and linear
    term carried as originally stated; it solves the subproblem exactly only
    when p = 1 and τ = 1.
    """
    omega = sub.omega
    if not np.all(np.isfinite(omega)) or np.any(omega <= 0):
        raise SolverError("subproblem weights omega must be finite and strictly positive")
    if not (0 < p <= 1 and 0 < tau <= 1 and eps >= 0):
        raise ConfigError(f"invalid loss parameters p={p}, tau={tau}, eps={eps}")
    n = sub.n
    ones = np.ones(n)

    if form == "printed":
        extra = np.concatenate([1.0 / (p * omega), (2.0 - tau) / (p * omega)])
        q = np.concatenate([
            (1.0 + (1.0 - p) / p - eps) * ones,
            (-1.0 + tau * (1.0 - p) * (2.0 - tau) / p - eps / tau) * ones,
        ])
        return QpProblem(BlockOperator(_PRINTED_PATTERN, sub.G, extra), q, 0.0, np.inf)

    if form != "split":
        raise ConfigError(f"unknown dual form '{form}' (expected 'split' or 'printed')")
    zeros = np.zeros(n)
    extra = np.concatenate([zeros, 1.0 / (p * omega), zeros, 1.0 / (p * tau * omega)])
    q = np.concatenate([(1.0 - eps) * ones, (1.0 - eps) * ones,
                        -(1.0 + eps / tau) * ones, -(1.0 + eps / tau) * ones])
    hi = np.concatenate([(1.0 - p) * omega, np.full(n, np.inf), tau * (1.0 - p) * omega, np.full(n, np.inf)])
    return QpProblem(BlockOperator(_SPLIT_PATTERN, sub.G, extra), q, 0.0, hi)


def dual_to_coefficients(u: np.ndarray, n: int, form: str = "split") -> tuple[np.ndarray, np.ndarray]:
    """(α, β) from a dual iterate of either form."""
    if form == "printed":
        return u[:n].copy(), u[n:2 * n].copy()
    return u[:n] + u[n:2 * n], u[2 * n:3 * n] + u[3 * n:]


def _solve_dual(sub: WeightedSubproblem, hp: HyperParams, form: str = "split",
                u0: np.ndarray | None = None, tol: float | None = None,
                budget: int = 1) -> tuple[QpSolution, np.ndarray, np.ndarray]:
    lp = hp.loss
    prob = assemble_weighted_dual(sub, lp.p, lp.tau, lp.eps, form=form)
    sol = clipdcd_solve(prob, tol=hp.qp_tol if tol is None else tol,
                        max_iter=budget * hp.resolved_qp_max_iter(prob.dim), u0=u0)
    alpha, beta = dual_to_coefficients(sol.u, sub.n, form)
    return sol, alpha, beta


def solve_weighted_subproblem(sub: WeightedSubproblem, hp: HyperParams,
                              form: str = "split") -> tuple[np.ndarray, np.ndarray, float]:
    """(α, β, weighted primal objective at w̃ = Σ y_i(α_i − β_i)φ(x̃_i))."""
    _, alpha, beta = _solve_dual(sub, hp, form)
    lp = hp.loss
    return alpha, beta, sub.objective(alpha - beta, lp.p, lp.tau, lp.eps)


# ── Trainers ────────────────────────────────────────────────────────────────

def _baen_objective(G: np.ndarray, coef: np.ndarray, hp: HyperParams) -> tuple[float, np.ndarray]:
    Gc = G @ coef
    z = 1.0 - Gc
    return float(0.5 * coef @ Gc + hp.C * np.sum(baen_eps_loss(z, hp.loss))), z


def _build_model(d: Dataset, K: np.ndarray, variant: str, hp: HyperParams, alpha, beta,
                 diagnostics: TrainDiagnostics) -> Model:
    coef = alpha if beta is None else alpha - beta
    return Model(
        variant=variant,
        alphas=alpha,
        betas=beta,
        samples=d.samples,
        labels=d.labels,
        kernel=hp.kernel,
        hyper=hp,
        support_rows=np.arange(d.n_samples),
        train_decision=K @ (d.labels * coef),
        diagnostics=diagnostics,
    )


def fit_eps_baen(d: Dataset, hp: HyperParams, variant: str = "eps_baen") -> Model:
    """
    HQ loop: start from full weights ω = Cη, solve the weighted dual, stop when
    ‖(α, β)ˢ⁺¹ − (α, β)ˢ‖₂ < hq_tol, otherwise refresh ω from the new margins.

    The bounded objective is tracked after every solve. An iterate that raises
    it is refined by re-solving the same weighted dual (warm-started) at
    qp_tol/100, qp_tol/10⁴, ... down to 1e-12. If the rise survives, the
    iterate is rejected: the loop ends ``converged`` when that step was already
    below hq_tol and ``stalled`` otherwise.
    """
    t0 = time.perf_counter()
    n = d.n_samples
    K = gram(d.samples, None, hp.kernel)
    hq_tol = hp.resolved_hq_tol(n)
    omega = np.full(n, hp.C * hp.loss.eta)

    u = None
    prev = None
    best = None
    trace: list[float] = []
    updates = 0
    reason = "max_iter"
    iterations = 0

    for s in range(hp.hq_max_iter):
        sub = WeightedSubproblem(omega, K, d.labels)
        sol, alpha, beta = _solve_dual(sub, hp, u0=u)
        updates += sol.iterations
        obj, z = _baen_objective(sub.G, alpha - beta, hp)
        tol = hp.qp_tol
        while trace and obj > trace[-1] and tol > _QP_TOL_FLOOR:
            tol = max(tol / 100.0, _QP_TOL_FLOOR)
            logger.debug("[HQ] iteration %d raised the objective (%.12g > %.12g); re-solving at qp_tol=%.0e",
                         s + 1, obj, trace[-1], tol)
            sol, alpha, beta = _solve_dual(sub, hp, u0=sol.u, tol=tol, budget=_REFINE_BUDGET)
            updates += sol.iterations
            obj, z = _baen_objective(sub.G, alpha - beta, hp)
        ab = np.concatenate([alpha, beta])
        step = np.inf if prev is None else float(np.linalg.norm(ab - prev))
        if trace and obj > trace[-1]:
            # the rejected step already satisfies the stopping test
            reason = "converged" if step < hq_tol else "stalled"
            logger.debug("[HQ] iteration %d rejected (%.12g > %.12g, step=%.3e): %s",
                         s + 1, obj, trace[-1], step, reason)
            break
        iterations = s + 1
        trace.append(obj)
        best = (alpha, beta, sol, z)
        u = sol.u
        logger.debug("[HQ] iteration %d objective=%.10g step=%.3e updates=%d", s + 1, obj, step, sol.iterations)
        if step < hq_tol:
            reason = "converged"
            break
        prev = ab
        omega = hq_update_weights(z, hp)

    alpha, beta, sol, z = best
    if reason == "max_iter":
        logger.warning("[HQ] reached hq_max_iter=%d without meeting hq_tol=%.3e", hp.hq_max_iter, hq_tol)
    diagnostics = TrainDiagnostics(
        hq_iterations=iterations,
        qp_updates=updates,
        kkt_residual=sol.kkt_residual,
        objective_trace=tuple(trace),
        stop_reason=reason,
        seconds=time.perf_counter() - t0,
        omega=hq_update_weights(z, hp),
    )
    return _build_model(d, K, variant, hp, alpha, beta, diagnostics)


def pinball_dual(G: np.ndarray, hp: HyperParams) -> tuple[QpProblem, bool]:
    """Bias-absorbed ε-pinball dual; one block λ ∈ [−τC, C] when ε = 0."""
    n = G.shape[0]
    C, tau, eps = hp.C, hp.loss.tau, hp.loss.eps
    if eps == 0.0:
        return QpProblem(G, np.ones(n), -tau * C, C), False
    pattern = np.array([[1.0, -tau], [-tau, tau * tau]])
    q = np.concatenate([(1.0 - eps) * np.ones(n), -(tau + eps) * np.ones(n)])
    return QpProblem(BlockOperator(pattern, G, np.zeros(2 * n)), q, 0.0, C), True


def fit_convex(d: Dataset, variant: str, hp: HyperParams) -> Model:
    """Single dual solve for the aen/en, pinball, ε-pinball and hinge baselines."""
    if variant not in CONVEX_VARIANTS:
        raise ConfigError(f"'{variant}' is not a convex variant (expected one of {', '.join(CONVEX_VARIANTS)})")
    hp = effective_hyper(variant, hp)
    t0 = time.perf_counter()
    n = d.n_samples
    K = gram(d.samples, None, hp.kernel)
    G = signed_gram(K, d.labels)

    if variant in ("aen_convex", "en"):
        sub = WeightedSubproblem(np.full(n, hp.C), K, d.labels)
        sol, alpha, beta = _solve_dual(sub, hp)
    elif variant in ("pinball", "eps_pinball"):
        prob, two_block = pinball_dual(G, hp)
        sol = clipdcd_solve(prob, tol=hp.qp_tol, max_iter=hp.resolved_qp_max_iter(prob.dim))
        if two_block:
            alpha, beta = sol.u[:n].copy(), hp.loss.tau * sol.u[n:]
        else:
            alpha, beta = sol.u.copy(), None
    else:
        prob = QpProblem(G, np.ones(n), 0.0, hp.C)
        sol = clipdcd_solve(prob, tol=hp.qp_tol, max_iter=hp.resolved_qp_max_iter(prob.dim))
        alpha, beta = sol.u.copy(), None

    coef = alpha if beta is None else alpha - beta
    Gc = G @ coef
    obj = objective_from_margins(variant, hp, 1.0 - Gc, float(coef @ Gc))
    diagnostics = TrainDiagnostics(
        hq_iterations=0,
        qp_updates=sol.iterations,
        kkt_residual=sol.kkt_residual,
        objective_trace=(obj,),
        stop_reason="converged" if sol.converged else "max_iter",
        seconds=time.perf_counter() - t0,
    )
    return _build_model(d, K, variant, hp, alpha, beta, diagnostics)


def effective_hyper(variant: str, hp: HyperParams) -> HyperParams:
    """Pin the parameters a variant fixes: baen/pinball ε = 0, en τ = 1."""
    if variant in ("baen", "pinball"):
        return hp.with_loss(eps=0.0)
    if variant == "en":
        return hp.with_loss(tau=1.0)
    return hp


def fit(d: Dataset, variant: str, hp: HyperParams) -> Model:
    if variant in HQ_VARIANTS:
        hp = effective_hyper(variant, hp)
        model = fit_eps_baen(d, hp, variant=variant)
    elif variant in CONVEX_VARIANTS:
        model = fit_convex(d, variant, hp)
    else:
        raise ConfigError(f"unknown variant '{variant}'")
    diag = model.diagnostics
    logger.debug("[HQ] fitted %s on %d samples: %s after %d outer / %d coordinate updates",
                 variant, d.n_samples, diag.stop_reason, diag.hq_iterations, diag.qp_updates)
    return model
