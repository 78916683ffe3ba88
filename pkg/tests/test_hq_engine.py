import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from data_ingestion import Dataset
from data_simulation import SynthSpec, gen_gaussian_2class, inject_outliers
from errors import ConfigError, DimensionError, SolverError
from models.kernels import KernelSpec, gram
from models.losses import aen_eps_loss
from models.svm import decision_values, make_hyper, predict, sparsity_ratio, support_vectors
from services.hq_engine import (
    WeightedSubproblem, assemble_weighted_dual, dual_to_coefficients, effective_hyper, fit, fit_convex,
    hq_update_weights, solve_weighted_subproblem,
)
from services.qp_engine import clipdcd_solve
from services.verify_engine import check_dual_pd, convex_primal_oracle, weighted_primal_oracle
from tests.conftest import random_dataset

LINEAR = KernelSpec(kind="linear")


def _subproblem(rng, n=6, omega=None):
    X = rng.standard_normal((n, 2))
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    omega = rng.uniform(0.3, 2.0, n) if omega is None else omega
    return WeightedSubproblem(omega, gram(X, None, LINEAR), y)


# ── Weights ─────────────────────────────────────────────────────────────────

def test_weights_full_inside_band():
    hp = make_hyper(C=2.0, loss={"eta": 3.0, "p": 0.5, "tau": 1.0, "eps": 0.5})
    assert_allclose(hq_update_weights([0.0, 0.5, -0.5], hp), 6.0)


def test_weight_at_known_margin():
    hp = make_hyper(C=2.0, loss={"eta": 1.0, "p": 0.5, "tau": 1.0, "eps": 0.5})
    assert hq_update_weights([2.0], hp)[0] == pytest.approx(2.0 / 2.3125 ** 2)
    assert 2.0 / 2.3125 ** 2 == pytest.approx(0.186992 * 2.0, rel=1e-4)


def test_weights_decrease_with_loss_and_stay_positive():
    hp = make_hyper(C=1.0, loss={"eta": 1.0, "p": 0.5, "tau": 0.5, "eps": 0.2})
    z = np.array([1.0, 2.0, 4.0, 8.0, 1e3, 1e9])
    omega = hq_update_weights(z, hp)
    assert np.all(np.diff(omega) < 0)
    assert np.all(omega > 0)


# ── Dual assembly ───────────────────────────────────────────────────────────

def test_printed_dual_single_sample_example():
    sub = WeightedSubproblem([1.0], [[1.0]], [1.0])
    prob = assemble_weighted_dual(sub, p=1.0, tau=1.0, eps=0.0, form="printed")
    assert_allclose(prob.dense(), [[2.0, -1.0], [-1.0, 2.0]])
    assert_allclose(prob.q, [1.0, -1.0])
    sol = clipdcd_solve(prob, tol=1e-12)
    assert_allclose(sol.u, [0.5, 0.0])


def test_printed_dual_diagonal_corrections():
    sub = WeightedSubproblem([1.0], [[1.0]], [1.0])
    prob = assemble_weighted_dual(sub, p=0.5, tau=0.5, eps=0.0, form="printed")
    assert_allclose(np.diag(prob.dense()) - 1.0, [2.0, 3.0])


def test_dual_shapes(rng):
    sub = _subproblem(rng, n=3)
    printed = assemble_weighted_dual(sub, 0.5, 0.5, 0.1, form="printed")
    H = printed.dense()
    assert H.shape == (6, 6)
    assert_array_equal(H, H.T)
    assert printed.q.size == 6
    split = assemble_weighted_dual(sub, 0.5, 0.5, 0.1)
    assert split.dense().shape == (12, 12)
    assert_allclose(split.hi[:3], 0.5 * sub.omega)
    assert np.all(np.isinf(split.hi[3:6]))


def test_printed_dual_is_positive_definite(rng):
    for _ in range(50):
        n = int(rng.integers(2, 12))
        sub = _subproblem(rng, n=n, omega=rng.uniform(1e-3, 5.0, n))
        p, tau = 1.0 - rng.random(), 1.0 - rng.random()
        assert check_dual_pd(sub, p, tau, float(rng.uniform(0.0, 1.0)), form="printed")


def test_dual_assembly_rejects_bad_input(rng):
    sub = _subproblem(rng, n=3, omega=np.array([1.0, 0.0, 1.0]))
    with pytest.raises(SolverError):
        assemble_weighted_dual(sub, 0.5, 0.5, 0.0)
    with pytest.raises(ConfigError):
        assemble_weighted_dual(_subproblem(rng), 0.5, 0.5, 0.0, form="other")
    with pytest.raises(ConfigError):
        assemble_weighted_dual(_subproblem(rng), 0.0, 0.5, 0.0)
    with pytest.raises(DimensionError):
        WeightedSubproblem(np.ones(2), np.eye(3), np.ones(3))


def test_dual_to_coefficients_sums_split_blocks():
    u = np.arange(8.0)
    alpha, beta = dual_to_coefficients(u, 2)
    assert_allclose(alpha, [0 + 2, 1 + 3])
    assert_allclose(beta, [4 + 6, 5 + 7])


# ── Weighted subproblem against the primal oracle ───────────────────────────

@pytest.mark.parametrize("p,tau,eps", [(0.5, 0.5, 0.0), (0.3, 1.0, 0.1), (0.7, 0.6, 0.5)])
def test_split_dual_matches_primal_oracle(rng, p, tau, eps):
    sub = _subproblem(rng)
    hp = make_hyper(loss={"p": p, "tau": tau, "eps": eps}, kernel=LINEAR, qp_tol=1e-10, qp_max_iter=500_000)
    _, _, value = solve_weighted_subproblem(sub, hp)
    oracle = weighted_primal_oracle(sub, p, tau, eps)
    assert value == pytest.approx(oracle, rel=1e-4, abs=1e-4)


def test_printed_dual_exact_when_p_and_tau_are_one(rng):
    sub = _subproblem(rng)
    hp = make_hyper(loss={"p": 1.0, "tau": 1.0, "eps": 0.2}, kernel=LINEAR, qp_tol=1e-11, qp_max_iter=500_000)
    a_split, b_split, _ = solve_weighted_subproblem(sub, hp, form="split")
    a_print, b_print, _ = solve_weighted_subproblem(sub, hp, form="printed")
    assert_allclose(a_split - b_split, a_print - b_print, atol=1e-7)


def test_printed_dual_deviates_for_mixed_penalty(rng):
    gaps = []
    for _ in range(5):
        sub = _subproblem(rng)
        hp = make_hyper(loss={"p": 0.5, "tau": 0.5, "eps": 0.0}, kernel=LINEAR, qp_tol=1e-10, qp_max_iter=500_000)
        _, _, value = solve_weighted_subproblem(sub, hp, form="printed")
        oracle = weighted_primal_oracle(sub, 0.5, 0.5, 0.0)
        gaps.append((value - oracle) / max(1.0, abs(oracle)))
    assert min(gaps) > -1e-4
    assert max(gaps) > 1e-4


def test_vanishing_weights_give_vanishing_coefficients(rng):
    sub = _subproblem(rng, omega=np.full(6, 1e-12))
    hp = make_hyper(loss={"p": 0.5, "tau": 0.5, "eps": 0.1}, kernel=LINEAR)
    alpha, beta, _ = solve_weighted_subproblem(sub, hp)
    assert_allclose(alpha, 0.0, atol=1e-9)
    assert_allclose(beta, 0.0, atol=1e-9)
    assert_allclose(sub.gram @ (sub.labels * (alpha - beta)), 0.0, atol=1e-8)


# ── Training ────────────────────────────────────────────────────────────────

def test_eps_baen_separates_toy(toy):
    hp = make_hyper(C=10.0, loss={"eta": 1.0, "p": 0.5, "tau": 0.5, "eps": 0.1}, kernel=LINEAR)
    model = fit(toy, "eps_baen", hp)
    assert_array_equal(predict(model, toy.samples), toy.labels)
    diag = model.diagnostics
    assert diag.stop_reason == "converged"
    assert 1 <= diag.hq_iterations <= hp.hq_max_iter
    assert diag.omega.shape == (toy.n_samples,)


@pytest.mark.parametrize("seed", [0, 6])
def test_contaminated_fit_meets_hq_tolerance_and_downweights_outliers(seed):
    spec = SynthSpec(seed=seed)
    d = inject_outliers(gen_gaussian_2class(spec), -1, 3, seed + 1, spec)
    hp = make_hyper(C=1.0, loss={"eta": 1.0, "p": 0.5, "tau": 0.5, "eps": 0.1}, kernel=LINEAR)
    diag = fit(d, "eps_baen", hp).diagnostics
    assert diag.stop_reason == "converged"
    assert np.all(np.diff(diag.objective_trace) <= 1e-10)
    # injected points are the last three rows
    assert np.all(diag.omega[-3:] < np.median(diag.omega))


def test_hq_objective_trace_is_nonincreasing(rng):
    for _ in range(5):
        d = random_dataset(rng, 40, shift=0.8)
        hp = make_hyper(C=2.0, loss={"eta": 2.0, "p": 0.5, "tau": 0.6, "eps": 0.2}, kernel=KernelSpec(sigma=0.5))
        trace = np.array(fit(d, "eps_baen", hp).diagnostics.objective_trace)
        assert trace.size >= 1
        assert np.all(np.diff(trace) <= 1e-10)


def test_in_band_samples_are_not_support_vectors(gaussian):
    hp = make_hyper(C=1.0, loss={"eta": 1.0, "p": 0.5, "tau": 1.0, "eps": 0.5}, kernel=LINEAR, qp_tol=1e-9,
                    qp_max_iter=2_000_000)
    model = fit(gaussian, "eps_baen", hp)
    z = 1.0 - gaussian.labels * model.train_decision
    inside = (z > -0.5 + 1e-3) & (z < 0.5 - 1e-3)
    assert inside.any()
    tol = 1e-6 * hp.C * hp.loss.eta
    assert np.all(np.maximum(model.alphas, model.betas)[inside] <= tol)
    assert not np.isin(np.flatnonzero(inside), support_vectors(model)).any()


def test_band_makes_the_model_sparser(gaussian):
    base = make_hyper(C=1.0, loss={"eta": 1.0, "p": 0.5, "tau": 1.0}, kernel=LINEAR, qp_tol=1e-9,
                      qp_max_iter=2_000_000)
    banded = fit(gaussian, "eps_baen", base.with_loss(eps=0.5))
    plain = fit(gaussian, "eps_baen", base.with_loss(eps=0.0))
    assert sparsity_ratio(banded) < 1.0
    assert sparsity_ratio(banded) < sparsity_ratio(plain)


def test_hinge_keeps_only_margin_samples(toy):
    hp = make_hyper(C=100.0, kernel=LINEAR, qp_tol=1e-10)
    model = fit(toy, "hinge", hp)
    assert model.betas is None
    assert_allclose(model.alphas[[1, 2, 4, 5]], 0.0, atol=1e-8)
    assert np.all(model.alphas[[0, 3]] > 1e-3)
    assert_array_equal(predict(model, toy.samples), toy.labels)


def test_en_boundary_is_perpendicular_bisector():
    d = Dataset(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1.0, -1.0]))
    model = fit(d, "en", make_hyper(C=1.0, loss={"p": 0.5, "eps": 0.1}, kernel=LINEAR, qp_tol=1e-12))
    f = decision_values(model, np.array([[0.0, 0.7], [0.0, -3.0], [0.5, 0.0]]))
    assert abs(f[0]) < 1e-8
    assert abs(f[1]) < 1e-8
    assert f[2] > 0


@pytest.mark.parametrize("variant,tau,eps", [("pinball", 0.5, 0.0), ("eps_pinball", 0.5, 0.2), ("hinge", 1.0, 0.0)])
def test_convex_duals_match_primal_oracle(rng, variant, tau, eps):
    d = random_dataset(rng, 6, shift=0.5)
    hp = make_hyper(C=1.0, loss={"tau": tau, "eps": eps}, kernel=LINEAR, qp_tol=1e-10, qp_max_iter=500_000)
    model = fit(d, variant, hp)
    oracle = convex_primal_oracle(gram(d.samples, None, LINEAR), d.labels, 1.0, variant, tau, eps)
    assert model.diagnostics.objective_trace[0] == pytest.approx(oracle, rel=1e-4, abs=1e-4)


@pytest.mark.parametrize("general,pinned,loss", [
    ("eps_baen", "baen", {"eps": 0.0, "p": 0.5, "tau": 0.6}),
    ("aen_convex", "en", {"tau": 1.0, "p": 0.5, "eps": 0.2}),
    ("eps_pinball", "pinball", {"eps": 0.0, "tau": 0.4}),
])
def test_degeneration_chain(rng, general, pinned, loss):
    for _ in range(3):
        d = random_dataset(rng, 20, shift=0.7)
        hp = make_hyper(C=1.0, loss=loss, kernel=KernelSpec(sigma=0.5))
        a, b = fit(d, general, hp), fit(d, pinned, hp)
        assert_allclose(a.dual_coef, b.dual_coef, atol=1e-8)


def test_effective_hyper_pins_parameters():
    hp = make_hyper(loss={"p": 0.5, "tau": 0.4, "eps": 0.3})
    assert effective_hyper("baen", hp).loss.eps == 0.0
    assert effective_hyper("pinball", hp).loss.eps == 0.0
    assert effective_hyper("en", hp).loss.tau == 1.0
    assert effective_hyper("eps_baen", hp) == hp


def test_unknown_variants_rejected(toy):
    with pytest.raises(ConfigError):
        fit(toy, "lasso", make_hyper())
    with pytest.raises(ConfigError):
        fit_convex(toy, "eps_baen", make_hyper())


def test_convex_objective_uses_variant_loss(toy):
    hp = make_hyper(C=1.0, loss={"p": 0.5, "tau": 1.0, "eps": 0.1}, kernel=LINEAR)
    model = fit(toy, "en", hp)
    coef = model.dual_coef
    G = gram(toy.samples, None, LINEAR) * np.outer(toy.labels, toy.labels)
    z = 1.0 - G @ coef
    expected = 0.5 * coef @ G @ coef + np.sum(aen_eps_loss(z, 0.5, 1.0, 0.1))
    assert model.diagnostics.objective_trace[0] == pytest.approx(expected)
