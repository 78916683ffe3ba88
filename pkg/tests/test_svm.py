import json
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from data_ingestion import standardize
from errors import ConfigError, DimensionError, FormatError
from models.kernels import KernelSpec
from models.svm import (
    Model, decision_values, load_model, make_hyper, model_to_dict, predict, primal_objective, raw_decision_values,
    regularizer, save_model, sparsity_ratio, support_vectors,
)
from services.hq_engine import fit

LINEAR = KernelSpec(kind="linear")


def test_zero_model_predicts_positive(toy):
    model = Model.zero(toy, "eps_baen", make_hyper())
    assert_array_equal(decision_values(model, toy.samples), 0.0)
    assert_array_equal(predict(model, toy.samples), 1.0)
    assert support_vectors(model).size == 0
    assert sparsity_ratio(model) == 0.0


def test_zero_model_objective_on_band_edge(toy):
    hp = make_hyper(C=3.0, loss={"tau": 1.0, "eps": 1.0})
    model = Model.zero(toy, "eps_baen", hp)
    assert regularizer(model) == 0.0
    assert primal_objective(model, toy) == 0.0


def test_hyper_validation():
    with pytest.raises(ConfigError, match="lambda"):
        make_hyper(loss={"lambda": 2.0})
    with pytest.raises(ConfigError):
        make_hyper(C=-1.0)
    with pytest.raises(ConfigError):
        make_hyper(kernel={"kind": "poly"})
    hp = make_hyper(loss={"p": 0.3})
    assert hp.with_loss(tau=0.5).loss.p == 0.3
    assert hp.resolved_hq_tol(50) == pytest.approx(1e-4 * np.sqrt(100))
    assert hp.resolved_qp_max_iter(8) == 1600


def test_decision_values_feature_mismatch(toy):
    model = fit(toy, "hinge", make_hyper(kernel=LINEAR))
    with pytest.raises(DimensionError, match="expects 2 features"):
        decision_values(model, np.ones((3, 5)))


def test_primal_objective_matches_training_trace(toy):
    hp = make_hyper(C=2.0, loss={"p": 0.5, "tau": 0.5, "eps": 0.1}, kernel=LINEAR)
    model = fit(toy, "aen_convex", hp)
    assert primal_objective(model, toy) == pytest.approx(model.diagnostics.objective_trace[0])


@pytest.mark.parametrize("variant", ["eps_baen", "en", "pinball", "hinge"])
def test_decisions_reproduce_training_margins_and_linear_weights(gaussian, variant):
    hp = make_hyper(C=1.0, loss={"eta": 1.0, "p": 0.5, "tau": 0.5, "eps": 0.1}, kernel=LINEAR)
    model = fit(gaussian, variant, hp)
    f = decision_values(model, gaussian.samples)
    assert_allclose(f, model.train_decision, atol=1e-8)

    offset = np.sqrt(LINEAR.bias_offset)
    X_tilde = np.column_stack([gaussian.samples, np.full(gaussian.n_samples, offset)])
    w_tilde = (model.labels * model.dual_coef) @ X_tilde
    assert_allclose(f, X_tilde @ w_tilde, rtol=0, atol=1e-10)


@pytest.mark.parametrize("variant", ["eps_baen", "baen", "aen_convex", "en", "pinball", "eps_pinball", "hinge"])
def test_fitted_objective_not_above_zero_model(gaussian, variant):
    hp = make_hyper(C=1.0, loss={"eta": 1.0, "p": 0.5, "tau": 0.5, "eps": 0.1}, kernel=KernelSpec(sigma=0.5))
    model = fit(gaussian, variant, hp)
    assert primal_objective(model, gaussian) <= primal_objective(Model.zero(gaussian, variant, model.hyper), gaussian)


def test_compact_drops_only_zero_coefficients(toy):
    model = fit(toy, "hinge", make_hyper(C=100.0, kernel=LINEAR, qp_tol=1e-10))
    compact = model.compact()
    assert compact.alphas.size == np.count_nonzero(model.alphas)
    assert_allclose(decision_values(compact, toy.samples), decision_values(model, toy.samples), atol=1e-12)


def test_save_and_load_preserve_decisions(tmp_path, toy):
    d, scaler = standardize(toy)
    hp = make_hyper(C=1.0, loss={"eta": 1.0, "p": 0.5, "tau": 0.5, "eps": 0.1}, kernel=KernelSpec(sigma=0.5))
    model = replace(fit(d, "eps_baen", hp), scaler=scaler)
    path = str(tmp_path / "model.json")
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.variant == "eps_baen"
    assert loaded.hyper == hp
    assert_allclose(raw_decision_values(loaded, toy.samples), raw_decision_values(model, toy.samples),
                    rtol=1e-12, atol=1e-12)
    payload = json.loads((tmp_path / "model.json").read_text())
    assert payload["format"] == "baen-model/1"
    assert payload["hyper"]["loss"]["lambda"] == 1.0


def test_raw_decision_values_apply_scaler(toy):
    d, scaler = standardize(toy)
    model = replace(fit(d, "hinge", make_hyper(kernel=LINEAR)), scaler=scaler)
    assert_allclose(raw_decision_values(model, toy.samples), decision_values(model, d.samples))
    with pytest.raises(DimensionError):
        raw_decision_values(model, np.ones((2, 3)))


def test_load_model_errors(tmp_path, toy):
    with pytest.raises(FormatError, match="not found"):
        load_model(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(FormatError):
        load_model(str(bad))
    payload = model_to_dict(Model.zero(toy, "hinge", make_hyper()))
    payload["format"] = "baen-model/0"
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps(payload))
    with pytest.raises(FormatError, match="baen-model/1"):
        load_model(str(wrong))
    del payload["alphas"]
    payload["format"] = "baen-model/1"
    wrong.write_text(json.dumps(payload))
    with pytest.raises(FormatError, match="malformed"):
        load_model(str(wrong))
