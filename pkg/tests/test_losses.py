import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from models.losses import (
    LossParams, aen_eps_loss, aen_loss, baen_eps_grad, baen_eps_loss, bounded, hinge_loss, pinball_eps_loss,
)


def test_aen_loss_branches():
    assert aen_loss(0.0, 0.5, 0.5) == 0.0
    assert aen_loss(2.0, 0.5, 0.5) == pytest.approx(2.0)
    assert aen_loss(-2.0, 0.5, 0.5) == pytest.approx(0.75)


def test_aen_eps_loss_band_and_branches():
    assert aen_eps_loss(0.3, 0.5, 0.5, 0.5) == 0.0
    assert aen_eps_loss(-1.0, 0.5, 0.5, 0.5) == 0.0
    assert aen_eps_loss(2.0, 0.5, 0.5, 0.5) == pytest.approx(1.3125)
    assert aen_eps_loss(-2.0, 0.5, 0.5, 0.5) == pytest.approx(0.375)


def test_baen_eps_loss_values():
    lp = LossParams(eta=1.0, p=0.5, tau=1.0, eps=0.5)
    assert baen_eps_loss(0.5, lp) == 0.0
    assert baen_eps_loss(2.0, lp) == pytest.approx(0.567568, abs=1e-6)
    assert baen_eps_loss(1e6, lp) == pytest.approx(1.0, abs=1e-3)


def test_baen_eps_loss_bounded_by_inverse_lambda(rng):
    z = np.concatenate([np.linspace(-1e6, 1e6, 10_000), rng.uniform(-50, 50, 1000)])
    for lam in (0.5, 1.0, 2.0):
        lp = LossParams(**{"lambda": lam, "eta": 4.0, "p": 0.3, "tau": 0.6, "eps": 0.5})
        vals = baen_eps_loss(z, lp)
        assert np.all(vals >= 0.0)
        assert np.all(vals < 1.0 / lam)


def test_baen_eps_loss_zero_exactly_on_band():
    lp = LossParams(eta=2.0, p=0.5, tau=0.4, eps=0.6)
    lo, hi = lp.band
    z = np.linspace(lo, hi, 501)
    assert np.all(baen_eps_loss(z, lp) == 0.0)
    assert baen_eps_loss(hi + 1e-3, lp) > 0.0
    assert baen_eps_loss(lo - 1e-3, lp) > 0.0


@pytest.mark.parametrize("tau,eps", [(1.0, 0.0), (0.5, 0.5), (0.3, 1.0)])
def test_losses_continuous_at_breakpoints(tau, eps):
    lp = LossParams(eta=1.5, p=0.5, tau=tau, eps=eps)
    d = 1e-12
    for b in (eps, -eps / tau):
        for f in (
            lambda z: aen_eps_loss(z, lp.p, lp.tau, lp.eps),
            lambda z: baen_eps_loss(z, lp),
            lambda z: pinball_eps_loss(z, lp.tau, lp.eps),
        ):
            assert abs(f(b + d) - f(b - d)) < 1e-9
    assert abs(aen_loss(d, 0.5, tau) - aen_loss(-d, 0.5, tau)) < 1e-9
    assert abs(hinge_loss(d) - hinge_loss(-d)) < 1e-9


def test_baen_eps_grad_value_and_flat_band():
    lp = LossParams(eta=1.0, p=0.5, tau=1.0, eps=0.5)
    assert baen_eps_grad(2.0, lp) == pytest.approx(0.233748, abs=1e-6)
    assert baen_eps_grad(0.0, lp) == 0.0
    assert baen_eps_grad(0.5, lp) == 0.0
    assert baen_eps_grad(-0.5, lp) == 0.0


def test_baen_eps_grad_matches_central_differences(rng):
    lp = LossParams(eta=1.3, p=0.4, tau=0.7, eps=0.3)
    z = rng.uniform(-8.0, 8.0, 1000)
    lo, hi = lp.band
    z = z[(np.abs(z - hi) > 1e-3) & (np.abs(z - lo) > 1e-3)]
    h = 1e-6
    fd = (baen_eps_loss(z + h, lp) - baen_eps_loss(z - h, lp)) / (2 * h)
    grad = baen_eps_grad(z, lp)
    outside = (z > hi) | (z < lo)
    assert_allclose(grad[outside], fd[outside], rtol=1e-5, atol=1e-10)
    assert np.all(grad[~outside] == 0.0)


def test_bounded_transform():
    assert bounded(0.0, 1.0, 1.0) == 0.0
    assert bounded(1.0, 2.0, 1.0) == pytest.approx(0.25)
    assert bounded(1e12, 1.0, 1.0) < 1.0


def test_pinball_eps_loss():
    assert pinball_eps_loss(0.5, 0.5, 0.5) == 0.0
    assert pinball_eps_loss(2.0, 0.5, 0.5) == pytest.approx(1.5)
    assert pinball_eps_loss(-3.0, 0.5, 0.5) == pytest.approx(1.0)


def test_hinge_loss():
    assert_allclose(hinge_loss(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
    assert isinstance(hinge_loss(2.0), float)


def test_loss_params_domain():
    with pytest.raises(ValidationError):
        LossParams(p=0.0)
    with pytest.raises(ValidationError):
        LossParams(tau=1.5)
    with pytest.raises(ValidationError):
        LossParams(eps=-0.1)
    assert LossParams(**{"lambda": 2.0}).lam == 2.0
