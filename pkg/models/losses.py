"""
Closed-form losses used for training and testing.

All functions accept a scalar or an ndarray of margins ``z = 1 - y f(x)`` and
return the same shape (a Python float for scalar input). Evaluation is plain
float64 arithmetic.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class LossParams(BaseModel):
    """λ (bound 1/λ), η (sharpness), p (ℓ1/ℓ2 mix), τ (asymmetry), ε (band half-width)."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(1.0, gt=0, alias="lambda")
    eta: float = Field(1.0, gt=0)
    p: float = Field(0.5, gt=0, le=1)
    tau: float = Field(1.0, gt=0, le=1)
    eps: float = Field(0.0, ge=0)

    @property
    def band(self) -> tuple[float, float]:
        """Closed zero-loss interval [-ε/τ, ε]."""
        return -self.eps / self.tau, self.eps


def _out(a: np.ndarray):
    return float(a) if np.ndim(a) == 0 else a


def aen_loss(z, p: float, tau: float):
    """Asymmetric elastic net loss; the negative branch carries τ·(pτ/2) as printed for L_aen."""
    z = np.asarray(z, dtype=np.float64)
    pos = 0.5 * p * z * z + (1.0 - p) * z
    neg = tau * (0.5 * p * tau * z * z - (1.0 - p) * z)
    return _out(np.where(z >= 0, pos, neg))


def aen_eps_loss(z, p: float, tau: float, eps: float):
    """Asymmetric elastic net loss with a zero band on [-ε/τ, ε]."""
    z = np.asarray(z, dtype=np.float64)
    r = z - eps
    l = z + eps / tau
    pos = 0.5 * p * r * r + (1.0 - p) * r
    neg = tau * (0.5 * p * l * l - (1.0 - p) * l)
    out = np.where(z > eps, pos, np.where(z < -eps / tau, neg, 0.0))
    return _out(out)


def bounded(h, lam: float, eta: float):
    """h -> (1/λ)(1 - 1/(1 + η h)), written as ηh/(λ(1+ηh)) to avoid cancellation near 0."""
    h = np.asarray(h, dtype=np.float64)
    eh = eta * h
    return _out(eh / (lam * (1.0 + eh)))


def baen_eps_loss(z, lp: LossParams):
    """Bounded ε-insensitive asymmetric elastic net loss; 0 on the band, < 1/λ everywhere."""
    return bounded(aen_eps_loss(z, lp.p, lp.tau, lp.eps), lp.lam, lp.eta)


def baen_eps_grad(z, lp: LossParams):
    """Derivative of ``baen_eps_loss``; 0 on the closed band including both kinks."""
    z = np.asarray(z, dtype=np.float64)
    p, tau, eps = lp.p, lp.tau, lp.eps
    h = np.asarray(aen_eps_loss(z, p, tau, eps))
    dh_pos = p * (z - eps) + (1.0 - p)
    dh_neg = tau * (p * (z + eps / tau) - (1.0 - p))
    dh = np.where(z > eps, dh_pos, np.where(z < -eps / tau, dh_neg, 0.0))
    denom = 1.0 + lp.eta * h
    return _out(lp.eta * dh / (lp.lam * denom * denom))


def pinball_eps_loss(u, tau: float, eps: float):
    """ε-insensitive pinball loss."""
    u = np.asarray(u, dtype=np.float64)
    out = np.where(u > eps, u - eps, np.where(u < -eps / tau, -tau * (u + eps / tau), 0.0))
    return _out(out)


def hinge_loss(z):
    return _out(np.maximum(0.0, np.asarray(z, dtype=np.float64)))
