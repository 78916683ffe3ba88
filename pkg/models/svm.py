"""
Kernel SVM model: hyperparameters, fitted dual representation, decision
function f(x) = Σ y_i K̃(x, x_i) c_i, sparsity helpers, the regularized primal
objective, and ``baen-model/1`` persistence.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

import config
from data_ingestion import Dataset, ScalerParams
from errors import ConfigError, DimensionError, FormatError
from models.kernels import KernelSpec, gram
from models.losses import LossParams, aen_eps_loss, baen_eps_loss, hinge_loss, pinball_eps_loss

logger = logging.getLogger(__name__)

Variant = Literal["eps_baen", "baen", "aen_convex", "en", "pinball", "eps_pinball", "hinge"]
VARIANTS: tuple[str, ...] = ("eps_baen", "baen", "aen_convex", "en", "pinball", "eps_pinball", "hinge")
HQ_VARIANTS = ("eps_baen", "baen")
CONVEX_VARIANTS = ("aen_convex", "en", "pinball", "eps_pinball", "hinge")


class HyperParams(BaseModel):
    """One training configuration point. λ is fixed at 1 (absorbed into C)."""

    model_config = ConfigDict(frozen=True)

    C: float = Field(1.0, gt=0)
    loss: LossParams = LossParams()
    kernel: KernelSpec = KernelSpec()
    hq_max_iter: int = Field(config.HQ_MAX_ITER, gt=0)
    hq_tol: float | None = Field(None, gt=0)
    qp_tol: float = Field(config.QP_TOL, gt=0)
    qp_max_iter: int | None = Field(None, gt=0)

    @field_validator("loss")
    @classmethod
    def _lambda_is_one(cls, v: LossParams) -> LossParams:
        if v.lam != 1.0:
            raise ValueError("loss.lambda must be 1 (the bound scale is absorbed into C)")
        return v

    def with_loss(self, **changes) -> "HyperParams":
        return self.model_copy(update={"loss": self.loss.model_copy(update=changes)})

    def resolved_hq_tol(self, n: int) -> float:
        return self.hq_tol if self.hq_tol is not None else 1e-4 * math.sqrt(2 * n)

    def resolved_qp_max_iter(self, dim: int) -> int:
        return self.qp_max_iter if self.qp_max_iter is not None else 200 * dim

    def key(self) -> tuple:
        """Sortable parameter tuple used for deterministic tie-breaking."""
        return (self.C, self.loss.eta, self.loss.p, self.loss.tau, self.loss.eps,
                self.kernel.kind, self.kernel.sigma)

    def flat(self) -> dict:
        return {"C": self.C, "eta": self.loss.eta, "p": self.loss.p, "tau": self.loss.tau,
                "eps": self.loss.eps, "kernel": self.kernel.kind, "sigma": self.kernel.sigma}


def make_hyper(**kwargs) -> HyperParams:
    """Build HyperParams, turning pydantic validation failures into ConfigError."""
    try:
        return HyperParams(**kwargs)
    except ValidationError as exc:
        raise ConfigError(str(exc).replace("\n", "; "))


@dataclass(frozen=True)
class TrainDiagnostics:
    hq_iterations: int = 0
    qp_updates: int = 0
    kkt_residual: float = 0.0
    objective_trace: tuple[float, ...] = ()
    stop_reason: str = "converged"
    seconds: float = 0.0
    omega: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "hq_iterations": self.hq_iterations,
            "qp_updates": self.qp_updates,
            "kkt_residual": self.kkt_residual,
            "objective_trace": list(self.objective_trace),
            "stop_reason": self.stop_reason,
            "seconds": self.seconds,
        }


@dataclass(frozen=True)
class Model:
    """Fitted dual representation. ``betas`` is None for one-block duals."""

    variant: str
    alphas: np.ndarray
    betas: np.ndarray | None
    samples: np.ndarray
    labels: np.ndarray
    kernel: KernelSpec
    hyper: HyperParams
    support_rows: np.ndarray
    train_decision: np.ndarray | None = None
    scaler: ScalerParams | None = None
    diagnostics: TrainDiagnostics = field(default_factory=TrainDiagnostics)

    @property
    def n_features(self) -> int:
        return self.samples.shape[1]

    @property
    def dual_coef(self) -> np.ndarray:
        """c with f(x) = Σ y_i K̃(x, x_i) c_i (α − β, or λ for one-block duals)."""
        return self.alphas if self.betas is None else self.alphas - self.betas

    @classmethod
    def zero(cls, d: Dataset, variant: str, hyper: HyperParams) -> "Model":
        n = d.n_samples
        two_block = variant not in ("pinball", "hinge")
        return cls(variant, np.zeros(n), np.zeros(n) if two_block else None,
                   d.samples, d.labels, hyper.kernel, hyper, np.arange(n), np.zeros(n))

    def compact(self) -> "Model":
        """Drop retained samples whose coefficients are exactly zero."""
        keep = self.alphas != 0.0
        if self.betas is not None:
            keep |= self.betas != 0.0
        return replace(
            self,
            alphas=self.alphas[keep],
            betas=None if self.betas is None else self.betas[keep],
            samples=self.samples[keep],
            labels=self.labels[keep],
            support_rows=self.support_rows[keep],
            train_decision=None,
        )


# ── Decision function ───────────────────────────────────────────────────────

def decision_values(m: Model, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != m.n_features:
        raise DimensionError(f"model expects {m.n_features} features, got {X.shape[1]}")
    if m.samples.shape[0] == 0:
        return np.zeros(X.shape[0])
    K = gram(X, m.samples, m.kernel)
    return K @ (m.labels * m.dual_coef)


def predict(m: Model, X) -> np.ndarray:
    """sign(f) with sign(0) = +1."""
    return np.where(decision_values(m, X) >= 0, 1.0, -1.0)


def raw_decision_values(m: Model, X) -> np.ndarray:
    """Decision values for inputs in original feature units (stored scaler applied first)."""
    if m.scaler is not None:
        X = m.scaler.transform(X)
    return decision_values(m, X)


def default_support_tol(m: Model) -> float:
    return 1e-6 * m.hyper.C * m.hyper.loss.eta


def support_vectors(m: Model, tol: float | None = None) -> np.ndarray:
    """Training rows whose coefficients exceed ``tol`` in magnitude (default 1e-6·Cη)."""
    tol = default_support_tol(m) if tol is None else tol
    mag = np.abs(m.alphas)
    if m.betas is not None:
        mag = np.maximum(mag, np.abs(m.betas))
    return m.support_rows[mag > tol]


def sparsity_ratio(m: Model, tol: float | None = None, n_train: int | None = None) -> float:
    n = n_train if n_train is not None else m.alphas.size
    if n == 0:
        return 0.0
    return support_vectors(m, tol).size / n


# ── Primal objective ────────────────────────────────────────────────────────

def loss_values(variant: str, loss: LossParams, z: np.ndarray) -> np.ndarray:
    """Per-sample loss of a variant at margins z."""
    if variant in HQ_VARIANTS:
        return np.asarray(baen_eps_loss(z, loss))
    if variant in ("aen_convex", "en"):
        return np.asarray(aen_eps_loss(z, loss.p, loss.tau, loss.eps))
    if variant in ("pinball", "eps_pinball"):
        return np.asarray(pinball_eps_loss(z, loss.tau, loss.eps))
    if variant == "hinge":
        return np.asarray(hinge_loss(z))
    raise ConfigError(f"unknown variant '{variant}'")


def objective_from_margins(variant: str, hyper: HyperParams, z: np.ndarray, reg: float) -> float:
    return float(0.5 * reg + hyper.C * np.sum(loss_values(variant, hyper.loss, z)))


def regularizer(m: Model) -> float:
    """‖w̃‖² = (y∘c)ᵀ K̃ (y∘c) over the retained samples."""
    if m.samples.shape[0] == 0:
        return 0.0
    yc = m.labels * m.dual_coef
    return float(yc @ gram(m.samples, None, m.kernel) @ yc)


def primal_objective(m: Model, d: Dataset) -> float:
    """½‖w̃‖² + C Σ L(z_i) on ``d`` with the variant's own loss."""
    z = 1.0 - d.labels * decision_values(m, d.samples)
    return objective_from_margins(m.variant, m.hyper, z, regularizer(m))


# ── Persistence ─────────────────────────────────────────────────────────────

def model_to_dict(m: Model) -> dict:
    return {
        "format": config.MODEL_FORMAT,
        "variant": m.variant,
        "hyper": m.hyper.model_dump(by_alias=True),
        "kernel": m.kernel.model_dump(),
        "scaler": None if m.scaler is None else m.scaler.to_dict(),
        "support_rows": m.support_rows.tolist(),
        "samples": m.samples.tolist(),
        "labels": m.labels.tolist(),
        "alphas": m.alphas.tolist(),
        "betas": None if m.betas is None else m.betas.tolist(),
        "diagnostics": m.diagnostics.to_dict(),
    }


def model_from_dict(payload: dict) -> Model:
    if payload.get("format") != config.MODEL_FORMAT:
        raise FormatError(f"expected format '{config.MODEL_FORMAT}', got '{payload.get('format')}'")
    try:
        hyper = HyperParams(**payload["hyper"])
        kernel = KernelSpec(**payload["kernel"])
        samples = np.asarray(payload["samples"], dtype=np.float64)
        if samples.size == 0:
            samples = samples.reshape(0, len(payload["scaler"]["means"]) if payload.get("scaler") else 0)
        diag = dict(payload.get("diagnostics") or {})
        diag["objective_trace"] = tuple(diag.get("objective_trace", ()))
        return Model(
            variant=payload["variant"],
            alphas=np.asarray(payload["alphas"], dtype=np.float64),
            betas=None if payload["betas"] is None else np.asarray(payload["betas"], dtype=np.float64),
            samples=samples,
            labels=np.asarray(payload["labels"], dtype=np.float64),
            kernel=kernel,
            hyper=hyper,
            support_rows=np.asarray(payload["support_rows"], dtype=np.intp),
            scaler=None if payload.get("scaler") is None else ScalerParams.from_dict(payload["scaler"]),
            diagnostics=TrainDiagnostics(**diag),
        )
    except (KeyError, TypeError, ValueError, ValidationError) as exc:
        raise FormatError(f"malformed model file: {exc}")


def save_model(m: Model, path: str, compact: bool = True) -> None:
    """JSON floats are written in shortest round-trip form, so reloading is exact."""
    payload = model_to_dict(m.compact() if compact else m)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
    logger.info("[MODEL] saved %s (%d retained samples)", path, len(payload["alphas"]))


def load_model(path: str) -> Model:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"model file not found: {path}")
    except json.JSONDecodeError as exc:
        raise FormatError(f"model file is not valid JSON: {exc}")
    return model_from_dict(payload)
