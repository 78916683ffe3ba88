"""
data_simulation.py – synthetic data and noise injection

Two-class Gaussian generator with the seeded label-outlier contamination
cases, the label-flip and feature-noise corruptions used by the benchmark,
and the loss-curve / decision-boundary tables that ``cli.py synth`` writes
for external plotting.
"""

import logging
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

import config
from data_ingestion import Dataset
from errors import ConfigError, DataError, DimensionError
from models.losses import LossParams, aen_eps_loss, aen_loss, baen_eps_loss
from models.svm import Model, raw_decision_values

logger = logging.getLogger(__name__)


class SynthSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(150, ge=2)
    mu_pos: tuple[float, float] = (3.0, 3.0)
    mu_neg: tuple[float, float] = (-3.0, -3.0)
    cov_diag: tuple[float, float] = (1.0, 1.0)
    seed: int = Field(config.SEED, ge=0)

    @field_validator("n")
    @classmethod
    def _even(cls, v: int) -> int:
        if v % 2:
            raise ValueError("n must be even (equal class split)")
        return v

    @field_validator("cov_diag")
    @classmethod
    def _positive(cls, v: tuple[float, float]) -> tuple[float, float]:
        if min(v) <= 0:
            raise ValueError("covariance diagonal entries must be positive")
        return v


def _draw(rng: np.random.Generator, mu, cov_diag, count: int) -> np.ndarray:
    return rng.normal(np.asarray(mu), np.sqrt(np.asarray(cov_diag)), size=(count, 2))


def gen_gaussian_2class(spec: SynthSpec = SynthSpec()) -> Dataset:
    """n/2 positives then n/2 negatives from N(μ±, diag(V))."""
    rng = np.random.default_rng(spec.seed)
    half = spec.n // 2
    pos = _draw(rng, spec.mu_pos, spec.cov_diag, half)
    neg = _draw(rng, spec.mu_neg, spec.cov_diag, half)
    return Dataset(
        np.vstack([pos, neg]),
        np.concatenate([np.ones(half), -np.ones(half)]),
        feature_names=("x1", "x2"),
        source_id=f"gaussian(n={spec.n},seed={spec.seed})",
    )


def bayes_margin(x) -> np.ndarray | float:
    """Reference boundary f_C(x) = x₁ − x₂ as stated for the two-Gaussian case."""
    x = np.asarray(x, dtype=np.float64)
    out = x[..., 0] - x[..., 1]
    return float(out) if np.ndim(out) == 0 else out


def bayes_reference(x) -> np.ndarray | float:
    """x₁ + x₂: the optimal boundary for μ± = ±(3, 3) with equal isotropic covariance."""
    x = np.asarray(x, dtype=np.float64)
    out = x[..., 0] + x[..., 1]
    return float(out) if np.ndim(out) == 0 else out


# ── Contamination ───────────────────────────────────────────────────────────

def inject_outliers(d: Dataset, target_class: int | Literal["both"], count: int, seed: int,
                    spec: SynthSpec = SynthSpec()) -> Dataset:
    """
    Append ``count`` points drawn from the opposite class's Gaussian carrying
    ``target_class``'s label; ``"both"`` does this for each class in turn
    (−1 first).
    """
    if count < 0:
        raise ConfigError("outlier count must be nonnegative")
    targets = (-1, 1) if target_class == "both" else (int(target_class),)
    if any(t not in (-1, 1) for t in targets):
        raise ConfigError(f"target_class must be -1, 1 or 'both', got {target_class!r}")
    if count == 0:
        return d
    if d.n_features != 2:
        raise DimensionError(f"outlier injection draws 2-D points, dataset has {d.n_features} features")
    counts = d.class_counts()
    rng = np.random.default_rng(seed)
    out = d
    for t in targets:
        if count > counts[t]:
            raise DataError(f"outlier count {count} exceeds class {t:+d} size {counts[t]}")
        mu = spec.mu_pos if t == -1 else spec.mu_neg
        pts = _draw(rng, mu, spec.cov_diag, count)
        out = out.concat(Dataset(pts, np.full(count, float(t)), d.feature_names, d.source_id))
    logger.debug("[SYNTH] injected %d outlier(s) into class %s", count, target_class)
    return out


def flip_indices(n: int, fraction: float, seed: int) -> np.ndarray:
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"flip fraction must lie in [0, 1], got {fraction}")
    k = int(np.floor(fraction * n + 0.5))
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=k, replace=False))


def flip_labels(d: Dataset, fraction: float, seed: int) -> Dataset:
    """Negate exactly round(fraction·n) labels; the chosen set depends only on (n, seed)."""
    idx = flip_indices(d.n_samples, fraction, seed)
    if idx.size == 0:
        return d
    y = d.labels.copy()
    y[idx] = -y[idx]
    return d.with_labels(y)


def add_feature_noise(d: Dataset, r: float, seed: int) -> Dataset:
    """Add N(0, r·var_j) to feature j, var_j the column sample variance."""
    if r < 0:
        raise ConfigError(f"feature-noise ratio must be nonnegative, got {r}")
    if r == 0 or d.n_samples < 2:
        return d
    var = d.samples.var(axis=0, ddof=1)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(d.samples.shape) * np.sqrt(r * var)
    return d.with_samples(d.samples + noise)


class NoiseSpec(BaseModel):
    """``none``, ``label:<fraction>`` or ``feature:<ratio>``."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["none", "label", "feature"] = "none"
    level: float = Field(0.0, ge=0)

    @classmethod
    def parse(cls, text: str) -> "NoiseSpec":
        text = text.strip().lower()
        if text in ("", "none"):
            return cls()
        kind, _, level = text.partition(":")
        try:
            return cls(kind=kind, level=float(level))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad noise setting '{text}' (expected none, label:F or feature:R): {exc}")

    def tag(self) -> str:
        return "none" if self.kind == "none" else f"{self.kind}:{self.level:g}"

    def apply(self, d: Dataset, seed: int) -> Dataset:
        if self.kind == "label":
            return flip_labels(d, self.level, seed)
        if self.kind == "feature":
            return add_feature_noise(d, self.level, seed)
        return d


# ── Plot tables ─────────────────────────────────────────────────────────────

_SWEEPS = {
    "lambda": ("lam", (0.5, 1.0, 2.0), dict(eta=1.0, p=0.5, tau=1.0, eps=0.5)),
    "eta": ("eta", (0.25, 0.5, 1.0, 2.0, 4.0), dict(lam=1.0, p=0.5, tau=1.0, eps=0.5)),
    "tau": ("tau", (0.3, 0.6, 1.0), dict(lam=1.0, eta=1.0, p=0.5, eps=0.5)),
    "p": ("p", (0.3, 0.5, 1.0), dict(lam=1.0, eta=1.0, tau=1.0, eps=0.5)),
    "eps": ("eps", (0.0, 0.5, 1.0), dict(lam=1.0, eta=1.0, tau=1.0, p=1.0)),
}


def loss_curves(z=None) -> pd.DataFrame:
    """
    Long table (panel, label, z, loss): one bounded-loss curve per value of each
    parameter sweep, plus the bounded / unbounded, banded / unbanded comparison
    at ε = 0.5, τ = 0.3.
    """
    z = np.linspace(-6.0, 6.0, 241) if z is None else np.asarray(z, dtype=np.float64)
    frames = []

    def add(panel: str, label: str, values):
        frames.append(pd.DataFrame({"panel": panel, "label": label, "z": z, "loss": np.asarray(values)}))

    for panel, (name, values, base) in _SWEEPS.items():
        for v in values:
            lp = LossParams(**{**base, name: v})
            add(panel, f"{panel}={v:g}", baen_eps_loss(z, lp))

    lp = LossParams(lam=1.0, eta=1.0, p=0.5, tau=0.3, eps=0.5)
    add("compare", "baen_eps", baen_eps_loss(z, lp))
    add("compare", "baen", baen_eps_loss(z, lp.model_copy(update={"eps": 0.0})))
    add("compare", "aen_eps", aen_eps_loss(z, lp.p, lp.tau, lp.eps))
    add("compare", "aen", aen_loss(z, lp.p, lp.tau))
    return pd.concat(frames, ignore_index=True)


def padded_bbox(X: np.ndarray, pad: float = 0.1) -> tuple[float, float, float, float]:
    """(x1_min, x1_max, x2_min, x2_max) of the data, widened by ``pad`` of each range."""
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    lo = lo - pad * span
    hi = hi + pad * span
    return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])


def boundary_grid(m: Model, bbox: tuple[float, float, float, float],
                  resolution: int = config.GRID_RESOLUTION) -> pd.DataFrame:
    """Decision values on a resolution×resolution lattice (x2 outer, x1 inner)."""
    if m.n_features != 2:
        raise DimensionError(f"boundary grid needs a 2-feature model, got {m.n_features}")
    if resolution < 2:
        raise ConfigError("grid resolution must be at least 2")
    g1 = np.linspace(bbox[0], bbox[1], resolution)
    g2 = np.linspace(bbox[2], bbox[3], resolution)
    xx, yy = np.meshgrid(g1, g2)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    return pd.DataFrame({
        "x1": pts[:, 0],
        "x2": pts[:, 1],
        "decision": raw_decision_values(m, pts),
        "bayes_stated": bayes_margin(pts),
        "bayes_reference": bayes_reference(pts),
    })


def boundary_angle(m: Model) -> float:
    """
    Angle in degrees between a linear model's boundary normal and the (1, 1)
    normal of x₁ + x₂ = 0, folded into [0, 90].
    """
    if m.kernel.kind != "linear":
        raise ConfigError("boundary angle is defined for linear-kernel models only")
    if m.n_features != 2:
        raise DimensionError(f"boundary angle needs a 2-feature model, got {m.n_features}")
    w = (m.labels * m.dual_coef) @ m.samples
    if m.scaler is not None:
        std = np.where(m.scaler.stddevs > 0, m.scaler.stddevs, 1.0)
        w = w / std
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        return 90.0
    cos = abs(float(w @ np.array([1.0, 1.0]))) / (norm * np.sqrt(2.0))
    return float(np.degrees(np.arccos(min(1.0, cos))))
