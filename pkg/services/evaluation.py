"""
Evaluation Engine – metrics, stratified cross-validation and grid search.

Grid cells run concurrently on a joblib thread pool (the numba kernels release
the GIL); results come back in grid order, so the table and the selected
point never depend on completion order.
"""

import itertools
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Literal

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

import config
from data_ingestion import Dataset, FoldPlan, apply_scaler, standardize
from errors import ConfigError, DataError
from models.kernels import KernelSpec
from models.losses import LossParams
from models.svm import VARIANTS, HyperParams, Model, predict
from services.hq_engine import effective_hyper, fit

logger = logging.getLogger(__name__)

Fitter = Callable[[Dataset, str, HyperParams], Model]


# ── Metrics ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "Confusion":
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        pos, pred_pos = y_true > 0, y_pred > 0
        return cls(
            tp=int(np.sum(pos & pred_pos)),
            tn=int(np.sum(~pos & ~pred_pos)),
            fp=int(np.sum(~pos & pred_pos)),
            fn=int(np.sum(pos & ~pred_pos)),
        )


def accuracy(c: Confusion) -> float:
    if c.total == 0:
        raise DataError("accuracy of an empty evaluation set")
    return (c.tp + c.tn) / c.total


def f1(c: Confusion) -> float:
    """2tp / (2tp + fp + fn); 0 when nothing is positive in truth or prediction."""
    denom = 2 * c.tp + c.fp + c.fn
    return 0.0 if denom == 0 else 2 * c.tp / denom


# ── Grid specification ──────────────────────────────────────────────────────

def _powers(lo: int, hi: int, step: int = 1) -> list[float]:
    return [2.0 ** i for i in range(lo, hi + 1, step)]


# Parameters each variant actually reads; the rest collapse to one value in presets.
_USED = {
    "eps_baen": {"C", "eta", "p", "tau", "eps"},
    "baen": {"C", "eta", "p", "tau"},
    "aen_convex": {"C", "p", "tau", "eps"},
    "en": {"C", "p", "eps"},
    "pinball": {"C", "tau"},
    "eps_pinball": {"C", "tau", "eps"},
    "hinge": {"C"},
}
_DEFAULTS = {"C": 1.0, "eta": 1.0, "p": 0.5, "tau": 1.0, "eps": 0.0, "sigma": 1.0}

PRESETS = {
    "full": {"C": _powers(-8, 8), "eta": _powers(-6, 6, 2), "p": [0.3, 0.5, 0.7],
              "tau": [0.1, 0.3, 0.6, 1.0], "eps": [0.1], "sigma": _powers(-4, 4)},
    "en_c": {"C": _powers(-8, 8, 2), "eta": _powers(-6, 6, 2), "p": [0.3, 0.5, 0.7],
             "tau": [0.1, 0.3, 0.6, 1.0], "eps": [0.1], "sigma": _powers(-4, 4)},
    "small": {"C": [0.25, 1.0, 4.0], "eta": [0.5, 2.0], "p": [0.5], "tau": [0.5, 1.0],
              "eps": [0.1], "sigma": [0.25, 1.0]},
}


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: Literal["eps_baen", "baen", "aen_convex", "en", "pinball", "eps_pinball", "hinge"] = "eps_baen"
    kernel: Literal["linear", "rbf"] = "rbf"
    C: tuple[float, ...] = (1.0,)
    eta: tuple[float, ...] = (1.0,)
    p: tuple[float, ...] = (0.5,)
    tau: tuple[float, ...] = (1.0,)
    eps: tuple[float, ...] = (0.0,)
    sigma: tuple[float, ...] = (1.0,)
    hq_max_iter: int = config.HQ_MAX_ITER
    qp_tol: float = config.QP_TOL

    @field_validator("C", "eta", "p", "tau", "eps", "sigma")
    @classmethod
    def _nonempty(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        if not v:
            raise ValueError("parameter lists must be nonempty")
        return v

    @model_validator(mode="after")
    def _in_domain(self) -> "GridSpec":
        if min(self.C) <= 0 or min(self.sigma) <= 0:
            raise ValueError("C and sigma values must be positive")
        for eta, p, tau, eps in itertools.product(self.eta, self.p, self.tau, self.eps):
            LossParams(eta=eta, p=p, tau=tau, eps=eps)
        return self

    @classmethod
    def preset(cls, name: str, variant: str, kernel: str = "rbf", **overrides) -> "GridSpec":
        if name not in PRESETS:
            raise ConfigError(f"unknown grid preset '{name}' (expected one of {', '.join(PRESETS)})")
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant '{variant}'")
        used = _USED[variant] | ({"sigma"} if kernel == "rbf" else set())
        values = {k: tuple(v) if k in used else (_DEFAULTS[k],) for k, v in PRESETS[name].items()}
        values.update(overrides)
        return make_grid(variant=variant, kernel=kernel, **values)

    @property
    def size(self) -> int:
        return len(self.C) * len(self.eta) * len(self.p) * len(self.tau) * len(self.eps) * len(self.sigma)

    def points(self) -> list[HyperParams]:
        """Every grid point in product order (C outermost, sigma innermost)."""
        out = []
        for C, eta, p, tau, eps, sigma in itertools.product(self.C, self.eta, self.p, self.tau, self.eps, self.sigma):
            out.append(HyperParams(
                C=C,
                loss=LossParams(eta=eta, p=p, tau=tau, eps=eps),
                kernel=KernelSpec(kind=self.kernel, sigma=sigma),
                hq_max_iter=self.hq_max_iter,
                qp_tol=self.qp_tol,
            ))
        return out


def make_grid(**kwargs) -> GridSpec:
    try:
        return GridSpec(**kwargs)
    except ValidationError as exc:
        raise ConfigError(str(exc).replace("\n", "; "))


# ── Cross-validation ────────────────────────────────────────────────────────

@dataclass(frozen=True)
class FoldRecord:
    fold: int
    acc: float
    f1: float
    n_test: int
    single_class: bool
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CvResult:
    variant: str
    params: HyperParams
    folds: tuple[FoldRecord, ...]

    def _stat(self, name: str) -> tuple[float, float]:
        vals = np.array([getattr(f, name) for f in self.folds])
        sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        return float(vals.mean()), sd

    @property
    def acc_mean(self) -> float:
        return self._stat("acc")[0]

    @property
    def acc_sd(self) -> float:
        return self._stat("acc")[1]

    @property
    def f1_mean(self) -> float:
        return self._stat("f1")[0]

    @property
    def f1_sd(self) -> float:
        return self._stat("f1")[1]

    @property
    def flagged_folds(self) -> list[int]:
        return [f.fold for f in self.folds if f.single_class]

    def to_row(self) -> dict:
        return {
            "variant": self.variant,
            **self.params.flat(),
            "acc_mean": self.acc_mean,
            "acc_sd": self.acc_sd,
            "f1_mean": self.f1_mean,
            "f1_sd": self.f1_sd,
            "flagged_folds": " ".join(str(i) for i in self.flagged_folds),
        }


def cross_validate(d: Dataset, variant: str, hp: HyperParams, plan: FoldPlan,
                   scale: bool = True, fitter: Fitter = fit) -> CvResult:
    """Fit on k−1 folds and score the held-out fold; the scaler sees training rows only."""
    if plan.assignments.size != d.n_samples:
        raise ConfigError(f"fold plan covers {plan.assignments.size} samples, dataset has {d.n_samples}")
    hp = effective_hyper(variant, hp)
    records = []
    for fold, train, test in plan.splits():
        tr, te = d.subset(train), d.subset(test)
        if scale:
            tr, scaler = standardize(tr)
            te = apply_scaler(te, scaler)
        model = fitter(tr, variant, hp)
        c = Confusion.from_predictions(te.labels, predict(model, te.samples))
        single = np.unique(te.labels).size < 2
        if single:
            logger.warning("[CV] fold %d of %s holds a single class; scored but flagged", fold, d.source_id)
        diag = model.diagnostics
        records.append(FoldRecord(
            fold=fold,
            acc=accuracy(c),
            f1=f1(c),
            n_test=int(test.size),
            single_class=bool(single),
            diagnostics={"hq_iterations": diag.hq_iterations, "qp_updates": diag.qp_updates,
                         "stop_reason": diag.stop_reason},
        ))
    return CvResult(variant, hp, tuple(records))


def select_best(results: list[CvResult]) -> CvResult:
    """Highest mean ACC, then highest mean F1, then the smallest parameter tuple."""
    if not results:
        raise ConfigError("no grid results to select from")
    return min(results, key=lambda r: (-r.acc_mean, -r.f1_mean, r.params.key()))


def grid_search(d: Dataset, grid: GridSpec, plan: FoldPlan, scale: bool = True,
                threads: int | None = None) -> tuple[HyperParams, list[CvResult]]:
    points = grid.points()
    n_jobs = min(config.resolve_threads(threads), len(points))
    logger.info("[GRID] %s on %s: %d point(s) x %d folds, %d thread(s)",
                grid.variant, d.source_id, len(points), plan.k, n_jobs)
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(cross_validate)(d, grid.variant, hp, plan, scale) for hp in points
    )
    best = select_best(results)
    logger.info("[GRID] best %s: acc=%.4f f1=%.4f %s", grid.variant, best.acc_mean, best.f1_mean, best.params.flat())
    return best.params, results


# ── Exports ─────────────────────────────────────────────────────────────────

def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def stamp_line() -> str:
    return f"# generated {timestamp()}\n"


def write_table(df: pd.DataFrame, path: str, stamp: bool = True) -> None:
    """CSV with a header row; the optional first ``#`` line is the only run-dependent content."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if stamp:
            fh.write(stamp_line())
        df.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")


def read_table(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def results_frame(results: list[CvResult], dataset: str | None = None) -> pd.DataFrame:
    rows = [r.to_row() for r in results]
    df = pd.DataFrame(rows)
    if dataset is not None:
        df.insert(0, "dataset", dataset)
    return df


def write_results_csv(results: list[CvResult], path: str, dataset: str | None = None, stamp: bool = True) -> None:
    write_table(results_frame(results, dataset), path, stamp)


def fold_records(results: list[CvResult], dataset: str) -> list[dict]:
    out = []
    for r in results:
        for f in r.folds:
            out.append({
                "dataset": dataset,
                "variant": r.variant,
                "params": r.params.flat(),
                "fold": f.fold,
                "acc": f.acc,
                "f1": f.f1,
                "n_test": f.n_test,
                "single_class": f.single_class,
                **f.diagnostics,
            })
    return out


def write_folds_jsonl(results: list[CvResult], path: str, dataset: str, stamp: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if stamp:
            fh.write(stamp_line())
        for rec in fold_records(results, dataset):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
