"""
Bench Engine – runs a ``baen-bench/1`` protocol end to end.

For every dataset × noise setting × kernel × variant it grid-searches with
stratified k-fold CV, writes the per-point CvResult table and fold records,
then assembles one classifiers × datasets score matrix per (noise, kernel,
metric) and its Friedman / Nemenyi report.
"""

import json
import logging
import os
import re
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

import config
from data_ingestion import Dataset, load_dataset, standardize, stratified_kfold
from data_simulation import NoiseSpec, SynthSpec, gen_gaussian_2class
from errors import ConfigError, FormatError
from models.svm import VARIANTS
from services.evaluation import (
    GridSpec, grid_search, select_best, timestamp, write_folds_jsonl, write_results_csv, write_table,
)
from services.stats_engine import average_ranks, friedman_report, scores_frame

logger = logging.getLogger(__name__)


class DatasetEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    path: str
    name: str | None = None
    format: Literal["auto", "csv", "libsvm"] = "auto"
    label_column: str | int = -1
    positive_label: str | None = None

    def display_name(self) -> str:
        return self.name or os.path.splitext(os.path.basename(self.path))[0]


class SyntheticEntry(BaseModel):
    """``count`` seeded two-Gaussian datasets with means ±(separation, separation)."""

    model_config = ConfigDict(frozen=True)

    count: int = Field(10, ge=1)
    n: int = Field(300, ge=4)
    separation: float = Field(1.0, gt=0)


class BenchProtocol(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    format: str
    datasets: tuple[DatasetEntry, ...] = ()
    synthetic: SyntheticEntry | None = None
    noise: tuple[str, ...] = ("none", "label:0.25", "feature:0.25")
    variants: tuple[str, ...] = ("eps_baen", "en", "pinball", "hinge")
    kernels: tuple[Literal["linear", "rbf"], ...] = ("rbf",)
    grid: Literal["full", "small", "en_c"] = "small"
    seed: int = Field(config.SEED, ge=0)
    k: int = Field(5, ge=2)
    standardize: bool = True
    alpha: float = 0.10

    @field_validator("format")
    @classmethod
    def _format(cls, v: str) -> str:
        if v != config.BENCH_FORMAT:
            raise ValueError(f"expected format '{config.BENCH_FORMAT}', got '{v}'")
        return v

    @field_validator("variants")
    @classmethod
    def _variants(cls, v: tuple[str, ...]) -> tuple[str, ...]:
        unknown = [x for x in v if x not in VARIANTS]
        if unknown or not v:
            raise ValueError(f"unknown or missing variants {unknown} (expected {', '.join(VARIANTS)})")
        return v

    @field_validator("noise")
    @classmethod
    def _noise(cls, v: tuple[str, ...]) -> tuple[str, ...]:
        for text in v:
            NoiseSpec.parse(text)
        return v

    @model_validator(mode="after")
    def _has_data(self) -> "BenchProtocol":
        if not self.datasets and self.synthetic is None:
            raise ValueError("protocol lists no datasets and no synthetic block")
        return self

    def noise_specs(self) -> list[NoiseSpec]:
        return [NoiseSpec.parse(t) for t in self.noise]


def load_protocol(path: str) -> BenchProtocol:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"protocol file not found: {path}")
    except json.JSONDecodeError as exc:
        raise FormatError(f"protocol file is not valid JSON: {exc}")
    if not isinstance(payload, dict) or payload.get("format") != config.BENCH_FORMAT:
        got = payload.get("format") if isinstance(payload, dict) else None
        raise FormatError(f"expected format '{config.BENCH_FORMAT}', got '{got}'")
    try:
        return BenchProtocol(**payload)
    except (ValidationError, ConfigError) as exc:
        raise ConfigError(f"invalid protocol: {str(exc).replace(chr(10), '; ')}")


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", text).strip("-")


def protocol_datasets(protocol: BenchProtocol) -> list[tuple[str, Dataset]]:
    out = [(e.display_name(), load_dataset(e.path, e.format, e.label_column, e.positive_label))
           for e in protocol.datasets]
    if protocol.synthetic is not None:
        s = protocol.synthetic
        for i in range(s.count):
            spec = SynthSpec(n=s.n, mu_pos=(s.separation, s.separation),
                             mu_neg=(-s.separation, -s.separation), seed=protocol.seed + i)
            out.append((f"synthetic{i + 1:02d}", gen_gaussian_2class(spec)))
    return out


def run_bench(protocol: BenchProtocol, out_dir: str, threads: int | None = None, stamp: bool = True) -> dict:
    """Run the whole protocol; returns {"cv": [...], "scores": [...], "reports": [...]} output paths."""
    cv_dir = os.path.join(out_dir, "cv")
    os.makedirs(cv_dir, exist_ok=True)
    datasets = protocol_datasets(protocol)
    written = {"cv": [], "scores": [], "reports": []}
    # (noise, kernel, metric) -> variant -> dataset -> score
    scores: dict[tuple[str, str, str], dict[str, dict[str, float]]] = {}

    for di, (name, d) in enumerate(datasets):
        if protocol.standardize:
            d, _ = standardize(d)
        for noise in protocol.noise_specs():
            noisy = noise.apply(d, protocol.seed + 1000 * di)
            plan = stratified_kfold(noisy, protocol.k, protocol.seed)
            for kernel in protocol.kernels:
                for variant in protocol.variants:
                    grid = GridSpec.preset(protocol.grid, variant, kernel)
                    _, results = grid_search(noisy, grid, plan, scale=protocol.standardize, threads=threads)
                    stem = _slug(f"{name}__{noise.tag()}__{kernel}__{variant}")
                    csv_path = os.path.join(cv_dir, stem + ".csv")
                    jsonl_path = os.path.join(cv_dir, stem + ".jsonl")
                    write_results_csv(results, csv_path, dataset=name, stamp=stamp)
                    write_folds_jsonl(results, jsonl_path, dataset=name, stamp=stamp)
                    written["cv"].extend([csv_path, jsonl_path])
                    best = select_best(results)
                    for metric, value in (("acc", best.acc_mean), ("f1", best.f1_mean)):
                        cell = scores.setdefault((noise.tag(), kernel, metric), {})
                        cell.setdefault(variant, {})[name] = value
            logger.info("[BENCH] %s / %s done", name, noise.tag())

    names = [n for n, _ in datasets]
    for (noise_tag, kernel, metric), table in scores.items():
        variants = list(protocol.variants)
        matrix = np.array([[table[v][n] for n in names] for v in variants])
        stem = _slug(f"scores__{noise_tag}__{kernel}__{metric}")
        path = os.path.join(out_dir, stem + ".csv")
        write_table(scores_frame(matrix, variants, names), path, stamp)
        written["scores"].append(path)
        if len(variants) < 2 or len(names) < 2:
            logger.warning("[BENCH] %s: Friedman test needs >= 2 variants and >= 2 datasets; skipped", stem)
            continue
        report = friedman_report(average_ranks(matrix, True, variants, names), alpha=protocol.alpha)
        report = {"noise": noise_tag, "kernel": kernel, "metric": metric, **report}
        if stamp:
            report = {"generated": timestamp(), **report}
        report_path = os.path.join(out_dir, _slug(f"friedman__{noise_tag}__{kernel}__{metric}") + ".json")
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=1)
            fh.write("\n")
        written["reports"].append(report_path)
    logger.info("[BENCH] wrote %d CV tables, %d score matrices, %d reports",
                len(written["cv"]) // 2, len(written["scores"]), len(written["reports"]))
    return written
