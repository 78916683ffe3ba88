"""
cli.py – command-line entry point

    python cli.py [--seed N] [--threads N] [--log-level L] <command> [flags]

Commands: train, predict, cv, grid, bench, synth, stats, verify.
Errors end the process with one ``error=<category> <detail>`` line on stderr
(exit 2 for library errors, 1 for anything unexpected).
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Any, Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

import config
from data_ingestion import Dataset, load_dataset, standardize, stratified_kfold, write_csv
from data_simulation import (
    NoiseSpec, SynthSpec, boundary_angle, boundary_grid, gen_gaussian_2class, inject_outliers, loss_curves,
    padded_bbox,
)
from errors import BaenError, DataError
from models.svm import VARIANTS, HyperParams, load_model, make_hyper, predict, raw_decision_values, save_model
from services.bench_engine import load_protocol, run_bench
from services.evaluation import (
    Confusion, GridSpec, accuracy, cross_validate, f1, grid_search, write_folds_jsonl, write_results_csv,
    write_table,
)
from services.hq_engine import fit
from services.stats_engine import average_ranks, friedman_report, load_scores
from services.verify_engine import run_verify

logger = logging.getLogger("baen")

Command = Literal["train", "predict", "cv", "grid", "bench", "synth", "stats", "verify"]


class _SeedAction(argparse.Action):
    """Stores --seed and remembers that it was given explicitly."""

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        namespace.seed_given = True


class RunConfig(BaseModel):
    """One parsed invocation: the command, the global knobs, and its own flags."""

    model_config = ConfigDict(frozen=True)

    command: Command
    seed: int = config.SEED
    seed_given: bool = False
    threads: int = config.THREADS
    options: dict[str, Any] = {}

    def opt(self, name: str, default=None):
        return self.options.get(name, default)


# ── Argument parsing ────────────────────────────────────────────────────────

def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset file (CSV with header or libsvm text)")
    p.add_argument("--format", default="auto", choices=["auto", "csv", "libsvm"], help="input format")
    p.add_argument("--label-column", default="-1", help="CSV label column name or index")
    p.add_argument("--positive-label", default=None, help="label value mapped to +1 (needed unless labels are 0/1 or -1/1)")
    p.add_argument("--no-standardize", action="store_true", help="skip per-split feature standardization")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", default="eps_baen", choices=VARIANTS, help="model variant")
    p.add_argument("--C", type=float, default=1.0, help="loss trade-off C")
    p.add_argument("--eta", type=float, default=1.0, help="bounded-loss sharpness")
    p.add_argument("--p", type=float, default=0.5, help="l1/l2 mix p in (0, 1]")
    p.add_argument("--tau", type=float, default=1.0, help="asymmetry tau in (0, 1]")
    p.add_argument("--eps", type=float, default=0.1, help="insensitive-band half-width")
    p.add_argument("--kernel", default="rbf", choices=["linear", "rbf"], help="kernel kind")
    p.add_argument("--sigma", type=float, default=1.0, help="rbf width in exp(-sigma*|x-x'|^2)")
    p.add_argument("--bias-offset", type=float, default=1.0, help="constant added to every kernel entry")
    p.add_argument("--hq-max-iter", type=int, default=config.HQ_MAX_ITER, help="outer HQ iteration cap")
    p.add_argument("--hq-tol", type=float, default=None, help="HQ step tolerance (default 1e-4*sqrt(2n))")
    p.add_argument("--qp-tol", type=float, default=config.QP_TOL, help="clipDCD projected-gradient tolerance")
    p.add_argument("--qp-max-iter", type=int, default=None, help="clipDCD update cap (default 200*dim)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="cli.py", description="ε-BAEN kernel SVM toolkit", formatter_class=fmt)
    parser.add_argument("--seed", type=int, default=config.SEED, action=_SeedAction,
                        help="seed for every stochastic step (also overrides a bench protocol's seed)")
    parser.set_defaults(seed_given=False)
    parser.add_argument("--threads", type=int, default=config.THREADS, help="worker threads (0 = all cores)")
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and write it", formatter_class=fmt)
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--out", default="model.json", help="model file to write")

    p = sub.add_parser("predict", help="score a dataset with a saved model", formatter_class=fmt)
    p.add_argument("--model", required=True, help="model file written by train")
    p.add_argument("--data", required=True, help="CSV or libsvm file")
    p.add_argument("--format", default="auto", choices=["auto", "csv", "libsvm"], help="input format")
    p.add_argument("--label-column", default="none", help="CSV label column name or index, or 'none'")
    p.add_argument("--positive-label", default=None, help="label value mapped to +1")
    p.add_argument("--out", default="predictions.csv", help="predictions CSV to write")

    p = sub.add_parser("cv", help="stratified k-fold cross-validation of one setting", formatter_class=fmt)
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--k", type=int, default=5, help="fold count")
    p.add_argument("--noise", default="none", help="none, label:<fraction> or feature:<ratio>")
    p.add_argument("--out", default="cv.csv", help="CvResult CSV (fold records go to the .jsonl sibling)")

    p = sub.add_parser("grid", help="grid search with cross-validation", formatter_class=fmt)
    _add_data_flags(p)
    p.add_argument("--variant", default="eps_baen", choices=VARIANTS, help="model variant")
    p.add_argument("--kernel", default="rbf", choices=["linear", "rbf"], help="kernel kind")
    p.add_argument("--preset", default="small", choices=["full", "small", "en_c"], help="grid preset")
    p.add_argument("--k", type=int, default=5, help="fold count")
    p.add_argument("--noise", default="none", help="none, label:<fraction> or feature:<ratio>")
    p.add_argument("--out", default="grid.csv", help="result table CSV (fold records go to the .jsonl sibling)")

    p = sub.add_parser("bench", help="run a baen-bench/1 protocol", formatter_class=fmt)
    p.add_argument("--protocol", required=True, help="protocol JSON file")
    p.add_argument("--out-dir", default=config.OUTPUT_DIR, help="output directory")

    p = sub.add_parser("synth", help="synthetic Gaussian datasets, loss curves and boundary lattices",
                       formatter_class=fmt)
    p.add_argument("--out-dir", default=config.OUTPUT_DIR, help="output directory")
    p.add_argument("--n", type=int, default=150, help="clean sample count (even)")
    p.add_argument("--outliers", type=int, default=3, help="label outliers per contaminated class")
    p.add_argument("--resolution", type=int, default=config.GRID_RESOLUTION, help="lattice points per axis")

    p = sub.add_parser("stats", help="Friedman / Nemenyi report from a scores CSV", formatter_class=fmt)
    p.add_argument("--scores", required=True, help="CSV: classifier column then one column per dataset")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level for the Nemenyi q")
    p.add_argument("--q", type=float, default=None, help="override the studentized-range quantile")
    p.add_argument("--lower-is-better", action="store_true", help="rank ascending scores first")
    p.add_argument("--out", default="friedman.json", help="report JSON to write")

    sub.add_parser("verify", help="run the QP and dual oracle suites", formatter_class=fmt)
    return parser


def parse_config(argv: list[str] | None = None) -> tuple[RunConfig, str]:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    seed, seed_given = ns.pop("seed"), ns.pop("seed_given")
    threads, level = ns.pop("threads"), ns.pop("log_level")
    return RunConfig(command=command, seed=seed, seed_given=seed_given, threads=threads, options=ns), level


# ── Helpers ─────────────────────────────────────────────────────────────────

def _label_column(text: str) -> str | int:
    try:
        return int(text)
    except ValueError:
        return text


def _load(cfg: RunConfig) -> Dataset:
    return load_dataset(cfg.opt("data"), cfg.opt("format"), _label_column(cfg.opt("label_column")),
                        cfg.opt("positive_label"))


def _hyper(cfg: RunConfig) -> HyperParams:
    return make_hyper(
        C=cfg.opt("C"),
        loss={"eta": cfg.opt("eta"), "p": cfg.opt("p"), "tau": cfg.opt("tau"), "eps": cfg.opt("eps")},
        kernel={"kind": cfg.opt("kernel"), "sigma": cfg.opt("sigma"), "bias_offset": cfg.opt("bias_offset")},
        hq_max_iter=cfg.opt("hq_max_iter"),
        hq_tol=cfg.opt("hq_tol"),
        qp_tol=cfg.opt("qp_tol"),
        qp_max_iter=cfg.opt("qp_max_iter"),
    )


def _noisy(cfg: RunConfig, d: Dataset) -> Dataset:
    noise = NoiseSpec.parse(cfg.opt("noise", "none"))
    if noise.kind == "none":
        return d
    if not cfg.opt("no_standardize"):
        d, _ = standardize(d)
    return noise.apply(d, cfg.seed)


def _jsonl_sibling(path: str) -> str:
    return os.path.splitext(path)[0] + ".jsonl"


def _load_unlabeled(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    df = pd.read_csv(path)
    body = df.apply(pd.to_numeric, errors="coerce")
    if df.empty or body.isna().any().any():
        raise DataError(f"{path}: expected a non-empty all-numeric feature table")
    return body.to_numpy(dtype=np.float64)


# ── Commands ────────────────────────────────────────────────────────────────

def cmd_train(cfg: RunConfig) -> int:
    d = _load(cfg)
    scaler = None
    if not cfg.opt("no_standardize"):
        d, scaler = standardize(d)
    model = replace(fit(d, cfg.opt("variant"), _hyper(cfg)), scaler=scaler)
    save_model(model, cfg.opt("out"))
    diag = model.diagnostics
    print(f"✅ model written to {cfg.opt('out')} ({diag.stop_reason}, {diag.hq_iterations} HQ iteration(s), "
          f"{diag.qp_updates} coordinate updates)")
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    model = load_model(cfg.opt("model"))
    truth = None
    if str(cfg.opt("label_column")).lower() == "none" and cfg.opt("format") != "libsvm":
        X = _load_unlabeled(cfg.opt("data"))
    else:
        d = _load(cfg)
        X, truth = d.samples, d.labels
    scores = raw_decision_values(model, X)
    out = pd.DataFrame({"row": np.arange(X.shape[0]), "score": scores, "label": np.where(scores >= 0, 1, -1)})
    if truth is not None:
        out["true_label"] = truth.astype(int)
    write_table(out, cfg.opt("out"), stamp=False)
    msg = f"✅ {X.shape[0]} prediction(s) written to {cfg.opt('out')}"
    if truth is not None:
        c = Confusion.from_predictions(truth, out["label"].to_numpy())
        msg += f" (acc={accuracy(c):.4f}, f1={f1(c):.4f})"
    print(msg)
    return 0


def cmd_cv(cfg: RunConfig) -> int:
    d = _noisy(cfg, _load(cfg))
    plan = stratified_kfold(d, cfg.opt("k"), cfg.seed)
    result = cross_validate(d, cfg.opt("variant"), _hyper(cfg), plan, scale=not cfg.opt("no_standardize"))
    write_results_csv([result], cfg.opt("out"), dataset=d.source_id)
    write_folds_jsonl([result], _jsonl_sibling(cfg.opt("out")), dataset=d.source_id)
    print(f"✅ {result.variant}: ACC {result.acc_mean:.4f}±{result.acc_sd:.4f}, "
          f"F1 {result.f1_mean:.4f}±{result.f1_sd:.4f} -> {cfg.opt('out')}")
    return 0


def cmd_grid(cfg: RunConfig) -> int:
    d = _noisy(cfg, _load(cfg))
    plan = stratified_kfold(d, cfg.opt("k"), cfg.seed)
    grid = GridSpec.preset(cfg.opt("preset"), cfg.opt("variant"), cfg.opt("kernel"))
    best, results = grid_search(d, grid, plan, scale=not cfg.opt("no_standardize"), threads=cfg.threads)
    write_results_csv(results, cfg.opt("out"), dataset=d.source_id)
    write_folds_jsonl(results, _jsonl_sibling(cfg.opt("out")), dataset=d.source_id)
    print(f"✅ best of {len(results)} point(s): {json.dumps(best.flat())} -> {cfg.opt('out')}")
    return 0


def cmd_bench(cfg: RunConfig) -> int:
    protocol = load_protocol(cfg.opt("protocol"))
    if cfg.seed_given:
        protocol = protocol.model_copy(update={"seed": cfg.seed})
    written = run_bench(protocol, cfg.opt("out_dir"), threads=cfg.threads)
    print(f"✅ bench finished: {len(written['scores'])} score matrices, {len(written['reports'])} report(s) "
          f"in {cfg.opt('out_dir')}")
    return 0


# Fixed settings for the illustrative synthetic fits.
SYNTH_HYPER = {
    "hinge": {"C": 1.0},
    "pinball": {"C": 1.0, "loss": {"tau": 0.5}},
    "en": {"C": 1.0, "loss": {"p": 0.5, "eps": 0.1}},
    "eps_baen": {"C": 1.0, "loss": {"eta": 1.0, "p": 0.5, "tau": 0.5, "eps": 0.1}},
}


def cmd_synth(cfg: RunConfig) -> int:
    out_dir = cfg.opt("out_dir")
    os.makedirs(out_dir, exist_ok=True)
    spec = SynthSpec(n=cfg.opt("n"), seed=cfg.seed)
    clean = gen_gaussian_2class(spec)
    cases = {
        "case1": inject_outliers(clean, -1, cfg.opt("outliers"), cfg.seed + 1, spec),
        "case2": inject_outliers(clean, "both", cfg.opt("outliers"), cfg.seed + 2, spec),
    }
    write_csv(clean, os.path.join(out_dir, "gaussian.csv"))
    for name, d in cases.items():
        write_csv(d, os.path.join(out_dir, f"{name}.csv"))
    write_table(loss_curves(), os.path.join(out_dir, "loss_curves.csv"), stamp=False)

    test = gen_gaussian_2class(spec.model_copy(update={"seed": cfg.seed + 10_000}))
    bbox = padded_bbox(np.vstack([d.samples for d in cases.values()]))
    rows = []
    for name, d in cases.items():
        for variant, params in SYNTH_HYPER.items():
            hp = make_hyper(kernel={"kind": "linear"}, **params)
            model = fit(d, variant, hp)
            grid = boundary_grid(model, bbox, cfg.opt("resolution"))
            write_table(grid, os.path.join(out_dir, f"boundary_{name}_{variant}.csv"), stamp=False)
            c = Confusion.from_predictions(test.labels, predict(model, test.samples))
            rows.append({"case": name, "variant": variant, "angle_deg": boundary_angle(model),
                         "clean_test_acc": accuracy(c)})
    write_table(pd.DataFrame(rows), os.path.join(out_dir, "boundary_summary.csv"), stamp=False)
    print(f"✅ synthetic data, loss curves and {len(rows)} boundary lattices written to {out_dir}")
    return 0


def cmd_stats(cfg: RunConfig) -> int:
    scores, names, datasets = load_scores(cfg.opt("scores"))
    rt = average_ranks(scores, not cfg.opt("lower_is_better"), names, datasets)
    report = friedman_report(rt, alpha=cfg.opt("alpha"), q=cfg.opt("q"))
    with open(cfg.opt("out"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    ff = "undefined" if report["f_f"] is None else f"{report['f_f']:.2f}"
    print(f"✅ chi2_F={report['chi2_f']:.2f} F_F={ff} CD={report['cd']:.2f} -> {cfg.opt('out')}")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    results = run_verify(cfg.seed)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "cv": cmd_cv,
    "grid": cmd_grid,
    "bench": cmd_bench,
    "synth": cmd_synth,
    "stats": cmd_stats,
    "verify": cmd_verify,
}


def dispatch(cfg: RunConfig) -> int:
    return COMMANDS[cfg.command](cfg)


def main(argv: list[str] | None = None) -> int:
    cfg, level = parse_config(argv)
    logging.basicConfig(level=level.upper(), format="%(asctime)s %(levelname)s %(message)s")
    try:
        return dispatch(cfg)
    except BaenError as exc:
        print(exc.one_line(), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        logger.debug("unexpected failure", exc_info=True)
        print(f"error=internal {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
