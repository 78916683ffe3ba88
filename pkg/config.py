"""
config.py – runtime defaults, overridable through the environment / .env.
"""

import os

from dotenv import load_dotenv

load_dotenv()

# ── Reproducibility ─────────────────────────────────────────────────────────
SEED = int(os.getenv("BAEN_SEED", "42"))

# ── Parallelism (0 = all available cores) ───────────────────────────────────
THREADS = int(os.getenv("BAEN_THREADS", "0"))

# ── Output / logging ────────────────────────────────────────────────────────
OUTPUT_DIR = os.getenv("BAEN_OUTPUT_DIR", "runs")
LOG_LEVEL = os.getenv("BAEN_LOG_LEVEL", "INFO")

# ── Solver defaults ─────────────────────────────────────────────────────────
QP_TOL = float(os.getenv("BAEN_QP_TOL", "1e-6"))
HQ_MAX_ITER = int(os.getenv("BAEN_HQ_MAX_ITER", "50"))

# ── synth command ───────────────────────────────────────────────────────────
GRID_RESOLUTION = int(os.getenv("BAEN_GRID_RESOLUTION", "200"))

MODEL_FORMAT = "baen-model/1"
BENCH_FORMAT = "baen-bench/1"


def resolve_threads(threads: int | None = None) -> int:
    """Number of worker threads; 0 or None means every available core."""
    n = THREADS if threads is None else threads
    if n <= 0:
        return os.cpu_count() or 1
    return n
