"""
Stats Engine – Friedman omnibus test and Nemenyi post-hoc comparison over a
classifiers × datasets score matrix.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from errors import StatsError

logger = logging.getLogger(__name__)

# Two-tailed Nemenyi critical values q_α (studentized range / √2), k = 2..10 (Demšar, 2006).
Q_TABLE = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920),
}


@dataclass(frozen=True)
class RankTable:
    """Rows are classifiers, columns datasets; rank 1 is best, ties share midranks."""

    scores: np.ndarray
    ranks: np.ndarray
    mean_ranks: np.ndarray
    names: tuple[str, ...]
    datasets: tuple[str, ...]

    @property
    def k(self) -> int:
        return self.ranks.shape[0]

    @property
    def N(self) -> int:
        return self.ranks.shape[1]


def average_ranks(scores, higher_is_better: bool = True, names=None, datasets=None) -> RankTable:
    S = np.asarray(scores, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] < 2 or S.shape[1] < 2:
        raise StatsError(f"need at least 2 classifiers x 2 datasets, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise StatsError("score matrix contains NaN or Inf")
    k, N = S.shape
    names = tuple(names) if names is not None else tuple(f"c{j + 1}" for j in range(k))
    datasets = tuple(datasets) if datasets is not None else tuple(f"d{i + 1}" for i in range(N))
    if len(names) != k or len(datasets) != N:
        raise StatsError("classifier / dataset names do not match the score matrix")
    ranks = stats.rankdata(-S if higher_is_better else S, method="average", axis=0)
    return RankTable(S, ranks, ranks.mean(axis=1), names, datasets)


def friedman_chi2(rt: RankTable) -> float:
    k, N = rt.k, rt.N
    chi2 = 12.0 * N / (k * (k + 1)) * (np.sum(rt.mean_ranks ** 2) - k * (k + 1) ** 2 / 4.0)
    return max(0.0, float(chi2))


def friedman_f(chi2: float, N: int, k: int) -> float:
    """Iman–Davenport correction F_F = (N−1)χ² / (N(k−1) − χ²)."""
    denom = N * (k - 1) - chi2
    if denom <= 0:
        raise StatsError(f"F_F undefined: N(k-1) - chi2 = {denom:g} <= 0 (rankings agree completely)")
    return (N - 1) * chi2 / denom


def nemenyi_q(k: int, alpha: float = 0.05) -> float:
    """Tabulated q_α for k ≤ 10, otherwise the studentized-range quantile over √2."""
    if k < 2:
        raise StatsError("Nemenyi q needs k >= 2")
    if alpha in Q_TABLE and k <= 10:
        return Q_TABLE[alpha][k - 2]
    return float(stats.studentized_range.ppf(1.0 - alpha, k, np.inf) / math.sqrt(2.0))


def nemenyi_cd(k: int, N: int, q: float) -> float:
    if q <= 0:
        raise StatsError("studentized-range quantile q must be positive")
    if N <= 0 or k < 2:
        raise StatsError(f"invalid sizes k={k}, N={N}")
    return q * math.sqrt(k * (k + 1) / (6.0 * N))


def cd_cliques(mean_ranks, cd: float) -> list[list[int]]:
    """Maximal groups (indices, ≥ 2 members) whose pairwise rank gaps are all ≤ cd."""
    r = np.asarray(mean_ranks, dtype=np.float64)
    order = np.argsort(r, kind="stable")
    rs = r[order]
    slack = 1e-12 * max(1.0, abs(cd))
    cliques = []
    last_end = -1
    for i in range(rs.size):
        j = i
        while j + 1 < rs.size and rs[j + 1] - rs[i] <= cd + slack:
            j += 1
        if j > last_end and j > i:
            cliques.append([int(x) for x in order[i:j + 1]])
        last_end = max(last_end, j)
    return cliques


def cd_diagram_data(rt: RankTable, cd: float) -> dict:
    order = np.argsort(rt.mean_ranks, kind="stable")
    return {
        "cd": cd,
        "ranks": [{"name": rt.names[j], "mean_rank": float(rt.mean_ranks[j])} for j in order],
        "cliques": [[rt.names[j] for j in c] for c in cd_cliques(rt.mean_ranks, cd)],
    }


def pairwise_significance(rt: RankTable, cd: float) -> list[dict]:
    out = []
    for a in range(rt.k):
        for b in range(a + 1, rt.k):
            diff = abs(float(rt.mean_ranks[a] - rt.mean_ranks[b]))
            out.append({"a": rt.names[a], "b": rt.names[b], "rank_diff": diff, "significant": diff > cd})
    return out


def friedman_report(rt: RankTable, alpha: float = 0.05, q: float | None = None) -> dict:
    k, N = rt.k, rt.N
    chi2 = friedman_chi2(rt)
    try:
        ff = friedman_f(chi2, N, k)
        ff_p = float(stats.f.sf(ff, k - 1, (k - 1) * (N - 1)))
    except StatsError as exc:
        logger.warning("[STATS] %s", exc.detail)
        ff, ff_p = None, None
    q = nemenyi_q(k, alpha) if q is None else q
    cd = nemenyi_cd(k, N, q)
    report = {
        "k": k,
        "N": N,
        "alpha": alpha,
        "classifiers": list(rt.names),
        "datasets": list(rt.datasets),
        "mean_ranks": {rt.names[j]: float(rt.mean_ranks[j]) for j in range(k)},
        "chi2_f": chi2,
        "chi2_p": float(stats.chi2.sf(chi2, k - 1)),
        "f_f": ff,
        "f_p": ff_p,
        "q": q,
        "cd": cd,
        "pairwise": pairwise_significance(rt, cd),
        "diagram": cd_diagram_data(rt, cd),
    }
    logger.info("[STATS] k=%d N=%d chi2_F=%.4f F_F=%s CD=%.4f", k, N, chi2,
                "undefined" if ff is None else f"{ff:.4f}", cd)
    return report


def scores_frame(scores: np.ndarray, names, datasets) -> pd.DataFrame:
    df = pd.DataFrame(np.asarray(scores), columns=list(datasets))
    df.insert(0, "classifier", list(names))
    return df


def load_scores(path: str) -> tuple[np.ndarray, tuple[str, ...], tuple[str, ...]]:
    """Scores CSV: a ``classifier`` column followed by one numeric column per dataset."""
    try:
        df = pd.read_csv(path, comment="#")
    except FileNotFoundError:
        raise StatsError(f"scores file not found: {path}")
    except pd.errors.EmptyDataError:
        raise StatsError(f"scores file is empty: {path}")
    if df.shape[1] < 3:
        raise StatsError("scores file needs a classifier column and at least 2 dataset columns")
    names = tuple(str(v) for v in df.iloc[:, 0])
    body = df.iloc[:, 1:].apply(pd.to_numeric, errors="coerce")
    if body.isna().any().any():
        raise StatsError("scores file has non-numeric cells")
    return body.to_numpy(dtype=np.float64), names, tuple(str(c) for c in df.columns[1:])
