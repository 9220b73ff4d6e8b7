"""Deterministic evaluation of realized recommendation lists: utility, envy,
inferiority, overall fairness, competition indicators, and item-exposure Gini.

All functions are pure and operate on plain arrays (CountMatrix instances are
unwrapped). Pair sums run in a fixed order so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CountMatrix, DimensionError


def _counts(C) -> np.ndarray:
    return C.C if isinstance(C, CountMatrix) else np.asarray(C)


def _require_binary(C: np.ndarray) -> None:
    if not np.all((C == 0) | (C == 1)):
        raise ValueError("this metric requires a binary count matrix")


@dataclass(frozen=True)
class SystemMetrics:
    """System-level averages; overall_fairness = envy + inferiority."""

    utility: float
    envy: float
    inferiority: float
    overall_fairness: float
    k: int


@dataclass(frozen=True)
class CompetitionMetrics:
    mean_rank_per_user: np.ndarray
    mean_gap_per_user: np.ndarray
    mean_rank: float
    mean_gap: float


@dataclass(frozen=True)
class NormalizedMetrics:
    """Ratios against the naive recommendation at the same k.

    Envy stays raw because the naive baseline has zero envy by construction.
    A ratio is None (absent, never infinite) when the naive denominator is 0.
    """

    utility_norm: float | None
    inferiority_norm: float | None
    overall_norm: float | None
    envy: float


def user_utility(i: int, U, C) -> float:
    """Utility of user i's list: sum over items of score times count."""
    C = _counts(C)
    return float(np.dot(np.asarray(U)[i], C[i]))


def user_envy(i: int, i_star: int, U, C) -> float:
    """Signed envy from user i toward i_star, valued with i's own utilities.

    Positive means i would prefer i_star's list to their own.
    """
    if i == i_star:
        raise ValueError("envy is defined between two distinct users")
    C = _counts(C)
    U = np.asarray(U)
    return float(np.dot(U[i], C[i_star] - C[i]))


def user_inferiority(i: int, i_star: int, S, C) -> float:
    """Suitability deficit of i against i_star on commonly recommended items.

    An item recommended to both counts once regardless of repeat counts, and
    only when i_star is strictly more suitable. Always >= 0.
    """
    if i == i_star:
        raise ValueError("inferiority is defined between two distinct users")
    C = _counts(C)
    S = np.asarray(S)
    common = np.minimum(1, C[i] * C[i_star])
    return float(np.sum(np.maximum(0.0, S[i_star] - S[i]) * common))


def _pair_envy_matrix(U: np.ndarray, C: np.ndarray) -> np.ndarray:
    # E[i, t] = sum_j U[i,j] * (C[t,j] - C[i,j])
    M = U @ C.T.astype(float)
    return M - np.diag(M)[:, None]


def _pair_inferiority_matrix(S: np.ndarray, C: np.ndarray) -> np.ndarray:
    m = S.shape[0]
    B = (C > 0)
    F = np.zeros((m, m))
    for i in range(m):
        deficit = np.maximum(0.0, S - S[i])          # (m, n), row t = S[t] - S[i] clipped
        shared = B & B[i]                            # items in both lists
        F[i] = np.sum(deficit * shared, axis=1)
    np.fill_diagonal(F, 0.0)
    return F


def system_metrics(U, S, C, *, pair_normalizer: str = "users") -> SystemMetrics:
    """System utility, envy, and inferiority of a realized recommendation.

    Utility is the per-user mean. Envy sums max(0, pairwise envy) and
    inferiority sums all pairwise deficits, each over ordered user pairs and
    divided by the number of users m (not by the number of pairs). The
    `pair_normalizer="pairs"` flag switches to m*(m-1) for cross-convention
    comparisons; it is off by default.
    """
    U = np.asarray(U, dtype=float)
    S = np.asarray(S, dtype=float)
    C = _counts(C)
    if U.shape != S.shape or U.shape != C.shape:
        raise DimensionError(f"shape mismatch: U {U.shape}, S {S.shape}, C {C.shape}")
    row_sums = C.sum(axis=1)
    if np.any(row_sums != row_sums[0]):
        raise ValueError("count matrix rows must all sum to the same k")
    k = int(row_sums[0])
    m = U.shape[0]
    if pair_normalizer == "users":
        norm = float(m)
    elif pair_normalizer == "pairs":
        norm = float(max(1, m * (m - 1)))
    else:
        raise ValueError(f"unknown pair_normalizer {pair_normalizer!r}")

    utility = float(np.sum(U * C) / m)
    if m == 1:
        envy = inferiority = 0.0
    else:
        E = _pair_envy_matrix(U, C)
        np.fill_diagonal(E, 0.0)
        envy = float(np.sum(np.maximum(0.0, E)) / norm)
        F = _pair_inferiority_matrix(S, C)
        inferiority = float(np.sum(F) / norm)
    return SystemMetrics(
        utility=utility,
        envy=envy,
        inferiority=inferiority,
        overall_fairness=envy + inferiority,
        k=k,
    )


def inferiority_by_user(S, C) -> np.ndarray:
    """Total outgoing inferiority of each user, summed over all rivals.

    The mean of this vector over any user subset gives that group's
    inferiority; the mean over everyone times m recovers the system pair sum.
    """
    S = np.asarray(S, dtype=float)
    C = _counts(C)
    return _pair_inferiority_matrix(S, C).sum(axis=1)


def normalized_metrics(metrics: SystemMetrics, naive_metrics: SystemMetrics) -> NormalizedMetrics:
    """Divide utility, inferiority, and overall fairness by the naive values.

    Ratios with a zero naive denominator are reported as None rather than
    infinity so downstream trade-off tooling never sees non-finite values.
    """

    def ratio(value: float, denom: float) -> float | None:
        return value / denom if denom != 0.0 else None

    return NormalizedMetrics(
        utility_norm=ratio(metrics.utility, naive_metrics.utility),
        inferiority_norm=ratio(metrics.inferiority, naive_metrics.inferiority),
        overall_norm=ratio(metrics.overall_fairness, naive_metrics.overall_fairness),
        envy=metrics.envy,
    )


def competition_metrics(S, C, k: int | None = None) -> CompetitionMetrics:
    """Per-user competition indicators on a binary recommendation.

    For each recommended item, a user's rivals are the strictly more suitable
    users who received the same item. rank(i) averages rival counts over the
    k slots; gap(i) averages the mean suitability shortfall against those
    rivals (a slot with no rivals contributes 0).
    """
    S = np.asarray(S, dtype=float)
    C = _counts(C)
    _require_binary(C)
    m, n = S.shape
    if k is None:
        k = int(C[0].sum())
    rival_counts = np.zeros((m, n))
    gap_sums = np.zeros((m, n))
    for j in range(n):
        picked = C[:, j] == 1
        if picked.sum() < 2:
            continue
        s = S[:, j]
        # rivals of i on item j: picked users with strictly higher suitability
        better = picked[None, :] & (s[None, :] > s[:, None])   # (i, t)
        rival_counts[:, j] = np.where(picked, better.sum(axis=1), 0)
        shortfall = np.where(better, s[None, :] - s[:, None], 0.0)
        gap_sums[:, j] = np.where(picked, shortfall.sum(axis=1), 0.0)
    rank_per_user = rival_counts.sum(axis=1) / k
    gap_per_user = np.sum(gap_sums / np.maximum(1.0, rival_counts), axis=1) / k
    rank_per_user.setflags(write=False)
    gap_per_user.setflags(write=False)
    return CompetitionMetrics(
        mean_rank_per_user=rank_per_user,
        mean_gap_per_user=gap_per_user,
        mean_rank=float(rank_per_user.mean()),
        mean_gap=float(gap_per_user.mean()),
    )


def gini_index(C) -> float:
    """Gini coefficient of item exposure (how often each item is recommended).

    Equals sum_{j,j'} |x_j - x_j'| / (2 n sum_j x_j) for the exposure vector
    x; evaluated via the sorted form. All-zero exposure returns 0.
    """
    C = _counts(C)
    _require_binary(C)
    x = np.sort(C.sum(axis=0).astype(float))
    n = x.size
    total = x.sum()
    if total == 0.0:
        return 0.0
    idx = np.arange(1, n + 1)
    return float(np.sum((2 * idx - n - 1) * x) / (n * total))


def metrics_record(system: SystemMetrics, competition: CompetitionMetrics, gini: float) -> dict:
    """Flat JSON-ready record of the full deterministic evaluation."""
    return {
        "utility": system.utility,
        "envy": system.envy,
        "inferiority": system.inferiority,
        "overall_fairness": system.overall_fairness,
        "mean_rank": competition.mean_rank,
        "mean_gap": competition.mean_gap,
        "gini": gini,
        "k": system.k,
    }
