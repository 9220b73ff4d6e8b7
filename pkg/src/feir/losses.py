"""Differentiable expected utility, envy, and inferiority under the multinomial
recommendation model, the weighted combined loss, hand-derived gradients for
both policy parametrizations, and the oracles (finite differences, Monte
Carlo) that keep the closed forms honest.

For a policy row P[i] and list length k, the per-user expectations are

    E[utility_i]        = k * sum_j P[i,j] U[i,j]
    E[envy_{i -> t}]    = k * sum_j (P[t,j] - P[i,j]) U[i,j]
    E[inferiority_{i->t}] = sum_j max(0, S[t,j] - S[i,j])
                                  * (1 - (1-P[i,j])^k) * (1 - (1-P[t,j])^k)

where (1 - (1-p)^k) is the probability the item lands in the list at least
once. System losses average over users; the envy hinge max(0, .) applies to
the pairwise expectation, with subgradient 0 on the inactive branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionError, row_softmax

PARAMETRIZATIONS = ("logits", "direct")


@dataclass(frozen=True)
class LossWeights:
    """Term weights (envy, inferiority, negative utility, simplex penalty)."""

    w1: float
    w2: float
    w3: float
    w4: float = 0.0

    def __post_init__(self):
        if min(self.w1, self.w2, self.w3, self.w4) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.w1 == self.w2 == self.w3 == 0:
            raise ValueError("at least one of the envy/inferiority/utility weights must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    envy_loss: float
    inferiority_loss: float
    neg_utility_loss: float
    penalty_loss: float
    total: float

    def as_dict(self) -> dict:
        return {
            "envy_loss": self.envy_loss,
            "inferiority_loss": self.inferiority_loss,
            "neg_utility_loss": self.neg_utility_loss,
            "penalty_loss": self.penalty_loss,
            "total": self.total,
        }


def hit_probability(P, k: int) -> np.ndarray:
    """Probability that an item is drawn at least once in k rolls: 1-(1-p)^k.

    Integer powers keep this a polynomial (valid even when an unconstrained
    direct-mode iterate strays outside [0, 1]); probabilities within 1e-12 of
    1 go through log1p to keep the complement accurate.
    """
    P = np.asarray(P, dtype=float)
    base = 1.0 - P
    with np.errstate(over="ignore"):
        out = 1.0 - base ** int(k)
    near_one = (P > 1.0 - 1e-12) & (P < 1.0)
    if np.any(near_one):
        safe = np.where(near_one, P, 0.5)
        out = np.where(near_one, -np.expm1(k * np.log1p(-safe)), out)
    return out


def hit_probability_grad(P, k: int) -> np.ndarray:
    """d/dp of 1-(1-p)^k, i.e. k (1-p)^(k-1)."""
    P = np.asarray(P, dtype=float)
    base = 1.0 - P
    with np.errstate(over="ignore"):
        out = k * base ** (int(k) - 1)
    near_one = (P > 1.0 - 1e-12) & (P < 1.0)
    if np.any(near_one):
        safe = np.where(near_one, P, 0.5)
        out = np.where(near_one, k * np.exp((k - 1) * np.log1p(-safe)), out)
    return out


def expected_user_utility(i: int, U, P, k: int) -> float:
    U = np.asarray(U)
    P = np.asarray(P)
    return float(k * np.dot(P[i], U[i]))


def expected_pair_envy(i: int, i_star: int, U, P, k: int) -> float:
    """Signed expected envy from i toward i_star (hinge applied system-side)."""
    if i == i_star:
        raise ValueError("envy is defined between two distinct users")
    U = np.asarray(U)
    P = np.asarray(P)
    return float(k * np.dot(P[i_star] - P[i], U[i]))


def expected_pair_inferiority(i: int, i_star: int, S, P, k: int) -> float:
    if i == i_star:
        raise ValueError("inferiority is defined between two distinct users")
    S = np.asarray(S)
    q = hit_probability(np.asarray(P), k)
    deficit = np.maximum(0.0, S[i_star] - S[i])
    return float(np.sum(deficit * q[i] * q[i_star]))


def pair_envy_matrix(U, P, k: int) -> np.ndarray:
    """All pairwise expected envies; entry [i, t] is envy from i toward t."""
    U = np.asarray(U, dtype=float)
    P = np.asarray(P, dtype=float)
    M = U @ P.T
    # the own-list term is M's diagonal; reusing it makes equal rows cancel exactly
    E = k * (M - np.diag(M)[:, None])
    np.fill_diagonal(E, 0.0)
    return E


def _utility_loss_grad(U, P, k, m_norm):
    loss = -(k / m_norm) * float(np.sum(P * U))
    grad = -(k / m_norm) * U
    return loss, grad


def _envy_loss_grad(U, P, k, m_norm):
    M = U @ P.T
    E = k * (M - np.diag(M)[:, None])
    np.fill_diagonal(E, 0.0)
    active = E > 0.0
    loss = float(np.sum(np.where(active, E, 0.0)) / m_norm)
    A = active.astype(float)
    # d/dP[t]: +k U[i] for every active pair (i, t); d/dP[i]: -k U[i] per active pair
    grad = (k / m_norm) * (A.T @ U - A.sum(axis=1)[:, None] * U)
    return loss, grad


def _inferiority_loss_grad(S, P, k, f_rows, m_norm):
    """Expected inferiority summed over ordered pairs (i in f_rows, t any other
    user), divided by m_norm, plus its gradient w.r.t. every row of P."""
    q = hit_probability(P, k)
    qg = hit_probability_grad(P, k)
    # deficit[i, t, j] = max(0, S[t, j] - S[f_rows[i], j]); the t == i slice is 0
    deficit = np.maximum(0.0, S[None, :, :] - S[f_rows][:, None, :])
    loss = float(np.einsum("itj,ij,tj->", deficit, q[f_rows], q) / m_norm)
    grad = np.zeros_like(P)
    grad += qg * np.einsum("itj,ij->tj", deficit, q[f_rows])      # role: rival t
    own = qg[f_rows] * np.einsum("itj,tj->ij", deficit, q)        # role: measured user i
    grad[f_rows] += own
    return loss, grad / m_norm


def _penalty_loss_grad(P):
    residual = P.sum(axis=1) - 1.0
    loss = float(np.sum(residual**2))
    grad = np.broadcast_to(2.0 * residual[:, None], P.shape).copy()
    return loss, grad


def softmax_grad_chain(P, G) -> np.ndarray:
    """Pull a gradient w.r.t. probabilities back through a row softmax."""
    return P * (G - np.einsum("ij,ij->i", G, P)[:, None])


def system_losses(U, S, P, k: int) -> tuple[float, float, float]:
    """System-level loss terms (neg utility, envy, inferiority).

    Utility is negated so that every term is minimized; envy keeps only
    positive pairwise expectations; inferiority sums all ordered pairs. Each
    is divided by the number of users.
    """
    U = np.asarray(U, dtype=float)
    S = np.asarray(S, dtype=float)
    P = np.asarray(P, dtype=float)
    if U.shape != S.shape or U.shape != P.shape:
        raise DimensionError(f"shape mismatch: U {U.shape}, S {S.shape}, P {P.shape}")
    m = U.shape[0]
    l_u, _ = _utility_loss_grad(U, P, k, m)
    l_e, _ = _envy_loss_grad(U, P, k, m)
    l_f, _ = _inferiority_loss_grad(S, P, k, np.arange(m), m)
    return l_u, l_e, l_f


def penalty_loss(P_raw) -> float:
    """Squared deviation of each row sum from 1, summed over rows."""
    loss, _ = _penalty_loss_grad(np.asarray(P_raw, dtype=float))
    return loss


def total_loss(U, S, P, k: int, weights: LossWeights) -> LossBreakdown:
    """Weighted combination of the four loss terms at policy P."""
    l_u, l_e, l_f = system_losses(U, S, P, k)
    l_p = penalty_loss(P)
    total = weights.w1 * l_e + weights.w2 * l_f + weights.w3 * l_u + weights.w4 * l_p
    return LossBreakdown(
        envy_loss=l_e,
        inferiority_loss=l_f,
        neg_utility_loss=l_u,
        penalty_loss=l_p,
        total=total,
    )


def grad_total_loss(U, S, P_params, k: int, weights: LossWeights, parametrization: str = "logits") -> np.ndarray:
    """Analytic gradient of the combined loss w.r.t. the free parameters.

    "logits": P_params are unconstrained row scores, P = row_softmax(P_params);
    the penalty is omitted because the softmax keeps rows stochastic.
    "direct": P_params is the probability matrix itself and the penalty term
    is active. The envy hinge uses subgradient 0 at the kink.
    """
    U = np.asarray(U, dtype=float)
    S = np.asarray(S, dtype=float)
    P_params = np.asarray(P_params, dtype=float)
    if parametrization not in PARAMETRIZATIONS:
        raise ValueError(f"unknown parametrization {parametrization!r}")
    m = U.shape[0]
    P = row_softmax(P_params) if parametrization == "logits" else P_params
    _, g_u = _utility_loss_grad(U, P, k, m)
    _, g_e = _envy_loss_grad(U, P, k, m)
    _, g_f = _inferiority_loss_grad(S, P, k, np.arange(m), m)
    G = weights.w1 * g_e + weights.w2 * g_f + weights.w3 * g_u
    if parametrization == "direct":
        _, g_p = _penalty_loss_grad(P)
        return G + weights.w4 * g_p
    return softmax_grad_chain(P, G)


def finite_diff_grad(loss_fn, params, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient, one coordinate at a time."""
    if h <= 0:
        raise ValueError("h must be positive")
    params = np.asarray(params, dtype=float)
    grad = np.zeros_like(params)
    it = np.nditer(params, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        bumped = params.copy()
        bumped[idx] = params[idx] + h
        up = loss_fn(bumped)
        bumped[idx] = params[idx] - h
        down = loss_fn(bumped)
        grad[idx] = (up - down) / (2.0 * h)
        it.iternext()
    return grad


@dataclass(frozen=True)
class MCEstimate:
    """Empirical means and standard errors over repeated list samples.

    Pairwise envy is the signed expectation (the hinge belongs outside the
    expectation); envy_pos_mean additionally reports E[max(0, envy)] for
    inspection of the hinge/expectation ordering gap.
    """

    utility_mean: np.ndarray
    utility_se: np.ndarray
    envy_mean: np.ndarray
    envy_se: np.ndarray
    inferiority_mean: np.ndarray
    inferiority_se: np.ndarray
    envy_pos_mean: np.ndarray
    samples: int


def mc_estimate(U, S, P, k: int, samples: int, seed: int = 0) -> MCEstimate:
    """Monte-Carlo check of the closed-form expectations.

    Draws `samples` full recommendation rounds (every user's list resampled
    each round), evaluates the deterministic per-user utility and per-pair
    envy/inferiority on each, and returns means with standard errors.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    U = np.asarray(U, dtype=float)
    S = np.asarray(S, dtype=float)
    P = np.asarray(P, dtype=float)
    m, n = U.shape
    rng = np.random.default_rng(seed)
    pvals = P / P.sum(axis=1, keepdims=True)
    X = rng.multinomial(k, pvals, size=(samples, m)).astype(float)   # (s, m, n)

    util = np.einsum("smj,mj->sm", X, U)
    # listval[s, i, t] = value of t's list through i's utilities
    listval = np.einsum("ij,stj->sit", U, X)
    envy = listval - np.einsum("sii->si", listval)[:, :, None]

    B = X > 0
    deficit = np.maximum(0.0, S[None, :, :] - S[:, None, :])         # (i, t, j)
    inf_samples = np.einsum("itj,sij,stj->sit", deficit, B, B)

    def _mean_se(A):
        mean = A.mean(axis=0)
        if samples > 1:
            se = A.std(axis=0, ddof=1) / np.sqrt(samples)
        else:
            se = np.zeros_like(mean)
        return mean, se

    util_mean, util_se = _mean_se(util)
    envy_mean, envy_se = _mean_se(envy)
    inf_mean, inf_se = _mean_se(inf_samples)
    envy_pos_mean = np.maximum(0.0, envy).mean(axis=0)
    eye = np.eye(m, dtype=bool)
    for M in (envy_mean, envy_se, inf_mean, inf_se, envy_pos_mean):
        M[eye] = 0.0
    return MCEstimate(
        utility_mean=util_mean,
        utility_se=util_se,
        envy_mean=envy_mean,
        envy_se=envy_se,
        inferiority_mean=inf_mean,
        inferiority_se=inf_se,
        envy_pos_mean=envy_pos_mean,
        samples=samples,
    )
