"""Large-sample sensitivity analysis for general matched sets.

For a bias bound ``Gamma`` the worst-case law of a set's statistic puts weight
``Gamma`` on its ``n_i - a`` largest scores and weight 1 on the rest, for the
cut ``a`` maximizing the mean; among mean-maximizing cuts the variance is
maximized. Summing per-set moments gives a Gaussian bound for ``T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .constraints import QuantileBound, VectorBound, check_k
from .core import check_bias
from .scores import ScoreMatrix

#: Relative window within which two cut points (or two set gaps) count as tied.
TIE_REL = 1e-12


@dataclass(frozen=True)
class PerSetMoments:
    """Worst-case mean, variance and maximizing cut ``a`` (None if unbounded)."""

    mu: np.ndarray
    var: np.ndarray
    argmax_a: np.ndarray | None
    gamma: np.ndarray

    def __len__(self) -> int:
        return len(self.mu)


@dataclass(frozen=True)
class WorstCaseGaussian:
    mu: float
    sigma2: float
    selected: np.ndarray


def _tie_tol(scores: ScoreMatrix) -> np.ndarray:
    spread = np.maximum(np.abs(scores.set_max), np.abs(scores.set_min))
    return TIE_REL * np.maximum(spread, np.finfo(float).tiny)


def set_moments(scores: ScoreMatrix, gamma) -> PerSetMoments:
    """Worst-case moments of every set at per-set biases ``gamma`` (scalar or vector)."""
    n_sets = scores.n_sets
    gamma = np.array(np.broadcast_to(np.asarray(gamma, dtype=float), (n_sets,)))
    for g in np.unique(gamma):
        check_bias(g)
    sizes = scores.sizes
    n_max = scores.sorted_scores.shape[1]
    rows = np.arange(n_sets)
    q_tot = scores.cum_q[rows, sizes - 1]
    s_tot = scores.cum_q2[rows, sizes - 1]

    a = np.arange(1, n_max)[None, :]                  # cut points 1..n_max-1
    valid = a <= (sizes[:, None] - 1)
    finite = np.isfinite(gamma)
    g = np.where(finite, gamma, 1.0)[:, None]
    q_a = scores.cum_q[:, :-1]
    s_a = scores.cum_q2[:, :-1]
    denom = a + g * (sizes[:, None] - a)
    # cuts beyond a set's size can divide by zero; they are masked out below
    with np.errstate(divide="ignore", invalid="ignore"):
        mu_a = (q_a + g * (q_tot[:, None] - q_a)) / denom
        ex2_a = (s_a + g * (s_tot[:, None] - s_a)) / denom
        var_a = ex2_a - mu_a**2
    mu_a = np.where(valid, mu_a, -np.inf)

    best = np.argmax(mu_a, axis=1)
    mu = mu_a[rows, best]
    tied = valid & (mu_a >= (mu - _tie_tol(scores))[:, None])
    var = np.max(np.where(tied, var_a, -np.inf), axis=1)
    # among tied cuts keep the first one attaining the max variance
    argmax_a = np.argmax(tied & (var_a >= var[:, None]), axis=1) + 1
    var = np.maximum(var, 0.0)

    mu = np.where(finite, mu, scores.set_max)
    var = np.where(finite, var, 0.0)
    argmax_a = np.where(finite, argmax_a, 0)
    return PerSetMoments(mu, var, argmax_a, gamma)


def per_set_worst_moments(q, gamma: float) -> tuple[float, float, int | None]:
    """Worst-case ``(mu, var, a)`` for a single set of scores ``q``."""
    sm = ScoreMatrix.from_sets([np.asarray(q, dtype=float)], [0])
    m = set_moments(sm, gamma)
    a = None if math.isinf(check_bias(gamma)) else int(m.argmax_a[0])
    return float(m.mu[0]), float(m.var[0]), a


def select_sets_quantile(
    at_gamma0: PerSetMoments, unbounded: PerSetMoments, k: int, tol: np.ndarray | float = 0.0
) -> np.ndarray:
    """Indices of the ``k`` sets kept at the bias bound.

    Sets are ranked by the mean gap ``mu_i(inf) - mu_i(Gamma0)`` ascending; gaps
    within ``tol`` of each other count as tied and are ordered by larger
    variance first, then by set index.
    """
    n = len(at_gamma0)
    check_k(k, n)
    gap = unbounded.mu - at_gamma0.mu
    order = np.argsort(gap, kind="stable")
    g_sorted = gap[order]
    tol_sorted = np.broadcast_to(np.asarray(tol, dtype=float), (n,))[order]
    breaks = np.diff(g_sorted) > np.maximum(tol_sorted[1:], tol_sorted[:-1])
    cluster = np.empty(n, dtype=int)
    cluster[order] = np.concatenate([[0], np.cumsum(breaks)])
    rank = np.lexsort((np.arange(n), -at_gamma0.var, cluster))
    return np.sort(rank[:k])


def worst_case_gaussian(
    scores: ScoreMatrix, constraint, unbounded: PerSetMoments | None = None
) -> WorstCaseGaussian:
    """Gaussian bound for ``T``; ``unbounded`` may pass cached moments at infinite bias."""
    if isinstance(constraint, VectorBound):
        if constraint.gamma.size != scores.n_sets:
            raise ValueError("bias vector length must equal the number of sets")
        m = set_moments(scores, constraint.gamma)
        return WorstCaseGaussian(math.fsum(m.mu), math.fsum(m.var), np.arange(scores.n_sets))
    if isinstance(constraint, QuantileBound):
        check_k(constraint.k, scores.n_sets)
        if constraint.vacuous:
            raise ValueError("quantile bounds need a finite gamma0 for the Gaussian bound")
        m0 = set_moments(scores, constraint.gamma0)
        minf = unbounded if unbounded is not None else set_moments(scores, math.inf)
        sel = select_sets_quantile(m0, minf, constraint.k, tol=_tie_tol(scores))
        mask = np.zeros(scores.n_sets, dtype=bool)
        mask[sel] = True
        mu = math.fsum(m0.mu[mask]) + math.fsum(scores.set_max[~mask])
        return WorstCaseGaussian(mu, math.fsum(m0.var[mask]), sel)
    raise TypeError(f"unsupported constraint {constraint!r}")


def asymptotic_pvalue(t_obs: float, law: WorstCaseGaussian) -> float:
    if law.sigma2 < 0:
        raise ValueError("negative variance")
    if t_obs < law.mu:
        return 1.0
    if law.sigma2 == 0:
        return 1.0 if t_obs <= law.mu else 0.0
    return float(ndtr(-(t_obs - law.mu) / math.sqrt(law.sigma2)))


def modified_pvalue(p: float, gamma0: float, k: int, gamma_max: float = math.inf, k_min: int = 1) -> float:
    """Conservative p-value of 1 outside ``gamma0 <= gamma_max`` and ``k >= k_min``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if gamma0 > gamma_max or k < k_min:
        return 1.0
    return p


def set_pvalue(scores: ScoreMatrix, constraint, unbounded: PerSetMoments | None = None) -> float:
    """Gaussian worst-case p-value; a vacuous quantile bound returns 1."""
    if isinstance(constraint, QuantileBound) and constraint.vacuous:
        return 1.0
    return asymptotic_pvalue(scores.t_obs, worst_case_gaussian(scores, constraint, unbounded))
