"""Finite-sample sensitivity analysis for matched pairs.

Under a bias bound ``Gamma_i`` the statistic of pair ``i`` is stochastically
dominated by a two-point variable that takes the larger score with probability
``Gamma_i / (1 + Gamma_i)``. Quantile bounds leave the ``I - k`` pairs with the
largest score gaps unconstrained (point mass at the larger score). The tail of
the summed bound is computed either exactly, by convolving the two-point laws
on a fine lattice, or by Monte Carlo with common random numbers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .constraints import QuantileBound, VectorBound, check_k
from .core import check_bias
from .scores import ScoreMatrix

#: Monte-Carlo draws are generated in column batches of this width; the batch
#: index keys the random substream, so results do not depend on thread count.
MC_BATCH = 8192
DEFAULT_MC = 100_000
MAX_SUPPORT = 1_000_000
LATTICE_REL = 1e-9


class NotPairStudyError(ValueError):
    pass


class SupportTooLargeError(RuntimeError):
    pass


@dataclass(frozen=True)
class PairWorstCaseLaw:
    lo: np.ndarray
    hi: np.ndarray
    p_hi: np.ndarray

    @property
    def n_pairs(self) -> int:
        return len(self.lo)


@dataclass(frozen=True)
class PairTail:
    p: float
    mc_stderr: float | None = None


def _require_pairs(scores: ScoreMatrix) -> None:
    if not scores.is_pairs():
        raise NotPairStudyError("pair engine requires every set to have exactly two units")


def worst_case_pair_law(scores: ScoreMatrix, gamma) -> PairWorstCaseLaw:
    _require_pairs(scores)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (scores.n_sets,))
    for g in gamma:
        check_bias(g)
    with np.errstate(invalid="ignore"):
        p_hi = np.where(np.isinf(gamma), 1.0, gamma / (1.0 + gamma))
    return PairWorstCaseLaw(scores.set_min.copy(), scores.set_max.copy(), p_hi)


def select_pairs_quantile(scores: ScoreMatrix, k: int) -> np.ndarray:
    """Indices of the ``k`` pairs with the smallest score gaps (ties: lower index)."""
    _require_pairs(scores)
    check_k(k, scores.n_sets)
    gaps = scores.set_max - scores.set_min
    return np.sort(np.argsort(gaps, kind="stable")[:k])


def constraint_gamma(scores: ScoreMatrix, constraint) -> np.ndarray:
    """Per-pair bias vector implied by a vector or quantile constraint."""
    if isinstance(constraint, VectorBound):
        if constraint.gamma.size != scores.n_sets:
            raise ValueError("bias vector length must equal the number of pairs")
        return np.asarray(constraint.gamma, dtype=float)
    if isinstance(constraint, QuantileBound):
        sel = select_pairs_quantile(scores, constraint.k)
        gamma = np.full(scores.n_sets, math.inf)
        gamma[sel] = constraint.gamma0
        return gamma
    raise TypeError(f"unsupported constraint {constraint!r}")


def _lattice(law: PairWorstCaseLaw):
    scale = float(np.max(np.abs(np.concatenate([law.lo, law.hi])), initial=0.0))
    quantum = LATTICE_REL * scale if scale > 0 else 1.0
    keys = np.rint((law.hi - law.lo) / quantum).astype(np.int64)
    return quantum, keys


def pair_distribution(law: PairWorstCaseLaw, max_support: int = MAX_SUPPORT):
    """Exact law of the summed two-point variables as ``(values, probs)``.

    Score gaps are snapped to a lattice of ``1e-9`` times the largest absolute
    score so floating-point near-ties merge.
    """
    quantum, keys = _lattice(law)
    base = math.fsum(law.lo)
    shift = 0
    support = np.zeros(1, dtype=np.int64)
    probs = np.ones(1)
    for key, p in zip(keys, law.p_hi):
        if key == 0 or p == 0.0:
            continue
        if p == 1.0:
            shift += int(key)
            continue
        cand = np.concatenate([support, support + key])
        w = np.concatenate([probs * (1.0 - p), probs * p])
        support, inv = np.unique(cand, return_inverse=True)
        if support.size > max_support:
            raise SupportTooLargeError(
                f"convolution support exceeds {max_support} points; use Monte Carlo"
            )
        probs = np.bincount(inv, weights=w, minlength=support.size)
    return base + (support + shift) * quantum, probs


def exact_tail(law: PairWorstCaseLaw, c, max_support: int = MAX_SUPPORT):
    """``P(sum >= c)`` for a scalar or array of thresholds."""
    quantum, keys = _lattice(law)
    # snapping each gap moves the sum by at most half a step per pair
    slack = quantum * (0.5 * np.count_nonzero(keys) + 0.5)
    values, probs = pair_distribution(law, max_support)
    # survival function over the sorted support
    surv = np.cumsum(probs[::-1])[::-1]
    c_arr = np.atleast_1d(np.asarray(c, dtype=float))
    idx = np.searchsorted(values, c_arr - slack, side="left")
    out = np.where(idx < len(values), surv[np.minimum(idx, len(values) - 1)], 0.0)
    out = np.minimum(out, 1.0)
    return float(out[0]) if np.ndim(c) == 0 else out


def _mc_batch(law: PairWorstCaseLaw, seed: int, batch: int, n_cols: int, t_obs: float, eps: float) -> int:
    rng = np.random.default_rng([seed, batch])
    u = rng.random((law.n_pairs, n_cols))
    d = law.hi - law.lo
    draws = u < law.p_hi[:, None]
    sims = math.fsum(law.lo) + d @ draws
    return int(np.count_nonzero(sims >= t_obs - eps))


def mc_tail(
    law: PairWorstCaseLaw,
    t_obs: float,
    n_mc: int = DEFAULT_MC,
    seed: int = 0,
    add_one: bool = False,
    threads: int = 1,
) -> PairTail:
    """Monte-Carlo tail with uniforms keyed by ``(seed, batch)``.

    Repeated calls with the same seed reuse the same uniform table, so the
    estimate is monotone in every ``p_hi`` (common random numbers).
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    scale = float(np.sum(np.maximum(np.abs(law.lo), np.abs(law.hi))))
    eps = LATTICE_REL * scale
    batches = [(b, min(MC_BATCH, n_mc - b * MC_BATCH)) for b in range(-(-n_mc // MC_BATCH))]

    def run(item):
        b, cols = item
        return _mc_batch(law, seed, b, cols, t_obs, eps)

    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            count = sum(pool.map(run, batches))
    else:
        count = sum(map(run, batches))
    p = (count + 1) / (n_mc + 1) if add_one else count / n_mc
    return PairTail(p, math.sqrt(p * (1 - p) / n_mc))


def pair_tail_probability(
    scores: ScoreMatrix,
    constraint,
    method: str = "exact_dp",
    n_mc: int = DEFAULT_MC,
    seed: int = 0,
    add_one: bool = False,
    threads: int = 1,
    max_support: int = MAX_SUPPORT,
) -> PairTail:
    """Worst-case p-value for a pair study under ``constraint``.

    ``method`` is ``"exact_dp"`` or ``"monte_carlo"``.
    """
    _require_pairs(scores)
    law = worst_case_pair_law(scores, constraint_gamma(scores, constraint))
    t_obs = scores.t_obs
    if method == "exact_dp":
        return PairTail(exact_tail(law, t_obs, max_support))
    if method == "monte_carlo":
        return mc_tail(law, t_obs, n_mc, seed, add_one, threads)
    raise ValueError(f"unknown method {method!r}")
