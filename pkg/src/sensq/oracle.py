"""Brute-force reference computations used to check the fast engines.

Nothing here is called by the analysis path. Every function enumerates
directly (assignments, confounder vectors or subsets) and refuses inputs that
would make that enumeration unreasonably large.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import MatchedStudy, check_bias
from .scores import ScoreMatrix

MAX_ENUMERATION = 1_000_000
MAX_ORACLE_SET = 5
MAX_SUBSET_SETS = 12


class EnumerationTooLarge(ValueError):
    pass


class SetTooLarge(ValueError):
    pass


class TooManySubsets(ValueError):
    pass


@dataclass(frozen=True)
class SensitivityModelSpec:
    """Per-set biases ``gamma`` (length I) and per-unit confounders ``u`` (length N)."""

    gamma: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        g = np.array([check_bias(v) for v in np.ravel(self.gamma)], dtype=float)
        u = np.array(self.u, dtype=float).ravel()
        if np.any(~np.isfinite(u)) or np.any(u < 0) or np.any(u > 1):
            raise ValueError("confounder values must lie in [0, 1]")
        g.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "u", u)


def _sizes_of(obj) -> np.ndarray:
    if isinstance(obj, (MatchedStudy, ScoreMatrix)):
        return np.asarray(obj.sizes, dtype=int)
    return np.asarray(obj, dtype=int)


def set_law(gamma: float, u: np.ndarray) -> np.ndarray:
    """Treatment probabilities within one set; infinite bias splits evenly over the max-u units."""
    u = np.asarray(u, dtype=float)
    if math.isinf(gamma):
        top = u == u.max()
        return top / top.sum()
    w = np.exp(math.log(gamma) * (u - u.max()))
    return w / w.sum()


def assignment_law(study, spec: SensitivityModelSpec) -> list[np.ndarray]:
    """Per-set treatment probabilities under the sensitivity model."""
    sizes = _sizes_of(study)
    if spec.gamma.size != sizes.size or spec.u.size != sizes.sum():
        raise ValueError("model dimensions do not match the study")
    off = np.concatenate([[0], np.cumsum(sizes)])
    return [set_law(g, spec.u[off[i]:off[i + 1]]) for i, g in enumerate(spec.gamma)]


def enumerate_statistic_law(scores: ScoreMatrix, spec: SensitivityModelSpec):
    """Every assignment's statistic value and probability, as two flat arrays."""
    sizes = scores.sizes
    total = math.prod(int(n) for n in sizes)
    if total > MAX_ENUMERATION:
        raise EnumerationTooLarge(f"{total} assignments exceed the limit of {MAX_ENUMERATION}")
    laws = assignment_law(scores, spec)
    values = np.zeros(1)
    probs = np.ones(1)
    for i, p in enumerate(laws):
        q = scores.set_scores(i)
        values = (values[:, None] + q[None, :]).ravel()
        probs = (probs[:, None] * p[None, :]).ravel()
    return values, probs


def exact_tail_under_model(scores: ScoreMatrix, spec: SensitivityModelSpec, c: float) -> float:
    """``P(T >= c)`` by summing over every assignment."""
    values, probs = enumerate_statistic_law(scores, spec)
    return float(math.fsum(probs[values >= c]))


def _moments(q: np.ndarray, p: np.ndarray):
    """Means and variances for each row of probabilities ``p``."""
    mu = p @ q
    return mu, p @ q**2 - mu**2


@lru_cache(maxsize=64)
def _confounder_laws(n: int, gamma: float, grid_points: int) -> np.ndarray:
    """Assignment probabilities for every searched ``u`` (one row each)."""
    binary = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    if math.isinf(gamma):
        u_all = binary[binary.max(axis=1) > 0]
        p = u_all / u_all.sum(axis=1, keepdims=True)
    else:
        grid = np.linspace(0.0, 1.0, grid_points)
        rest = np.array(list(itertools.product(grid, repeat=n - 1)))
        blocks = [np.insert(rest, j, 0.0, axis=1) for j in range(n)]
        u_all = np.vstack([binary] + blocks)
        w = np.exp(math.log(gamma) * u_all)
        p = w / w.sum(axis=1, keepdims=True)
    p.setflags(write=False)
    return p


def bruteforce_worst_moments(q: Sequence[float], gamma: float, grid_points: int = 21):
    """Largest mean, then largest variance among mean-maximizers, over confounder vectors.

    Searches every binary ``u`` and a uniform grid with ``grid_points`` values
    per coordinate. The law only depends on ``u`` up to a common shift, so grid
    vectors whose smallest coordinate is not 0 are skipped.
    """
    q = np.asarray(q, dtype=float)
    n = q.size
    if n > MAX_ORACLE_SET:
        raise SetTooLarge(f"set of size {n} exceeds oracle limit {MAX_ORACLE_SET}")
    gamma = check_bias(gamma)
    mu, var = _moments(q, _confounder_laws(n, gamma, grid_points))
    best = mu.max()
    window = 1e-12 * max(1.0, float(np.max(np.abs(q))))
    tied = mu >= best - window
    return float(best), float(max(var[tied].max(), 0.0))


def bruteforce_best_subset(mu0, var0, mu_inf, k: int, tol: float = 1e-9):
    """Lexicographically best ``(mu, sigma2)`` over all size-``k`` subsets.

    Sets in the subset contribute their moments at the bound (``mu0``, ``var0``);
    the others contribute the unbounded mean ``mu_inf`` and no variance. Values
    within ``tol`` count as equal, and the first subset in combination order
    wins such ties.
    """
    mu0, var0, mu_inf = (np.asarray(a, dtype=float) for a in (mu0, var0, mu_inf))
    n = mu0.size
    if n > MAX_SUBSET_SETS:
        raise TooManySubsets(f"{n} sets exceed the subset oracle limit {MAX_SUBSET_SETS}")
    if not 1 <= k <= n:
        raise ValueError("k out of range")
    base = math.fsum(mu_inf)
    best = None
    for sub in itertools.combinations(range(n), k):
        idx = list(sub)
        mu = base + math.fsum(mu0[idx] - mu_inf[idx])
        s2 = math.fsum(var0[idx])
        if best is None or mu > best[1] + tol or (abs(mu - best[1]) <= tol and s2 > best[2] + tol):
            best = (sub, mu, s2)
    return best


__all__ = [
    "EnumerationTooLarge", "SensitivityModelSpec", "SetTooLarge", "TooManySubsets",
    "assignment_law", "bruteforce_best_subset", "bruteforce_worst_moments",
    "enumerate_statistic_law", "exact_tail_under_model", "set_law",
]
