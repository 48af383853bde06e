"""Per-unit scores of additive test statistics.

Every supported statistic has the form ``T = sum_i sum_j Z_ij q_ij`` where the
scores ``q_ij`` are fixed functions of the null-imputed outcomes.
:class:`ScoreMatrix` keeps the scores together with the sorted per-set values
and their cumulative sums, which is everything the worst-case engines need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import MatchedStudy


class DegenerateScaleError(ValueError):
    """All within-set pairwise differences are zero and no scale was supplied."""


@dataclass(frozen=True)
class MStatConfig:
    kappa: float = 3.0
    iota: float = 0.0
    scale_override: float | None = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive (use math.inf for no truncation)")
        if not 0 <= self.iota < self.kappa:
            raise ValueError("need 0 <= iota < kappa")
        if self.scale_override is not None and not self.scale_override > 0:
            raise ValueError("scale_override must be positive")


@dataclass(frozen=True)
class DiffMeans:
    """Difference in means with per-set weights (default 1 for every set)."""

    weights: tuple[float, ...] | None = None

    @classmethod
    def size_weighted(cls, sizes: Sequence[int]) -> DiffMeans:
        return cls(tuple((n - 1) / n for n in sizes))


def psi_eval(y, cfg: MStatConfig):
    """Odd psi function truncated at ``kappa`` with inner trimming at ``iota``."""
    y = np.asarray(y, dtype=float)
    a = np.abs(y)
    if math.isinf(cfg.kappa):
        mag = np.maximum(0.0, a - cfg.iota)
    else:
        mag = cfg.kappa * np.minimum(1.0, np.maximum(0.0, (a - cfg.iota) / (cfg.kappa - cfg.iota)))
    out = np.sign(y) * mag
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ScoreMatrix:
    """Scores for every unit plus per-set sorted values and cumulative sums.

    The padded arrays have shape ``(I, n_max)``; entries beyond ``n_i`` are zero
    and never read.
    """

    scores: np.ndarray          # flat, length N
    offsets: np.ndarray         # length I + 1
    treated: np.ndarray         # length I
    sorted_scores: np.ndarray   # (I, n_max), ascending within each set
    cum_q: np.ndarray           # (I, n_max), Q_j
    cum_q2: np.ndarray          # (I, n_max), S_j

    @classmethod
    def from_sets(cls, per_set: Sequence[Sequence[float]], treated: Sequence[int]) -> ScoreMatrix:
        sizes = np.array([len(q) for q in per_set], dtype=int)
        if np.any(sizes < 2):
            raise ValueError("every set needs at least two units")
        treated = np.asarray(treated, dtype=int)
        if treated.shape != sizes.shape or np.any(treated < 0) or np.any(treated >= sizes):
            raise IndexError("treated index out of range")
        flat = np.concatenate([np.asarray(q, dtype=float) for q in per_set])
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        n_max = int(sizes.max())
        srt = np.zeros((len(sizes), n_max))
        for i, q in enumerate(per_set):
            srt[i, : sizes[i]] = np.sort(np.asarray(q, dtype=float), kind="stable")
        for arr in (flat, offsets, treated, srt):
            arr.setflags(write=False)
        cq = np.cumsum(srt, axis=1)
        cq2 = np.cumsum(srt**2, axis=1)
        cq.setflags(write=False)
        cq2.setflags(write=False)
        return cls(flat, offsets, treated, srt, cq, cq2)

    @property
    def n_sets(self) -> int:
        return len(self.treated)

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def set_scores(self, i: int) -> np.ndarray:
        return self.scores[self.offsets[i]:self.offsets[i + 1]]

    def per_set(self) -> list[np.ndarray]:
        return [self.set_scores(i) for i in range(self.n_sets)]

    @property
    def t_obs(self) -> float:
        return float(np.sum(self.scores[self.offsets[:-1] + self.treated]))

    @property
    def set_max(self) -> np.ndarray:
        """``q_i(n_i)``, the largest score in each set."""
        return self.sorted_scores[np.arange(self.n_sets), self.sizes - 1]

    @property
    def set_min(self) -> np.ndarray:
        return self.sorted_scores[:, 0]

    @property
    def set_total(self) -> np.ndarray:
        return self.cum_q[np.arange(self.n_sets), self.sizes - 1]

    def is_pairs(self) -> bool:
        return bool(np.all(self.sizes == 2))


def diff_means_scores(study: MatchedStudy, weights: Sequence[float] | None = None) -> list[np.ndarray]:
    if weights is None:
        weights = np.ones(study.n_sets)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (study.n_sets,) or not np.all(np.isfinite(weights)):
        raise ValueError("need one finite weight per set")
    out = []
    for w, s in zip(weights, study.sets):
        n = s.size
        out.append(w * (n * s.outcomes - s.outcomes.sum()) / (n - 1))
    return out


def mstat_scale(study: MatchedStudy) -> float:
    """Lower median of all within-set absolute pairwise differences.

    Falls back to the nonzero differences when ties would make the median 0.
    """
    diffs = []
    for s in study.sets:
        y = s.outcomes
        j, l = np.triu_indices(len(y), k=1)
        diffs.append(np.abs(y[j] - y[l]))
    d = np.sort(np.concatenate(diffs))
    s = d[(d.size - 1) // 2]
    if s == 0:
        d = d[d > 0]
        if d.size == 0:
            raise DegenerateScaleError("all within-set differences are zero; pass scale_override")
        s = d[(d.size - 1) // 2]
    return float(s)


def mstat_scores(study: MatchedStudy, cfg: MStatConfig) -> list[np.ndarray]:
    s = cfg.scale_override if cfg.scale_override is not None else mstat_scale(study)
    out = []
    for ms in study.sets:
        y = ms.outcomes
        out.append(psi_eval((y[:, None] - y[None, :]) / s, cfg).mean(axis=1))
    return out


def compute_scores(study: MatchedStudy, stat: DiffMeans | MStatConfig | None = None) -> ScoreMatrix:
    """Scores of ``stat`` (difference in means by default) on ``study``'s outcomes."""
    if stat is None:
        stat = DiffMeans()
    if isinstance(stat, DiffMeans):
        per_set = diff_means_scores(study, stat.weights)
    elif isinstance(stat, MStatConfig):
        per_set = mstat_scores(study, stat)
    else:
        raise TypeError(f"unsupported statistic {stat!r}")
    return ScoreMatrix.from_sets(per_set, study.treated)


def statistic_value(scores: ScoreMatrix, assignment: Sequence[int]) -> float:
    a = np.asarray(assignment, dtype=int)
    if a.shape != (scores.n_sets,) or np.any(a < 0) or np.any(a >= scores.sizes):
        raise IndexError("assignment must hold one in-range unit index per set")
    return float(np.sum(scores.scores[scores.offsets[:-1] + a]))


# ---------------------------------------------------------------------------
# statistic properties for bounded nulls

def diff_in_means_statistic(z: np.ndarray, y: np.ndarray, sizes: Sequence[int], weights=None) -> float:
    """Weighted treated-minus-mean-control statistic evaluated directly."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    sizes = np.asarray(sizes, dtype=int)
    off = np.concatenate([[0], np.cumsum(sizes)])
    if weights is None:
        weights = np.ones(len(sizes))
    total = 0.0
    for i, n in enumerate(sizes):
        zi, yi = z[off[i]:off[i + 1]], y[off[i]:off[i + 1]]
        total += weights[i] * (np.sum(zi * yi) - np.sum((1 - zi) * yi) / (n - 1))
    return float(total)


@dataclass
class PropertyReport:
    prop: str
    trials: int
    violations: int
    witness: dict | None = None

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def __str__(self) -> str:
        if self.ok:
            return f"{self.prop}: no violation in {self.trials} trials"
        return f"{self.prop}: {self.violations} violation(s) in {self.trials} trials"


def _random_assignment(rng, sizes) -> np.ndarray:
    z = np.zeros(int(sizes.sum()))
    off = np.concatenate([[0], np.cumsum(sizes)])
    z[off[:-1] + rng.integers(0, sizes)] = 1.0
    return z


def check_statistic_property(
    stat: Callable[[np.ndarray, np.ndarray, np.ndarray], float],
    prop: str,
    trials: int = 1000,
    seed: int | None = 0,
    zero_perturbation: bool = False,
) -> PropertyReport:
    """Randomized search for violations of effect/differential increasingness.

    ``stat(z, y, sizes)`` evaluates the statistic for a 0/1 assignment vector.
    Studies have at most 5 sets of at most 4 units. With
    ``zero_perturbation`` the added effects are all zero, which can never
    produce a violation.
    """
    if prop not in ("effect_increasing", "differential_increasing"):
        raise ValueError(f"unknown property {prop!r}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    violations = 0
    witness = None
    for trial in range(trials):
        sizes = rng.integers(2, 5, size=rng.integers(1, 6))
        n = int(sizes.sum())
        y = rng.normal(size=n) * rng.choice([0.1, 1.0, 10.0])
        z = _random_assignment(rng, sizes)
        mask = rng.random(n) < 0.5
        eta = np.where(mask, rng.exponential(size=n), 0.0)
        if zero_perturbation:
            eta = np.zeros(n)
        if prop == "effect_increasing":
            xi = 0.0 if zero_perturbation else -np.where(rng.random(n) < 0.5, rng.exponential(size=n), 0.0)
            lhs = stat(z, y + z * eta + (1 - z) * xi, sizes)
            rhs = stat(z, y, sizes)
            bad = lhs < rhs - 1e-9 * (1 + abs(rhs))
            detail = {"xi": xi}
        else:
            a = _random_assignment(rng, sizes)
            shifted = y + a * eta
            lhs = stat(z, shifted, sizes) - stat(z, y, sizes)
            rhs = stat(a, shifted, sizes) - stat(a, y, sizes)
            bad = lhs > rhs + 1e-9 * (1 + abs(rhs))
            detail = {"a": a}
        if bad:
            violations += 1
            if witness is None:
                witness = {"trial": trial, "sizes": sizes, "z": z, "y": y, "eta": eta,
                           "lhs": lhs, "rhs": rhs, **detail}
    return PropertyReport(prop, trials, violations, witness)
