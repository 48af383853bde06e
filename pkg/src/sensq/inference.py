"""Test inversion into lower confidence limits for every bias quantile.

For each ``k`` the limit is the largest probed bound ``Gamma0`` whose worst-case
p-value is still at most ``alpha``; all ``k`` are simultaneously valid, so the
limits can be combined into counts of sets exceeding a threshold and into
average-bias limits without any multiplicity adjustment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import pair_exact, set_asymptotic
from .constraints import KOutOfRangeError, QuantileBound, VectorBound, check_k
from .scores import ScoreMatrix

DEFAULT_TOL = 1e-4
BRACKET_CAP = 1e6

CONVERGED = "converged"
BRACKET_CAPPED = "bracket_capped"
NONINFORMATIVE = "noninformative"


class EngineMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    """Which worst-case bound to use and how to evaluate it.

    ``engine`` is ``"set_asymptotic"`` (Gaussian bound, any set sizes) or
    ``"pair_exact"`` (pairs only), where ``method`` selects ``"exact_dp"`` or
    ``"monte_carlo"``. ``gamma_max``/``k_min`` switch on the conservative
    p-value of 1 outside the trusted range; the defaults leave it inert.
    """

    engine: str = "set_asymptotic"
    method: str = "exact_dp"
    n_mc: int = pair_exact.DEFAULT_MC
    seed: int = 0
    add_one: bool = False
    threads: int = 1
    gamma_max: float = math.inf
    k_min: int = 1

    def __post_init__(self):
        if self.engine not in ("set_asymptotic", "pair_exact"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.method not in ("exact_dp", "monte_carlo"):
            raise ValueError(f"unknown pair method {self.method!r}")
        if self.n_mc < 1 or self.threads < 1 or self.k_min < 1:
            raise ValueError("n_mc, threads and k_min must be positive")


class PValueFunction:
    """Worst-case p-value of one study, with per-study work done once."""

    def __init__(self, scores: ScoreMatrix, config: EngineConfig | None = None):
        self.scores = scores
        self.config = config or EngineConfig()
        if self.config.engine == "pair_exact":
            if not scores.is_pairs():
                raise EngineMismatchError("pair_exact engine needs a study of matched pairs")
        elif scores.n_sets < 2:
            raise EngineMismatchError("set_asymptotic engine needs at least two matched sets")
        self._unbounded = None
        self.calls = 0

    def __call__(self, constraint) -> float:
        self.calls += 1
        cfg = self.config
        if isinstance(constraint, QuantileBound):
            check_k(constraint.k, self.scores.n_sets)
            if constraint.vacuous:
                return 1.0
            if constraint.gamma0 > cfg.gamma_max or constraint.k < cfg.k_min:
                return 1.0
        if cfg.engine == "pair_exact":
            return pair_exact.pair_tail_probability(
                self.scores, constraint, cfg.method, cfg.n_mc, cfg.seed, cfg.add_one, cfg.threads
            ).p
        if self._unbounded is None:
            self._unbounded = set_asymptotic.set_moments(self.scores, math.inf)
        return set_asymptotic.set_pvalue(self.scores, constraint, self._unbounded)

    def at(self, gamma0: float, k: int) -> float:
        return self(QuantileBound(k, gamma0))


def sensitivity_pvalue(scores: ScoreMatrix, constraint, config: EngineConfig | None = None) -> float:
    return PValueFunction(scores, config)(constraint)


@dataclass(frozen=True)
class CurveEntry:
    k: int
    lower_limit: float
    achieved_p: float
    status: str
    # smallest probed bound with p > alpha; seeds the bracket of the next k
    bracket_upper: float = field(default=math.inf, compare=False)


def lower_confidence_limit(
    scores: ScoreMatrix | PValueFunction,
    k: int,
    alpha: float = 0.05,
    config: EngineConfig | None = None,
    tol: float = DEFAULT_TOL,
    bracket_hi: float | None = None,
    cap: float = BRACKET_CAP,
) -> CurveEntry:
    """Binary-search the lower confidence limit for the ``k``-th smallest bias.

    The returned limit always has p-value <= ``alpha`` (the lower end of the
    final bracket), so it stays valid even where the p-value is not monotone.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    pv = scores if isinstance(scores, PValueFunction) else PValueFunction(scores, config)
    check_k(k, pv.scores.n_sets)

    p_lo = pv.at(1.0, k)
    if p_lo > alpha:
        return CurveEntry(k, 1.0, p_lo, NONINFORMATIVE, 1.0)
    lo = 1.0

    hi = None
    if bracket_hi is not None and bracket_hi > lo:
        p = pv.at(bracket_hi, k)
        if p > alpha:
            hi = bracket_hi
        else:
            lo, p_lo = bracket_hi, p
    if hi is None:
        hi = max(2.0, 2.0 * lo)
        while True:
            hi = min(hi, cap)
            p = pv.at(hi, k)
            if p > alpha:
                break
            lo, p_lo = hi, p
            if hi >= cap:
                return CurveEntry(k, lo, p_lo, BRACKET_CAPPED, math.inf)
            hi *= 2.0

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        p = pv.at(mid, k)
        if p <= alpha:
            lo, p_lo = mid, p
        else:
            hi = mid
    return CurveEntry(k, lo, p_lo, CONVERGED, hi)


@dataclass
class ConfidenceCurve:
    alpha: float
    n_sets: int
    entries: list[CurveEntry]
    engine: str = "set_asymptotic"
    method: str | None = None
    seed: int | None = None
    tol: float = DEFAULT_TOL

    @property
    def ks(self) -> np.ndarray:
        return np.array([e.k for e in self.entries], dtype=int)

    @property
    def limits(self) -> np.ndarray:
        return np.array([e.lower_limit for e in self.entries], dtype=float)

    def entry(self, k: int) -> CurveEntry:
        for e in self.entries:
            if e.k == k:
                return e
        raise KeyError(k)

    def is_full(self) -> bool:
        return sorted(self.ks.tolist()) == list(range(1, self.n_sets + 1))

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "n_sets": self.n_sets,
            "engine": self.engine,
            "method": self.method,
            "seed": self.seed,
            "tol": self.tol,
            "entries": [
                {
                    "k": e.k,
                    "quantile_fraction": e.k / self.n_sets,
                    "lower_limit": e.lower_limit,
                    "achieved_p": e.achieved_p,
                    "status": e.status,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ConfidenceCurve:
        entries = [
            CurveEntry(int(e["k"]), float(e["lower_limit"]), float(e["achieved_p"]), e["status"])
            for e in d["entries"]
        ]
        return cls(d["alpha"], int(d["n_sets"]), entries, d.get("engine", "set_asymptotic"),
                   d.get("method"), d.get("seed"), d.get("tol", DEFAULT_TOL))


def quantile_grid(n_sets: int, fractions: Iterable[float]) -> list[int]:
    """``k = ceil(f * I)`` for each fraction, deduplicated, clipped to ``[1, I]``."""
    ks = {min(n_sets, max(1, math.ceil(f * n_sets - 1e-9))) for f in fractions}
    return sorted(ks)


def confidence_curve(
    scores: ScoreMatrix,
    alpha: float = 0.05,
    config: EngineConfig | None = None,
    ks: Sequence[int] | None = None,
    tol: float = DEFAULT_TOL,
    cap: float = BRACKET_CAP,
) -> ConfidenceCurve:
    """Lower limits for every ``k`` (or the given grid), from ``k = I`` downward.

    Each search is bracketed by the previous ``k``'s upper end, and limits are
    kept nonincreasing as ``k`` decreases.
    """
    config = config or EngineConfig()
    pv = PValueFunction(scores, config)
    n = scores.n_sets
    if ks is None:
        ks = range(1, n + 1)
    ks = sorted({check_k(int(k), n) for k in ks}, reverse=True)
    entries = []
    bracket = None
    prev_limit = math.inf
    for k in ks:
        e = lower_confidence_limit(pv, k, alpha, tol=tol, bracket_hi=bracket, cap=cap)
        if e.lower_limit > prev_limit:
            p = pv.at(prev_limit, k)
            if p <= alpha:
                e = replace(e, lower_limit=prev_limit, achieved_p=p)
            else:
                e = lower_confidence_limit(pv, k, alpha, tol=tol, bracket_hi=prev_limit, cap=cap)
        entries.append(e)
        prev_limit = e.lower_limit
        bracket = e.bracket_upper if math.isfinite(e.bracket_upper) else None
    entries.reverse()
    return ConfidenceCurve(alpha, n, entries, config.engine,
                           config.method if config.engine == "pair_exact" else None,
                           config.seed, tol)


def count_exceeding_limit(curve: ConfidenceCurve, gamma0: float) -> int:
    """Lower confidence limit for the number of sets with bias above ``gamma0``."""
    if gamma0 < 1:
        raise ValueError("gamma0 must be >= 1")
    return int(np.count_nonzero(curve.limits > gamma0))


_TRANSFORMS = {
    "identity": (lambda x: x, lambda m: m),
    "log": (np.log, np.exp),
    "odds": (lambda x: x / (1.0 + x), lambda m: m / (1.0 - m)),
}


def average_bias_limit(curve: ConfidenceCurve, g: str = "identity") -> float:
    """Lower limit for ``g^{-1}(mean g(Gamma_i))`` from a full curve."""
    if g not in _TRANSFORMS:
        raise ValueError(f"unknown transform {g!r}; expected one of {sorted(_TRANSFORMS)}")
    if not curve.is_full():
        raise ValueError("average-bias limits need a limit for every k")
    fwd, inv = _TRANSFORMS[g]
    return float(inv(np.mean(fwd(curve.limits))))


__all__ = [
    "BRACKET_CAPPED", "CONVERGED", "NONINFORMATIVE", "ConfidenceCurve", "CurveEntry",
    "EngineConfig", "EngineMismatchError", "KOutOfRangeError", "PValueFunction",
    "QuantileBound", "VectorBound", "average_bias_limit", "confidence_curve",
    "count_exceeding_limit", "lower_confidence_limit", "quantile_grid", "sensitivity_pvalue",
]
