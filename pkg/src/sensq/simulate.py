"""Simulation studies: type-I error at the true bias quantiles and power curves.

Random streams are keyed by ``(seed, rep)`` so any single replication can be
regenerated on its own. Type-I studies keep the population of replication 0
fixed and redraw only the treatment assignment; power studies draw a fresh
population (and a uniform assignment) in every replication.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import MatchedSet, MatchedStudy
from .inference import (
    EngineConfig,
    average_bias_limit,
    confidence_curve,
    quantile_grid,
    sensitivity_pvalue,
)
from .constraints import QuantileBound
from .oracle import SensitivityModelSpec, set_law
from .scores import DiffMeans, MStatConfig, compute_scores

OUTCOME_MODELS = ("normal", "binary")
BIAS_MODELS = ("none", "constant", "lognormal", "outlier")
G_TRANSFORMS = ("identity", "log", "odds")

# stream tags appended to (seed, rep)
_POPULATION = 0
_ASSIGNMENT = 1


@dataclass(frozen=True)
class SimDesign:
    """One simulation setting.

    ``outcome_sd`` scales the normal control outcomes. The lognormal bias model
    reads ``Lognormal(1.5, 0.2^2)`` as log-mean 1.5 and log-sd 0.2, floored at 1.
    Treatment effects are ``effect_c / beta`` on the first ``floor(beta * I)``
    sets and zero elsewhere.
    """

    I: int = 200
    n: int = 2
    outcome_model: str = "normal"
    outcome_sd: float = 1.0
    bias_model: str = "constant"
    effect_c: float = 0.0
    beta: float = 1.0
    stat: DiffMeans | MStatConfig = field(default_factory=DiffMeans)
    engine: str = "set_asymptotic"
    reps: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.I < 1 or self.n < 2 or self.reps < 1:
            raise ValueError("need I >= 1, n >= 2 and reps >= 1")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.outcome_model not in OUTCOME_MODELS:
            raise ValueError(f"unknown outcome model {self.outcome_model!r}")
        if self.bias_model not in BIAS_MODELS:
            raise ValueError(f"unknown bias model {self.bias_model!r}")
        if not self.outcome_sd > 0:
            raise ValueError("outcome_sd must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stat"] = {"kind": "mstat", **asdict(self.stat)} if isinstance(self.stat, MStatConfig) \
            else {"kind": "diff_means", "weights": self.stat.weights}
        return d


@dataclass(frozen=True)
class PotentialOutcomes:
    """Control and treated outcomes, both of shape ``(I, n)``."""

    y0: np.ndarray
    y1: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.y0.shape


def _rng(seed: int, rep: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(rep), tag])


def hidden_biases(design: SimDesign, rng: np.random.Generator) -> np.ndarray:
    I = design.I
    if design.bias_model == "none":
        return np.ones(I)
    if design.bias_model == "constant":
        return np.full(I, 5.0)
    if design.bias_model == "lognormal":
        return np.maximum(1.0, np.exp(rng.normal(1.5, 0.2, size=I)))
    gamma = np.full(I, 5.0)
    gamma[rng.choice(I, size=int(round(0.05 * I)), replace=False)] = 500.0
    return gamma


def rescaled_confounder(y0: np.ndarray) -> np.ndarray:
    """Min-max rescale each row to [0, 1]; constant rows map to 0."""
    lo = y0.min(axis=1, keepdims=True)
    span = y0.max(axis=1, keepdims=True) - lo
    return np.divide(y0 - lo, span, out=np.zeros_like(y0), where=span > 0)


def generate_study(design: SimDesign, rep: int) -> tuple[PotentialOutcomes, SensitivityModelSpec]:
    """Potential outcomes and true sensitivity model for replication ``rep``."""
    rng = _rng(design.seed, rep, _POPULATION)
    I, n = design.I, design.n
    if design.outcome_model == "normal":
        y0 = rng.normal(0.0, design.outcome_sd, size=(I, n))
    else:
        y0 = rng.integers(0, 2, size=(I, n)).astype(float)
        # force one 0 and one 1 per set so the rescaled confounder spans [0, 1]
        for i in range(I):
            j0, j1 = rng.choice(n, size=2, replace=False)
            y0[i, j0], y0[i, j1] = 0.0, 1.0
    gamma = hidden_biases(design, rng)
    n_affected = int(math.floor(design.beta * I + 1e-9))
    effect = np.zeros((I, n))
    if design.effect_c != 0:
        effect[:n_affected] = design.effect_c / design.beta
    spec = SensitivityModelSpec(gamma, rescaled_confounder(y0).ravel())
    return PotentialOutcomes(y0, y0 + effect), spec


def sample_assignment(po: PotentialOutcomes, spec: SensitivityModelSpec, seed) -> MatchedStudy:
    """Draw one treated unit per set from the model and reveal the observed outcomes."""
    rng = np.random.default_rng(seed)
    I, n = po.shape
    u = spec.u.reshape(I, n)
    probs = np.vstack([set_law(g, u[i]) for i, g in enumerate(spec.gamma)])
    cum = np.cumsum(probs, axis=1)
    draws = rng.random(I)
    treated = np.minimum((draws[:, None] >= cum).sum(axis=1), n - 1)
    y = po.y0.copy()
    rows = np.arange(I)
    y[rows, treated] = po.y1[rows, treated]
    return MatchedStudy(tuple(
        MatchedSet(i, _readonly(y[i]), int(treated[i])) for i in range(I)
    ))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass
class ExperimentResult:
    """A result table (column name -> values) plus mode-specific summaries."""

    mode: str
    table: dict[str, np.ndarray]
    summary: dict = field(default_factory=dict)

    @property
    def columns(self) -> list[str]:
        return list(self.table)

    def rows(self):
        cols = list(self.table.values())
        return zip(*cols)


def _map(fn: Callable, items: Sequence, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def run_type1(design: SimDesign, alpha: float = 0.05,
              fractions: Sequence[float] = (1.0, 0.95, 0.9), workers: int = 1) -> ExperimentResult:
    """P-values at the true bias quantiles over repeated assignments.

    The table holds the sorted p-values of each quantile (one row per
    replication), which is the empirical CDF against the ``uniform`` column.
    """
    po, spec = generate_study(design, 0)
    ks = [quantile_grid(design.I, [f])[0] for f in fractions]
    sorted_gamma = np.sort(spec.gamma)
    bounds = [float(sorted_gamma[k - 1]) for k in ks]
    config = EngineConfig(engine=design.engine, seed=design.seed)

    def one(rep):
        study = sample_assignment(po, spec, [design.seed, rep, _ASSIGNMENT])
        scores = compute_scores(study, design.stat)
        return [sensitivity_pvalue(scores, QuantileBound(k, g0), config) for k, g0 in zip(ks, bounds)]

    pvals = np.array(_map(one, range(design.reps), workers))
    reps = design.reps
    table = {"rank": np.arange(1, reps + 1), "uniform": np.arange(1, reps + 1) / reps}
    summary = {"alpha": alpha, "ks": ks, "true_bounds": bounds, "rejection_rate": {}}
    for j, (f, k) in enumerate(zip(fractions, ks)):
        col = f"p_q{f:g}"
        table[col] = np.sort(pvals[:, j])
        summary["rejection_rate"][col] = float(np.mean(pvals[:, j] <= alpha))
    return ExperimentResult("type1", table, summary)


def run_curves(designs: dict[str, SimDesign], alpha: float = 0.05,
               ks: Sequence[int] | None = None, workers: int = 1) -> ExperimentResult:
    """Mean lower-confidence-limit curves for each labelled design.

    All designs should share ``I`` and ``seed`` so that they see the same
    control outcomes and assignments. With a full ``k`` grid the summary also
    holds the mean average-bias limit for each transform.
    """
    labels = list(designs)
    I = designs[labels[0]].I
    if any(d.I != I for d in designs.values()):
        raise ValueError("all designs must share the number of sets")
    grid = list(range(1, I + 1)) if ks is None else sorted(set(ks))
    full = len(grid) == I

    def one(args):
        label, rep = args
        d = designs[label]
        po, spec = generate_study(d, rep)
        study = sample_assignment(po, spec, [d.seed, rep, _ASSIGNMENT])
        scores = compute_scores(study, d.stat)
        curve = confidence_curve(scores, alpha, EngineConfig(engine=d.engine, seed=d.seed), ks=grid)
        avg = {g: average_bias_limit(curve, g) for g in G_TRANSFORMS} if full else {}
        return curve.limits, avg

    table = {"k": np.array(grid), "quantile_fraction": np.array(grid) / I}
    summary = {"alpha": alpha, "average_bias": {}}
    for label in labels:
        reps = designs[label].reps
        out = _map(one, [(label, r) for r in range(reps)], workers)
        table[label] = np.mean([o[0] for o in out], axis=0)
        if full:
            summary["average_bias"][label] = {
                g: float(np.mean([o[1][g] for o in out])) for g in G_TRANSFORMS
            }
    return ExperimentResult("curves", table, summary)


def run_experiment(design: SimDesign, mode: str, *, alpha: float = 0.05,
                   fractions: Sequence[float] = (1.0, 0.95, 0.9),
                   iotas: Sequence[float] = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5),
                   betas: Sequence[float] | None = None,
                   ks: Sequence[int] | None = None, workers: int = 1) -> ExperimentResult:
    """Run a ``type1``, ``power`` (over ``betas``) or ``trimming`` (over ``iotas``) study."""
    if mode == "type1":
        return run_type1(design, alpha, fractions, workers)
    if mode == "power":
        betas = [design.beta] if betas is None else list(betas)
        designs = {f"beta_{b:g}": replace(design, beta=b) for b in betas}
    elif mode == "trimming":
        kappa = design.stat.kappa if isinstance(design.stat, MStatConfig) else 3.0
        designs = {f"iota_{i:g}": replace(design, stat=MStatConfig(kappa=kappa, iota=i)) for i in iotas}
    else:
        raise ValueError(f"unknown mode {mode!r}")
    res = run_curves(designs, alpha, ks, workers)
    res.mode = mode
    return res


def _type1_presets() -> dict:
    out = {}
    combos = [("normal", "constant"), ("normal", "lognormal"), ("normal", "outlier"),
              ("binary", "constant"), ("binary", "lognormal"), ("binary", "outlier")]
    for fig, n in (("figA1", 2), ("figA2", 3)):
        for letter, (om, bm) in zip("abcdef", combos):
            out[fig + letter] = ("type1", SimDesign(I=200, n=n, outcome_model=om, bias_model=bm, reps=500), {})
    for letter, (n, bm) in zip("abc", ((2, "constant"), (2, "outlier"), (3, "constant"))):
        out["figA3" + letter] = ("type1", SimDesign(I=2000, n=n, outcome_model="binary", bias_model=bm, reps=500), {})
    return out


#: name -> (mode, design, extra run_experiment keywords)
PRESETS: dict[str, tuple[str, SimDesign, dict]] = {
    **_type1_presets(),
    "tabA2": ("trimming", SimDesign(I=500, n=2, outcome_sd=math.sqrt(0.5), bias_model="none",
                                    effect_c=0.5, stat=MStatConfig(kappa=3.0), reps=100), {}),
    "figA6": ("power", SimDesign(I=1000, n=2, outcome_sd=math.sqrt(0.5), bias_model="none",
                                 effect_c=0.5, reps=100),
              {"betas": (0.03, 0.2, 0.4, 0.6, 0.8, 1.0)}),
}
PRESETS["figA4"] = PRESETS["tabA2"]


__all__ = [
    "ExperimentResult", "PRESETS", "PotentialOutcomes", "SimDesign", "generate_study",
    "hidden_biases", "rescaled_confounder", "run_curves", "run_experiment", "run_type1",
    "sample_assignment",
]
