"""Matched-study data model, validation and null-hypothesis outcome transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

#: Distinguished bias value for sets whose hidden bias is left unconstrained.
UNBOUNDED = math.inf


class StudyError(ValueError):
    """Base class for malformed matched-study input."""

    def __init__(self, message: str, set_id: Any = None):
        super().__init__(message)
        self.set_id = set_id


class ZeroTreatedError(StudyError):
    pass


class MultiTreatedError(StudyError):
    pass


class SetTooSmallError(StudyError):
    pass


class NonFiniteOutcomeError(StudyError):
    def __init__(self, message: str, set_id: Any = None, unit: int | None = None):
        super().__init__(message, set_id)
        self.unit = unit


class DuplicateSetIdError(StudyError):
    pass


class LengthMismatchError(StudyError):
    pass


def check_bias(value: float) -> float:
    """Validate an extended bias value in ``[1, inf]`` and return it as float."""
    value = float(value)
    if math.isnan(value) or value < 1.0:
        raise ValueError(f"hidden-bias bound must lie in [1, inf], got {value!r}")
    return value


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MatchedSet:
    set_id: Any
    outcomes: np.ndarray
    treated_index: int
    covariates: Mapping[str, Any] | None = field(default=None, compare=False)

    @property
    def size(self) -> int:
        return len(self.outcomes)


@dataclass(frozen=True)
class MatchedStudy:
    """Validated matched sets, each with one treated unit.

    Build through :func:`validate_study` or :meth:`from_long`; the constructor
    does not re-check invariants.
    """

    sets: tuple[MatchedSet, ...]

    @property
    def n_sets(self) -> int:
        return len(self.sets)

    @property
    def n_units(self) -> int:
        return int(sum(s.size for s in self.sets))

    @property
    def sizes(self) -> np.ndarray:
        return np.array([s.size for s in self.sets], dtype=int)

    @property
    def set_ids(self) -> list:
        return [s.set_id for s in self.sets]

    @property
    def treated(self) -> np.ndarray:
        return np.array([s.treated_index for s in self.sets], dtype=int)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    def flat_outcomes(self) -> np.ndarray:
        return np.concatenate([s.outcomes for s in self.sets])

    def assignment_vector(self) -> np.ndarray:
        """0/1 treatment indicator over all N units, in set order."""
        z = np.zeros(self.n_units)
        z[self.offsets[:-1] + self.treated] = 1.0
        return z

    def is_pair_study(self) -> bool:
        return bool(np.all(self.sizes == 2))

    def with_outcomes(self, flat: np.ndarray) -> MatchedStudy:
        flat = np.asarray(flat, dtype=float)
        off = self.offsets
        return MatchedStudy(
            tuple(
                MatchedSet(s.set_id, _frozen(flat[off[i]:off[i + 1]]), s.treated_index, s.covariates)
                for i, s in enumerate(self.sets)
            )
        )

    def with_treated(self, treated: Sequence[int]) -> MatchedStudy:
        return MatchedStudy(
            tuple(
                MatchedSet(s.set_id, s.outcomes, int(t), s.covariates)
                for s, t in zip(self.sets, treated)
            )
        )

    @classmethod
    def from_long(cls, set_ids, treated, outcomes, covariates=None) -> MatchedStudy:
        """Group long-format rows by set id (first-appearance order) and validate."""
        groups: dict[Any, dict[str, list]] = {}
        for row, (sid, z, y) in enumerate(zip(set_ids, treated, outcomes)):
            g = groups.setdefault(sid, {"outcomes": [], "treated": [], "covariates": []})
            g["outcomes"].append(y)
            g["treated"].append(z)
            if covariates is not None:
                g["covariates"].append(covariates[row])
        return validate_study(
            {
                "set_id": sid,
                "outcomes": g["outcomes"],
                "treated": g["treated"],
                "covariates": {"rows": g["covariates"]} if covariates is not None else None,
            }
            for sid, g in groups.items()
        )

    @classmethod
    def from_arrays(cls, outcomes: Sequence[Sequence[float]], treated_index: Sequence[int]) -> MatchedStudy:
        """Convenience constructor: set ids are ``0..I-1``."""
        return validate_study(
            {"set_id": i, "outcomes": y, "treated_index": t}
            for i, (y, t) in enumerate(zip(outcomes, treated_index))
        )


def validate_study(candidates: Iterable[Mapping[str, Any]]) -> MatchedStudy:
    """Check raw matched sets and return an immutable :class:`MatchedStudy`.

    Each candidate is a mapping with ``set_id``, ``outcomes`` and either a 0/1
    ``treated`` vector or a ``treated_index``. Set order is preserved.
    """
    seen = set()
    out = []
    for cand in candidates:
        sid = cand["set_id"]
        if sid in seen:
            raise DuplicateSetIdError(f"duplicate set_id {sid!r}", sid)
        seen.add(sid)
        y = np.asarray(cand["outcomes"], dtype=float).ravel()
        if y.size < 2:
            raise SetTooSmallError(f"set {sid!r} has {y.size} unit(s); need at least 2", sid)
        bad = np.flatnonzero(~np.isfinite(y))
        if bad.size:
            raise NonFiniteOutcomeError(
                f"set {sid!r} has a non-finite outcome at unit {int(bad[0])}", sid, int(bad[0])
            )
        if cand.get("treated") is not None:
            z = np.asarray(cand["treated"], dtype=float).ravel()
            if z.size != y.size:
                raise LengthMismatchError(f"set {sid!r}: treated/outcome length mismatch", sid)
            n_treated = int(np.sum(z != 0))
            if n_treated == 0:
                raise ZeroTreatedError(f"set {sid!r} has no treated unit", sid)
            if n_treated > 1:
                raise MultiTreatedError(f"set {sid!r} has {n_treated} treated units", sid)
            t = int(np.flatnonzero(z)[0])
        else:
            t = int(cand["treated_index"])
            if not 0 <= t < y.size:
                raise ZeroTreatedError(f"set {sid!r}: treated index {t} out of range", sid)
        out.append(MatchedSet(sid, _frozen(y), t, cand.get("covariates")))
    return MatchedStudy(tuple(out))


@dataclass(frozen=True)
class EffectSpec:
    """Hypothesized per-unit effects (sharp) or effect bounds (bounded nulls).

    ``bounded-above`` means every effect is at most ``delta``; ``bounded-below``
    means every effect is at least ``delta``.
    """

    kind: str = "sharp"
    delta: np.ndarray | None = None

    KINDS = ("sharp", "bounded-above", "bounded-below")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown null kind {self.kind!r}; expected one of {self.KINDS}")
        if self.delta is not None:
            d = _frozen(self.delta)
            if not np.all(np.isfinite(d)):
                raise ValueError("effect vector must be finite")
            object.__setattr__(self, "delta", d)


def transform_for_null(study: MatchedStudy, spec: EffectSpec) -> MatchedStudy:
    """Return a study whose zero-effect analysis tests ``spec`` on the original.

    Sharp and bounded-above nulls subtract the hypothesized effect from treated
    outcomes; bounded-below nulls additionally flip the sign of every outcome.
    """
    z = study.assignment_vector()
    if spec.delta is None:
        delta = np.zeros(study.n_units)
    else:
        delta = spec.delta
        if delta.size != study.n_units:
            raise LengthMismatchError(
                f"effect vector has length {delta.size}; study has {study.n_units} units"
            )
    y = study.flat_outcomes()
    if spec.kind == "bounded-below":
        new = -y + z * delta
    else:
        new = y - z * delta
    return study.with_outcomes(new)
