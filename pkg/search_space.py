"""
Search Space Definitions for Mixed-Variable Optimization.

Declarative model of a bounded mixed domain: continuous, integer (binary is
the integer kind with levels [0, 1]), discrete and categorical dimensions.

Provides:
- validation of raw candidates against their parameter specs
- normalization between raw units and the model's [0, 1] coordinates
- enumeration of non-continuous supports
- the distance used by the exploration trigger
"""

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np


SNAP_TOLERANCE = 1e-9
DEFAULT_SUPPORT_CAP = 1_000_000


class SearchSpaceError(ValueError):
    """Invalid parameter spec or candidate value."""


class SnapError(SearchSpaceError):
    """Ordinal coordinate does not sit on a level anchor."""


class UnsupportedSpaceError(SearchSpaceError):
    """Operation requires a fully non-continuous space."""


class SupportSizeError(SearchSpaceError):
    """Cartesian product of levels exceeds the configured cap."""


class ParamKind(Enum):
    CONTINUOUS = "continuous"
    INTEGER = "integer"
    DISCRETE = "discrete"
    CATEGORICAL = "categorical"


# Candidate = tuple of raw values, one per dimension (category index for categorical)
Candidate = Tuple[float, ...]


# =============================================================================
# PARAMETER SPECS
# =============================================================================

@dataclass(frozen=True)
class ParameterSpec:
    """One dimension of the search space."""
    name: str
    kind: ParamKind
    bounds: Optional[Tuple[float, float]] = None
    levels: Optional[Tuple[float, ...]] = None
    categories: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if self.kind == ParamKind.CONTINUOUS:
            if self.bounds is None or not self.bounds[0] < self.bounds[1]:
                raise SearchSpaceError(f"{self.name}: continuous bounds need low < high, got {self.bounds}")
        elif self.kind in (ParamKind.INTEGER, ParamKind.DISCRETE):
            levels = self.levels
            if levels is None or len(levels) < 2:
                raise SearchSpaceError(f"{self.name}: ordinal dimension needs at least 2 levels")
            gaps = np.diff(np.asarray(levels, dtype=float))
            if np.any(gaps <= 0):
                raise SearchSpaceError(f"{self.name}: levels must be strictly increasing, got {levels}")
            if self.kind == ParamKind.INTEGER and not np.all(gaps == 1.0):
                raise SearchSpaceError(f"{self.name}: integer levels must be consecutive, got {levels}")
        elif self.kind == ParamKind.CATEGORICAL:
            if self.categories is None or len(self.categories) < 2:
                raise SearchSpaceError(f"{self.name}: categorical dimension needs at least 2 categories")

    # Constructors mirror the config vocabulary
    @classmethod
    def continuous(cls, name: str, low: float, high: float) -> "ParameterSpec":
        return cls(name, ParamKind.CONTINUOUS, bounds=(float(low), float(high)))

    @classmethod
    def integer(cls, name: str, low: int, high: int) -> "ParameterSpec":
        return cls(name, ParamKind.INTEGER, levels=tuple(float(v) for v in range(int(low), int(high) + 1)))

    @classmethod
    def binary(cls, name: str) -> "ParameterSpec":
        return cls.integer(name, 0, 1)

    @classmethod
    def discrete(cls, name: str, levels: Sequence[float]) -> "ParameterSpec":
        return cls(name, ParamKind.DISCRETE, levels=tuple(float(v) for v in levels))

    @classmethod
    def categorical(cls, name: str, categories: Sequence[str]) -> "ParameterSpec":
        return cls(name, ParamKind.CATEGORICAL, categories=tuple(str(c) for c in categories))

    @property
    def is_ordinal(self) -> bool:
        return self.kind in (ParamKind.INTEGER, ParamKind.DISCRETE)

    @property
    def low(self) -> float:
        if self.kind == ParamKind.CONTINUOUS:
            return self.bounds[0]
        if self.is_ordinal:
            return self.levels[0]
        return 0.0

    @property
    def high(self) -> float:
        if self.kind == ParamKind.CONTINUOUS:
            return self.bounds[1]
        if self.is_ordinal:
            return self.levels[-1]
        return float(len(self.categories) - 1)

    @property
    def n_levels(self) -> int:
        if self.is_ordinal:
            return len(self.levels)
        if self.kind == ParamKind.CATEGORICAL:
            return len(self.categories)
        raise UnsupportedSpaceError(f"{self.name}: continuous dimension has no level count")

    @property
    def anchors(self) -> np.ndarray:
        """Normalized positions of the ordinal levels."""
        levels = np.asarray(self.levels, dtype=float)
        return (levels - self.low) / (self.high - self.low)

    def is_valid(self, value: float) -> bool:
        if self.kind == ParamKind.CONTINUOUS:
            return bool(np.isfinite(value)) and self.low <= value <= self.high
        if self.is_ordinal:
            return float(value) in self.levels
        return float(value).is_integer() and 0 <= int(value) < len(self.categories)


@dataclass(frozen=True)
class SearchSpace:
    """Ordered list of parameter specs; the order defines coordinate indices."""
    params: Tuple[ParameterSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise SearchSpaceError(f"parameter names must be unique, got {names}")
        if not names:
            raise SearchSpaceError("search space needs at least one parameter")

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def names(self) -> List[str]:
        return [p.name for p in self.params]

    def _indices(self, predicate) -> List[int]:
        return [i for i, p in enumerate(self.params) if predicate(p)]

    @property
    def continuous_idx(self) -> List[int]:
        return self._indices(lambda p: p.kind == ParamKind.CONTINUOUS)

    @property
    def ordinal_idx(self) -> List[int]:
        return self._indices(lambda p: p.is_ordinal)

    @property
    def integer_idx(self) -> List[int]:
        return self._indices(lambda p: p.kind == ParamKind.INTEGER)

    @property
    def discrete_idx(self) -> List[int]:
        return self._indices(lambda p: p.kind == ParamKind.DISCRETE)

    @property
    def categorical_idx(self) -> List[int]:
        return self._indices(lambda p: p.kind == ParamKind.CATEGORICAL)

    @property
    def noncategorical_idx(self) -> List[int]:
        return self._indices(lambda p: p.kind != ParamKind.CATEGORICAL)

    @property
    def nominal_idx(self) -> List[int]:
        """Every non-continuous dimension (ordinal and categorical), in order."""
        return self._indices(lambda p: p.kind != ParamKind.CONTINUOUS)


# =============================================================================
# CANDIDATE HANDLING
# =============================================================================

def validate(space: SearchSpace, c: Sequence[float]) -> None:
    """Raise SearchSpaceError naming the first invalid dimension."""
    if len(c) != space.dim:
        raise SearchSpaceError(f"candidate has {len(c)} values, space has {space.dim} dimensions")
    for spec, value in zip(space.params, c):
        if not spec.is_valid(value):
            raise SearchSpaceError(f"{spec.name}: value {value!r} is not valid for {spec.kind.value} dimension")


def is_valid(space: SearchSpace, c: Sequence[float]) -> bool:
    try:
        validate(space, c)
    except SearchSpaceError:
        return False
    return True


def normalize(space: SearchSpace, c: Sequence[float]) -> np.ndarray:
    """
    Map a raw candidate to model coordinates.

    Args:
        space: Search space the candidate belongs to
        c: Raw values, one per dimension

    Returns:
        Array of length space.dim: (value - low) / (high - low) for continuous
        and ordinal dimensions, category index for categorical ones.
    """
    validate(space, c)
    point = np.empty(space.dim, dtype=float)
    for i, (spec, value) in enumerate(zip(space.params, c)):
        if spec.kind == ParamKind.CATEGORICAL:
            point[i] = float(value)
        else:
            point[i] = (float(value) - spec.low) / (spec.high - spec.low)
    return point


def denormalize(space: SearchSpace, p: Sequence[float]) -> Candidate:
    """
    Map model coordinates back to a raw candidate.

    Ordinal coordinates must sit on a level anchor within SNAP_TOLERANCE;
    anything else is a SnapError (callers go through the PR sampler, not rounding).
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (space.dim,):
        raise SearchSpaceError(f"point has shape {p.shape}, expected ({space.dim},)")
    values = []
    for spec, u in zip(space.params, p):
        if spec.kind == ParamKind.CONTINUOUS:
            if not -SNAP_TOLERANCE <= u <= 1.0 + SNAP_TOLERANCE:
                raise SearchSpaceError(f"{spec.name}: coordinate {u} outside [0, 1]")
            u = min(max(u, 0.0), 1.0)
            values.append(spec.low + u * (spec.high - spec.low))
        elif spec.is_ordinal:
            gaps = np.abs(spec.anchors - u)
            k = int(np.argmin(gaps))
            if gaps[k] > SNAP_TOLERANCE:
                raise SnapError(f"{spec.name}: coordinate {u} is not on a level anchor")
            values.append(spec.levels[k])
        else:
            k = int(round(u))
            if abs(u - k) > SNAP_TOLERANCE or not 0 <= k < spec.n_levels:
                raise SnapError(f"{spec.name}: coordinate {u} is not a category index")
            values.append(float(k))
    return tuple(values)


def snap(space: SearchSpace, p: Sequence[float]) -> np.ndarray:
    """Project an arbitrary point of [0, 1]^D onto the nearest valid model coordinates."""
    p = np.array(p, dtype=float)
    for i, spec in enumerate(space.params):
        if spec.kind == ParamKind.CONTINUOUS:
            p[i] = min(max(p[i], 0.0), 1.0)
        elif spec.is_ordinal:
            p[i] = spec.anchors[int(np.argmin(np.abs(spec.anchors - p[i])))]
        else:
            # unit interval split into equal category bins
            p[i] = float(min(int(p[i] * spec.n_levels), spec.n_levels - 1))
    return p


def enumerate_support(space: SearchSpace, cap: int = DEFAULT_SUPPORT_CAP) -> List[Candidate]:
    """
    Full Cartesian product of levels/categories in lexicographic order.

    Raises:
        UnsupportedSpaceError: a continuous dimension is present
        SupportSizeError: the product exceeds cap
    """
    if space.continuous_idx:
        names = [space.params[i].name for i in space.continuous_idx]
        raise UnsupportedSpaceError(f"cannot enumerate continuous dimensions {names}")
    size = int(np.prod([spec.n_levels for spec in space.params], dtype=np.int64))
    if size > cap:
        raise SupportSizeError(f"support size {size} exceeds cap {cap}")
    per_dim = []
    for spec in space.params:
        if spec.is_ordinal:
            per_dim.append(spec.levels)
        else:
            per_dim.append(tuple(float(k) for k in range(spec.n_levels)))
    return list(itertools.product(*per_dim))


def distance(space: SearchSpace, a: Sequence[float], b: Sequence[float], unit: str = "normalized") -> float:
    """
    Euclidean distance between two candidates.

    Non-categorical coordinates contribute their (normalized or raw) gap;
    each differing categorical dimension contributes 1.0.
    """
    if unit not in ("normalized", "raw"):
        raise SearchSpaceError(f"unknown distance unit {unit!r}")
    if unit == "normalized":
        pa, pb = normalize(space, a), normalize(space, b)
    else:
        validate(space, a)
        validate(space, b)
        pa, pb = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    total = 0.0
    for i, spec in enumerate(space.params):
        if spec.kind == ParamKind.CATEGORICAL:
            total += 0.0 if pa[i] == pb[i] else 1.0
        else:
            total += (pa[i] - pb[i]) ** 2
    return float(np.sqrt(total))


def min_distance(space: SearchSpace, c: Sequence[float], others: Sequence[Sequence[float]],
                 unit: str = "normalized") -> float:
    """Smallest distance from c to any of others (inf when others is empty)."""
    if not len(others):
        return float("inf")
    return min(distance(space, c, o, unit=unit) for o in others)
