"""
Benchmark Objectives and Ground-Truth Oracles.

Closed-form test problems used by the harness:
- Butternut Squash (BS): an asymmetric, range-normalized Styblinski-Tang
  variant instantiated over continuous, integer and discrete dimensions
- DUST1 / DUST2: table-driven step landscapes with one global plateau at -30

Also provides the Sobol initial design (bundled direction numbers) and a
brute-force optimum oracle used to freeze the truth each run is scored
against.
"""

import itertools
import json
import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from search_space import (
    Candidate,
    ParameterSpec,
    SearchSpace,
    denormalize,
    snap,
    validate,
)
from tolerances import get_budget


logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
SOBOL_FILE = DATA_DIR / "sobol_direction_numbers.txt"
DUST_FILE = DATA_DIR / "dust_landscapes.json"

MAX_SOBOL_DIM = 16
SOBOL_BITS = 32
DEFAULT_BRUTE_FORCE_CAP = 5_000_000


class BudgetExceededError(ValueError):
    """Brute-force grid larger than the configured cap."""


class DimensionUnsupportedError(ValueError):
    """Sobol dimension beyond the bundled direction numbers."""


class LandscapeTableError(ValueError):
    """Malformed step-landscape table."""


# =============================================================================
# SOBOL SEQUENCE
# =============================================================================

@lru_cache(maxsize=1)
def _direction_table() -> Tuple[Tuple[int, int, Tuple[int, ...]], ...]:
    """(s, a, m_1..m_s) rows for dimensions 2..MAX_SOBOL_DIM."""
    rows = []
    for line in SOBOL_FILE.read_text().splitlines():
        parts = line.split()
        if not parts or not parts[0].isdigit():
            continue
        s, a = int(parts[1]), int(parts[2])
        m = tuple(int(v) for v in parts[3:3 + s])
        if len(m) != s:
            raise ValueError(f"direction numbers for dimension {parts[0]}: expected {s} values, got {len(m)}")
        rows.append((s, a, m))
    return tuple(rows)


@lru_cache(maxsize=MAX_SOBOL_DIM)
def _direction_matrix(dim: int) -> np.ndarray:
    """(dim, SOBOL_BITS) direction integers V_j scaled by 2^SOBOL_BITS."""
    table = _direction_table()
    V = np.zeros((dim, SOBOL_BITS), dtype=np.uint64)
    V[0] = [1 << (SOBOL_BITS - j) for j in range(1, SOBOL_BITS + 1)]
    for d in range(1, dim):
        s, a, m = table[d - 1]
        v = [0] * (SOBOL_BITS + 1)
        for j in range(1, min(s, SOBOL_BITS) + 1):
            v[j] = m[j - 1] << (SOBOL_BITS - j)
        for j in range(s + 1, SOBOL_BITS + 1):
            v[j] = v[j - s] ^ (v[j - s] >> s)
            for k in range(1, s):
                if (a >> (s - 1 - k)) & 1:
                    v[j] ^= v[j - k]
        V[d] = v[1:]
    return V


def sobol_points(
    dim: int,
    n: int,
    seed: int = 0,
    skip: Optional[int] = None,
    space: Optional[SearchSpace] = None,
) -> np.ndarray:
    """
    Unscrambled Sobol points in Gray-code order, zero point dropped.

    Args:
        dim: Number of coordinates (1..MAX_SOBOL_DIM)
        n: Number of points
        seed: Offsets the sequence by seed * n points when skip is not given
        skip: Explicit number of points to skip after the zero point
        space: When given, points are snapped onto the space's valid coordinates

    Returns:
        (n, dim) array of model coordinates in [0, 1)
    """
    if not 1 <= dim <= MAX_SOBOL_DIM:
        raise DimensionUnsupportedError(f"Sobol dimension {dim} not in [1, {MAX_SOBOL_DIM}]")
    if n < 0:
        raise ValueError(f"number of points must be non-negative, got {n}")
    skip = seed * n if skip is None else skip
    idx = np.arange(skip + 1, skip + n + 1, dtype=np.uint64)
    gray = idx ^ (idx >> np.uint64(1))
    V = _direction_matrix(dim)
    X = np.zeros((n, dim), dtype=np.uint64)
    for bit in range(SOBOL_BITS):
        mask = ((gray >> np.uint64(bit)) & np.uint64(1)).astype(bool)
        if not mask.any():
            continue
        X[mask] ^= V[:, bit]
    points = X.astype(float) / float(1 << SOBOL_BITS)
    if space is not None:
        if space.dim != dim:
            raise ValueError(f"space has {space.dim} dimensions, Sobol dimension is {dim}")
        points = np.array([snap(space, p) for p in points]).reshape(n, dim)
    return points


def initial_design(space: SearchSpace, n: int, seed: int = 0) -> List[Candidate]:
    """
    Seeded Sobol initial design as raw candidates.

    In spaces without continuous dimensions, snapped duplicates are skipped
    while unused configurations remain.
    """
    points = sobol_points(space.dim, n, seed=seed, space=space)
    candidates = [denormalize(space, p) for p in points]
    if space.continuous_idx:
        return candidates

    support = int(np.prod([space.params[i].n_levels for i in range(space.dim)], dtype=np.int64))
    unique: List[Candidate] = []
    seen = set()
    offset = seed * n
    stream = iter(candidates)
    block = max(n, 16)
    drawn = n
    while len(unique) < min(n, support):
        c = next(stream, None)
        if c is None:
            if drawn > 64 * max(n, support):
                break
            extra = sobol_points(space.dim, block, skip=offset + drawn, space=space)
            drawn += block
            stream = iter(denormalize(space, p) for p in extra)
            continue
        if c not in seen:
            seen.add(c)
            unique.append(c)
    # more points requested than configurations exist: keep Sobol order for the rest
    for c in candidates:
        if len(unique) >= n:
            break
        unique.append(c)
    return unique


# =============================================================================
# BUTTERNUT SQUASH
# =============================================================================

BS_OFFSET = 3.38763191
BS_CONSTANT = 12.4180436
BS_CONTINUOUS_BOUNDS = (-5.0, 5.0)
BS_INTEGER_LEVELS = (0, 10)
BS_DISCRETE_LEVELS = (0, 1, 3, 4, 7, 9)
BS_ENCODING_SHIFT = 5.0
BS_DIMS = (2, 3, 4, 5, 6)
BS_FAMILIES = ("ci", "id", "ii", "dd")

_PATTERN_LETTERS = {"ci": ("c", "i"), "id": ("i", "d"), "ii": ("i", "i"), "dd": ("d", "d")}


def bs_pattern(dims: int, family: str) -> str:
    """
    Per-dimension kind string for a BS variant.

    Mixed families put floor(dims / 2) dimensions of the first kind ahead of
    the rest (5D: 2 continuous + 3 integer, 2 integer + 3 discrete).
    """
    if family not in _PATTERN_LETTERS:
        raise ValueError(f"Unknown BS family '{family}', expected one of {BS_FAMILIES}")
    first, second = _PATTERN_LETTERS[family]
    n_first = dims // 2
    return first * n_first + second * (dims - n_first)


@dataclass(frozen=True)
class BsVariant:
    """One of the twenty BS variants (dims 2..6 x four kind mixes)."""
    dims: int
    family: str

    def __post_init__(self):
        if self.dims not in BS_DIMS:
            raise ValueError(f"BS variants exist for dims {BS_DIMS}, got {self.dims}")
        if self.family not in BS_FAMILIES:
            raise ValueError(f"Unknown BS family '{self.family}', expected one of {BS_FAMILIES}")

    @classmethod
    def from_pattern(cls, dims: int, pattern: str) -> "BsVariant":
        """Accept a family name ("ci") or its explicit kind string ("ccii")."""
        if pattern in BS_FAMILIES:
            return cls(dims, pattern)
        for family in BS_FAMILIES:
            if bs_pattern(dims, family) == pattern:
                return cls(dims, family)
        raise ValueError(f"Pattern '{pattern}' is not a supported {dims}D BS variant")

    @property
    def pattern(self) -> str:
        return bs_pattern(self.dims, self.family)

    @property
    def benchmark_id(self) -> str:
        return f"bs_{self.dims}d_{self.family}"

    @property
    def space(self) -> SearchSpace:
        params = []
        for j, kind in enumerate(self.pattern, start=1):
            name = f"x{j}"
            if kind == "c":
                params.append(ParameterSpec.continuous(name, *BS_CONTINUOUS_BOUNDS))
            elif kind == "i":
                params.append(ParameterSpec.integer(name, *BS_INTEGER_LEVELS))
            else:
                params.append(ParameterSpec.discrete(name, BS_DISCRETE_LEVELS))
        return SearchSpace(tuple(params))

    @property
    def budget(self) -> Tuple[int, int]:
        return get_budget("bs", self.dims)


def bs_variants() -> List[BsVariant]:
    return [BsVariant(d, f) for d in BS_DIMS for f in BS_FAMILIES]


def _bs_term(x: np.ndarray, odd: bool) -> np.ndarray:
    """Contribution of one 1-indexed coordinate; odd positions carry the offset square."""
    term = 0.15 * x ** 4 - 3.0 * x ** 2 + 3.0 * x
    if odd:
        term = term + 0.5 * (x + BS_OFFSET) ** 2
    return term


def bs_function(x: np.ndarray) -> np.ndarray:
    """BS value for raw coordinates in [-5, 5]; x has shape (..., d)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    total = sum(_bs_term(x[..., j], odd=(j % 2 == 0)) for j in range(d))
    return total / (2.0 * d) + BS_CONSTANT


def bs_decode(variant: BsVariant, X: np.ndarray) -> np.ndarray:
    """Raw BS coordinates: ordinal encodings v map to v - 5, continuous pass through."""
    X = np.array(X, dtype=float)
    for j, kind in enumerate(variant.pattern):
        if kind != "c":
            X[..., j] -= BS_ENCODING_SHIFT
    return X


def bs_eval(variant: BsVariant, c: Sequence[float]) -> float:
    """
    Evaluate a BS variant at a raw candidate.

    Args:
        variant: BS variant defining the dimension kinds
        c: Candidate with continuous values in [-5, 5] and ordinal encodings

    Returns:
        Objective value (global minimum 0 on the fully continuous variant)
    """
    validate(variant.space, c)
    return float(bs_function(bs_decode(variant, np.asarray(c, dtype=float))))


def bs_truth(variant: BsVariant, grid_points: int = 2001) -> "Optimum":
    """
    Exact optimum of a BS variant.

    The objective is a sum of per-coordinate terms, so each coordinate is
    minimized on its own: ordinal levels by enumeration, continuous ones by a
    dense grid refined with bounded Brent search.
    """
    space = variant.space
    best_values, best_terms, worst_terms = [], [], []
    for j, (spec, kind) in enumerate(zip(space.params, variant.pattern)):
        odd = j % 2 == 0
        if kind == "c":
            grid = np.linspace(spec.low, spec.high, grid_points)
            terms = _bs_term(grid, odd)
            k = int(np.argmin(terms))
            step = grid[1] - grid[0]
            res = optimize.minimize_scalar(
                lambda v: float(_bs_term(np.asarray(v), odd)),
                bounds=(max(spec.low, grid[k] - step), min(spec.high, grid[k] + step)),
                method="bounded",
                options={"xatol": 1e-12},
            )
            x_best, t_best = (float(res.x), float(res.fun)) if res.fun < terms[k] else (float(grid[k]), float(terms[k]))
            best_values.append(x_best)
            best_terms.append(t_best)
            worst_terms.append(float(terms.max()))
        else:
            levels = np.asarray(spec.levels)
            terms = _bs_term(levels - BS_ENCODING_SHIFT, odd)
            k = int(np.argmin(terms))
            best_values.append(float(levels[k]))
            best_terms.append(float(terms[k]))
            worst_terms.append(float(terms.max()))
    d = variant.dims
    value = sum(best_terms) / (2.0 * d) + BS_CONSTANT
    y_max = sum(worst_terms) / (2.0 * d) + BS_CONSTANT
    return Optimum(candidate=tuple(best_values), value=float(value), y_max=float(y_max))


# =============================================================================
# DUST STEP LANDSCAPES
# =============================================================================

@dataclass(frozen=True)
class DustSegment:
    """Piece of a slice over [start, end): flat when value_start == value_end."""
    start: float
    end: float
    value_start: float
    value_end: float

    @property
    def is_flat(self) -> bool:
        return self.value_start == self.value_end

    def value_at(self, x: np.ndarray) -> np.ndarray:
        if self.is_flat:
            return np.full(np.shape(x), self.value_start, dtype=float)
        frac = (np.asarray(x, dtype=float) - self.start) / (self.end - self.start)
        return self.value_start + frac * (self.value_end - self.value_start)


SliceKey = Tuple[int, float]


@dataclass(frozen=True)
class DustSpec:
    """A DUST landscape: one continuous, one binary and one discrete dimension."""
    variant: str
    continuous_bounds: Tuple[float, float]
    discrete_levels: Tuple[float, ...]
    global_min_value: float
    slices: Dict[SliceKey, Tuple[DustSegment, ...]]
    version: int

    @property
    def space(self) -> SearchSpace:
        return SearchSpace((
            ParameterSpec.continuous("x", *self.continuous_bounds),
            ParameterSpec.binary("b"),
            ParameterSpec.discrete("d", self.discrete_levels),
        ))

    @property
    def budget(self) -> Tuple[int, int]:
        return get_budget(self.variant)

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        """Landscape values for raw (N, 3) rows of (x, b, d)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(X.shape[0], dtype=float)
        keys = [(int(b), float(d)) for b, d in X[:, 1:3]]
        for key in set(keys):
            rows = np.array([k == key for k in keys])
            segments = self.slices[key]
            starts = np.array([s.start for s in segments])
            x = X[rows, 0]
            pos = np.clip(np.searchsorted(starts, x, side="right") - 1, 0, len(segments) - 1)
            values = np.empty(x.shape[0], dtype=float)
            for k in np.unique(pos):
                sel = pos == k
                values[sel] = segments[k].value_at(x[sel])
            out[rows] = values
        return out


def _parse_segment(raw: Sequence[float]) -> DustSegment:
    if len(raw) == 3:
        start, end, value = raw
        return DustSegment(float(start), float(end), float(value), float(value))
    if len(raw) == 4:
        start, end, v0, v1 = raw
        return DustSegment(float(start), float(end), float(v0), float(v1))
    raise LandscapeTableError(f"segment must have 3 or 4 entries, got {list(raw)}")


def _check_landscape(spec: DustSpec) -> None:
    low, high = spec.continuous_bounds
    global_cells = 0
    for b in (0, 1):
        for d in spec.discrete_levels:
            key = (b, float(d))
            if key not in spec.slices:
                raise LandscapeTableError(f"{spec.variant}: missing slice b={b}, d={d:g}")
            segments = spec.slices[key]
            if segments[0].start != low or segments[-1].end != high:
                raise LandscapeTableError(f"{spec.variant}: slice {key} does not cover [{low}, {high}]")
            for left, right in zip(segments, segments[1:]):
                if left.end != right.start:
                    raise LandscapeTableError(f"{spec.variant}: gap or overlap at x={left.end} in slice {key}")
            for seg in segments:
                if not seg.start < seg.end:
                    raise LandscapeTableError(f"{spec.variant}: empty segment {seg} in slice {key}")
                if min(seg.value_start, seg.value_end) < spec.global_min_value:
                    raise LandscapeTableError(f"{spec.variant}: value below the global minimum in slice {key}")
                if seg.is_flat and seg.value_start == spec.global_min_value:
                    global_cells += 1
                elif min(seg.value_start, seg.value_end) == spec.global_min_value:
                    raise LandscapeTableError(f"{spec.variant}: sloped segment touches the global minimum")
    if global_cells != 1:
        raise LandscapeTableError(f"{spec.variant}: expected exactly one global cell, found {global_cells}")


@lru_cache(maxsize=None)
def load_dust(variant: str = "dust1", path: Optional[str] = None) -> DustSpec:
    """
    Load and validate a DUST landscape from the bundled table.

    Args:
        variant: "dust1" or "dust2"
        path: Alternative table file with the same layout

    Returns:
        DustSpec with one segment list per (binary, discrete) slice
    """
    table = json.loads(Path(path or DUST_FILE).read_text())
    if variant not in table:
        raise ValueError(f"Unknown DUST variant '{variant}'")
    entry = table[variant]
    slices = {}
    for key, segments in entry["slices"].items():
        parts = dict(item.split("=") for item in key.split(","))
        slices[(int(parts["b"]), float(parts["d"]))] = tuple(_parse_segment(s) for s in segments)
    spec = DustSpec(
        variant=variant,
        continuous_bounds=tuple(float(v) for v in entry["continuous_bounds"]),
        discrete_levels=tuple(float(v) for v in entry["discrete_levels"]),
        global_min_value=float(entry["global_min_value"]),
        slices=slices,
        version=int(table.get("version", 1)),
    )
    _check_landscape(spec)
    return spec


def dust_eval(spec: DustSpec, c: Sequence[float]) -> float:
    """Landscape value at a raw candidate (x, b, d)."""
    validate(spec.space, c)
    return float(spec.evaluate_batch(np.asarray([c], dtype=float))[0])


# =============================================================================
# BRUTE-FORCE OPTIMUM
# =============================================================================

@dataclass(frozen=True)
class Optimum:
    """Minimizer, minimum and maximum of an objective over its space."""
    candidate: Candidate
    value: float
    y_max: float

    @property
    def y_range(self) -> float:
        return self.y_max - self.value

    def __iter__(self) -> Iterator:
        return iter((self.candidate, self.value))


def _plateau_centre(values: np.ndarray, k: int, atol: float = 1e-12) -> int:
    """Middle index of the run of minimal values that contains k."""
    lo = hi = k
    while lo > 0 and values[lo - 1] <= values[k] + atol:
        lo -= 1
    while hi < len(values) - 1 and values[hi + 1] <= values[k] + atol:
        hi += 1
    return (lo + hi) // 2


def brute_force_optimum(
    objective: Callable[[np.ndarray], np.ndarray],
    space: SearchSpace,
    grid_density: int = 41,
    cap: int = DEFAULT_BRUTE_FORCE_CAP,
    grid_step: Optional[float] = None,
    refine: bool = True,
) -> Optimum:
    """
    Exhaustive minimum over ordinal/categorical supports x a continuous grid.

    Args:
        objective: Batch objective on raw (N, D) rows returning (N,) values
        space: Search space (categorical values are category indices)
        grid_density: Grid points per continuous dimension (bounds included)
        cap: Largest number of objective evaluations allowed
        grid_step: Raw spacing per continuous dimension, overrides grid_density
        refine: Polish the continuous coordinates with L-BFGS-B

    Returns:
        Optimum with the best candidate, its value and the grid maximum.
        With one continuous dimension, ties on a flat minimum resolve to the
        middle of the plateau.
    """
    cont = space.continuous_idx
    nominal = space.nominal_idx
    axes = []
    for i in cont:
        spec = space.params[i]
        n = grid_density if grid_step is None else int(round((spec.high - spec.low) / grid_step)) + 1
        axes.append(np.linspace(spec.low, spec.high, max(n, 2)))
    supports = []
    for i in nominal:
        spec = space.params[i]
        supports.append(spec.levels if spec.is_ordinal else tuple(float(k) for k in range(spec.n_levels)))

    n_grid = int(np.prod([len(a) for a in axes], dtype=np.int64))
    n_combos = int(np.prod([len(s) for s in supports], dtype=np.int64))
    if n_grid * n_combos > cap:
        raise BudgetExceededError(f"brute force needs {n_grid * n_combos} evaluations, cap is {cap}")

    if axes:
        mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    else:
        mesh = np.zeros((1, 0))

    best_value, best_row, best_values, y_max = np.inf, None, None, -np.inf
    for combo in itertools.product(*supports):
        X = np.empty((mesh.shape[0], space.dim))
        X[:, cont] = mesh
        if nominal:
            X[:, nominal] = combo
        values = np.asarray(objective(X), dtype=float)
        y_max = max(y_max, float(values.max()))
        k = int(np.argmin(values))
        if values[k] < best_value:
            best_value, best_row, best_values = float(values[k]), X[k].copy(), values

    if len(cont) == 1:
        k = _plateau_centre(best_values, int(np.argmin(best_values)))
        best_row[cont[0]] = mesh[k, 0]

    if refine and cont:
        bounds = [(space.params[i].low, space.params[i].high) for i in cont]

        def fun(u):
            row = best_row.copy()
            row[cont] = u
            return float(objective(row[None, :])[0])

        res = optimize.minimize(fun, best_row[cont], method="L-BFGS-B", bounds=bounds,
                                options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 500})
        if res.fun < best_value - 1e-12:
            best_row[cont] = res.x
            best_value = float(res.fun)

    candidate = tuple(float(v) for v in best_row)
    logger.debug("brute force optimum %.10g at %s over %d points", best_value, candidate, n_grid * n_combos)
    return Optimum(candidate=candidate, value=best_value, y_max=max(y_max, best_value))


# =============================================================================
# BENCHMARK REGISTRY
# =============================================================================

BENCHMARK_FAMILIES = ("bs", "dust1", "dust2")
DUST_GRID_STEP = 0.01


@dataclass(frozen=True)
class Benchmark:
    """A runnable objective: space, batch evaluator, budget and truth oracle."""
    benchmark_id: str
    family: str
    space: SearchSpace
    batch_objective: Callable[[np.ndarray], np.ndarray]
    init_points: int
    iter_budget: int
    truth_fn: Callable[[], Optimum]

    def evaluate(self, c: Sequence[float]) -> float:
        validate(self.space, c)
        return float(self.batch_objective(np.asarray([c], dtype=float))[0])

    def truth(self) -> Optimum:
        return self.truth_fn()

    @property
    def has_continuous(self) -> bool:
        return bool(self.space.continuous_idx)


def get_benchmark(family: str, dims: Optional[int] = None, pattern: Optional[str] = None) -> Benchmark:
    """
    Build a benchmark by family name.

    Args:
        family: "bs", "dust1" or "dust2"
        dims: BS dimensionality (2..6)
        pattern: BS family ("ci", "id", "ii", "dd") or explicit kind string

    Returns:
        Benchmark ready for the run loop
    """
    if family == "bs":
        if dims is None or pattern is None:
            raise ValueError("bs benchmarks need dims and pattern")
        variant = BsVariant.from_pattern(dims, pattern)
        init_points, iter_budget = variant.budget
        return Benchmark(
            benchmark_id=variant.benchmark_id,
            family="bs",
            space=variant.space,
            batch_objective=lambda X, v=variant: bs_function(bs_decode(v, X)),
            init_points=init_points,
            iter_budget=iter_budget,
            truth_fn=lambda v=variant: bs_truth(v),
        )
    if family in ("dust1", "dust2"):
        spec = load_dust(family)
        init_points, iter_budget = spec.budget
        return Benchmark(
            benchmark_id=family,
            family=family,
            space=spec.space,
            batch_objective=spec.evaluate_batch,
            init_points=init_points,
            iter_budget=iter_budget,
            truth_fn=lambda s=spec: brute_force_optimum(s.evaluate_batch, s.space, grid_step=DUST_GRID_STEP),
        )
    raise ValueError(f"Unknown benchmark '{family}', expected one of {BENCHMARK_FAMILIES}")


def all_benchmarks() -> List[Benchmark]:
    """The twenty BS variants followed by DUST1 and DUST2."""
    benches = [get_benchmark("bs", v.dims, v.family) for v in bs_variants()]
    return benches + [get_benchmark("dust1"), get_benchmark("dust2")]


def benchmark_from_id(benchmark_id: str) -> Benchmark:
    """Inverse of Benchmark.benchmark_id ("bs_3d_ci", "dust1", ...)."""
    if benchmark_id in ("dust1", "dust2"):
        return get_benchmark(benchmark_id)
    match = re.fullmatch(r"bs_(\d+)d_([a-z]+)", benchmark_id)
    if not match:
        raise ValueError(f"Unknown benchmark id '{benchmark_id}'")
    return get_benchmark("bs", int(match.group(1)), match.group(2))
