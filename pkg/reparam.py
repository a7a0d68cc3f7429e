"""
Probabilistic Reparameterization of Acquisition Functions.

Non-continuous dimensions are replaced by continuous parameters theta of an
independent finite distribution over valid levels/categories:

    binary/integer: P(floor(theta) + 1) = sigmoid((theta - floor(theta) - 0.5) / tau)
    discrete:       P(d_{i+1}) = sigmoid((theta - d_i - (d_{i+1} - d_i) / 2) / tau)
    categorical:    softmax((theta - 0.5) / tau)

The probabilistic objective (PO) is the expectation of the acquisition
function under that distribution. It is maximized jointly over the
continuous coordinates and theta with projected multi-restart Adam, and the
final candidate is the best of a handful of draws from the optimized
distribution.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from benchmarks import MAX_SOBOL_DIM, sobol_points
from kernels import DTYPE
from search_space import Candidate, ParamKind, ParameterSpec, SearchSpace


logger = logging.getLogger(__name__)

# Acquisition evaluator: (B, D) normalized points -> (B,) values, larger is better
AcquisitionEvaluator = Callable[[torch.Tensor], torch.Tensor]


class EnumerationModeError(ValueError):
    """Exact expectation requested over a support larger than the cap."""


class ReparamNumericError(ArithmeticError):
    """Every optimization restart produced a non-finite objective."""


class TemperatureMode(Enum):
    DIVIDE = "divide"
    MULTIPLY = "multiply"


@dataclass(frozen=True)
class ReparamSettings:
    """Optimizer and distribution settings exposed through the run config."""
    tau: float = 0.1
    restarts: int = 20
    steps: int = 100
    lr: float = 0.025
    n_samples: int = 32
    mc_samples: int = 128
    enumeration_cap: int = 1024
    categorical_temperature: TemperatureMode = TemperatureMode.DIVIDE
    cat_init_jitter: float = 1e-2

    def __post_init__(self):
        object.__setattr__(self, "categorical_temperature", TemperatureMode(self.categorical_temperature))
        if not self.tau > 0:
            raise ValueError(f"temperature must be positive, got {self.tau}")
        if self.restarts < 1 or self.steps < 0 or self.n_samples < 1 or self.mc_samples < 1:
            raise ValueError("restarts, n_samples and mc_samples must be >= 1 and steps >= 0")


# =============================================================================
# THETA AND INDUCED DISTRIBUTIONS
# =============================================================================

@dataclass
class ThetaVector:
    """
    Continuous decision vector of the reparameterized problem.

    cont: normalized continuous coordinates in [0, 1]
    ord: one entry per ordinal dim, in [0, L-1] (integer) or [d_1, d_D] (discrete)
    cat: one vector of length C per categorical dim, entries in [0, 1]
    """
    cont: np.ndarray
    ord: np.ndarray
    cat: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.cont = np.atleast_1d(np.asarray(self.cont, dtype=float))
        self.ord = np.atleast_1d(np.asarray(self.ord, dtype=float))
        self.cat = [np.asarray(c, dtype=float) for c in self.cat]

    @classmethod
    def at_candidate(cls, space: SearchSpace, c: Sequence[float]) -> "ThetaVector":
        """Theta centred on a candidate: ordinal theta on its level, one-hot categorical."""
        cont = [(c[i] - space.params[i].low) / (space.params[i].high - space.params[i].low)
                for i in space.continuous_idx]
        ord_ = []
        for i in space.ordinal_idx:
            spec = space.params[i]
            if spec.kind == ParamKind.INTEGER:
                ord_.append(spec.levels.index(float(c[i])))
            else:
                ord_.append(float(c[i]))
        cats = []
        for i in space.categorical_idx:
            onehot = np.zeros(space.params[i].n_levels)
            onehot[int(c[i])] = 1.0
            cats.append(onehot)
        return cls(cont=np.asarray(cont), ord=np.asarray(ord_), cat=cats)


def index_grid(sizes: Sequence[int]) -> np.ndarray:
    """Lexicographic (M, len(sizes)) array of index combinations; M = 1 when sizes is empty."""
    M = int(np.prod(sizes, dtype=np.int64))
    grid = np.array(list(itertools.product(*[range(s) for s in sizes])), dtype=np.int64)
    return grid.reshape(M, len(sizes))


def theta_bounds(spec: ParameterSpec) -> Tuple[float, float]:
    if spec.kind == ParamKind.INTEGER:
        return 0.0, float(spec.n_levels - 1)
    if spec.kind == ParamKind.DISCRETE:
        return spec.levels[0], spec.levels[-1]
    return 0.0, 1.0


def _ordinal_bernoulli(spec: ParameterSpec, theta: torch.Tensor, tau: float) -> Tuple[torch.Tensor, torch.Tensor]:
    """Lower level index and P(upper level) for a batch of ordinal thetas."""
    lo, hi = theta_bounds(spec)
    theta = theta.clamp(lo, hi)
    top = spec.n_levels - 2
    if spec.kind == ParamKind.INTEGER:
        idx = torch.floor(theta.detach()).long().clamp(0, top)
        p_up = torch.sigmoid((theta - idx - 0.5) / tau)
        return idx, p_up
    levels = torch.as_tensor(np.asarray(spec.levels, dtype=float))
    idx = (torch.searchsorted(levels, theta.detach().contiguous(), right=True) - 1).clamp(0, top)
    lower, upper = levels[idx], levels[idx + 1]
    p_up = torch.sigmoid((theta - lower - (upper - lower) / 2.0) / tau)
    # theta at the last level puts all mass there
    p_up = torch.where(theta >= levels[-1], torch.ones_like(p_up), p_up)
    return idx, p_up


def _categorical_probs(theta: torch.Tensor, tau: float, mode: TemperatureMode) -> torch.Tensor:
    theta = theta.clamp(0.0, 1.0)
    logits = (theta - 0.5) / tau if mode == TemperatureMode.DIVIDE else (theta - 0.5) * tau
    return torch.softmax(logits, dim=-1)


@dataclass(frozen=True)
class DimDistribution:
    """Finite distribution of one non-continuous dimension."""
    name: str
    support: Tuple[float, ...]
    coords: Tuple[float, ...]
    probs: np.ndarray


@dataclass(frozen=True)
class DiscreteDistribution:
    """Independent per-dimension distributions over the nominal dims, in space order."""
    dims: Tuple[DimDistribution, ...]
    tau: float

    @property
    def support_size(self) -> int:
        return int(np.prod([len(d.support) for d in self.dims], dtype=np.int64))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """(n, q) array of support indices, one column per dim."""
        cols = [rng.choice(len(d.support), size=n, p=d.probs) for d in self.dims]
        return np.stack(cols, axis=1) if cols else np.zeros((n, 0), dtype=int)

    def joint(self) -> Tuple[np.ndarray, np.ndarray]:
        """All support index combinations (lexicographic) and their joint probabilities."""
        combos = index_grid([len(d.support) for d in self.dims])
        probs = np.ones(combos.shape[0])
        for k, d in enumerate(self.dims):
            probs = probs * d.probs[combos[:, k]]
        return combos, probs


def transform(
    spec: ParameterSpec,
    theta,
    tau: float = 0.1,
    categorical_temperature: TemperatureMode = TemperatureMode.DIVIDE,
) -> DimDistribution:
    """
    Distribution induced by theta on one non-continuous dimension.

    Out-of-range theta is clamped. Ordinal dims get a two-level support
    (the bracketing levels); categorical dims get all C categories.
    """
    if spec.kind == ParamKind.CONTINUOUS:
        raise ValueError(f"{spec.name}: continuous dimensions are not reparameterized")
    if spec.kind == ParamKind.CATEGORICAL:
        t = torch.as_tensor(np.asarray(theta, dtype=float))
        if t.shape != (spec.n_levels,):
            raise ValueError(f"{spec.name}: expected {spec.n_levels} categorical parameters, got {tuple(t.shape)}")
        probs = _categorical_probs(t, tau, TemperatureMode(categorical_temperature)).numpy()
        k = tuple(float(i) for i in range(spec.n_levels))
        return DimDistribution(spec.name, support=k, coords=k, probs=probs)
    idx, p_up = _ordinal_bernoulli(spec, torch.as_tensor([float(theta)], dtype=DTYPE), tau)
    i, p = int(idx[0]), float(p_up[0])
    anchors = spec.anchors
    return DimDistribution(
        spec.name,
        support=(spec.levels[i], spec.levels[i + 1]),
        coords=(float(anchors[i]), float(anchors[i + 1])),
        probs=np.array([1.0 - p, p]),
    )


def induced_distribution(space: SearchSpace, theta: ThetaVector, settings: Optional[ReparamSettings] = None) -> DiscreteDistribution:
    settings = settings or ReparamSettings()
    dims = []
    k_ord = k_cat = 0
    for i in space.nominal_idx:
        spec = space.params[i]
        if spec.kind == ParamKind.CATEGORICAL:
            dims.append(transform(spec, theta.cat[k_cat], settings.tau, settings.categorical_temperature))
            k_cat += 1
        else:
            dims.append(transform(spec, theta.ord[k_ord], settings.tau))
            k_ord += 1
    return DiscreteDistribution(dims=tuple(dims), tau=settings.tau)


# =============================================================================
# PROBABILISTIC OBJECTIVE
# =============================================================================

def _nominal_options(space, o, cats, settings):
    """Per nominal dim: (values (R, s), probs (R, s)) in normalized coordinates."""
    options = []
    k_ord = k_cat = 0
    for i in space.nominal_idx:
        spec = space.params[i]
        if spec.kind == ParamKind.CATEGORICAL:
            probs = _categorical_probs(cats[k_cat], settings.tau, settings.categorical_temperature)
            values = torch.arange(spec.n_levels, dtype=DTYPE).expand_as(probs)
            k_cat += 1
        else:
            idx, p_up = _ordinal_bernoulli(spec, o[:, k_ord], settings.tau)
            anchors = torch.as_tensor(spec.anchors)
            values = torch.stack([anchors[idx], anchors[idx + 1]], dim=-1)
            probs = torch.stack([1.0 - p_up, p_up], dim=-1)
            k_ord += 1
        options.append((values, probs))
    return options


def support_size(space: SearchSpace) -> int:
    """Joint support size of the reparameterized distribution (2 per ordinal dim, C per categorical)."""
    sizes = [2 if space.params[i].is_ordinal else space.params[i].n_levels for i in space.nominal_idx]
    return int(np.prod(sizes, dtype=np.int64))


def resolve_mode(space: SearchSpace, settings: ReparamSettings, mode: str = "auto") -> str:
    if mode == "auto":
        return "exact" if support_size(space) <= settings.enumeration_cap else "mc"
    if mode == "exact" and support_size(space) > settings.enumeration_cap:
        raise EnumerationModeError(
            f"joint support {support_size(space)} exceeds enumeration cap {settings.enumeration_cap}"
        )
    if mode not in ("exact", "mc"):
        raise ValueError(f"unknown expectation mode {mode!r}")
    return mode


def _assemble(space: SearchSpace, x: torch.Tensor, nominal_cols: Dict[int, torch.Tensor], M: int) -> torch.Tensor:
    R = x.shape[0]
    cont_pos = {i: k for k, i in enumerate(space.continuous_idx)}
    cols = []
    for i in range(space.dim):
        if i in cont_pos:
            cols.append(x[:, cont_pos[i]][:, None].expand(R, M))
        else:
            cols.append(nominal_cols[i])
    return torch.stack(cols, dim=-1)


def _po_exact(af, space, x, o, cats, settings) -> torch.Tensor:
    options = _nominal_options(space, o, cats, settings)
    combos = torch.as_tensor(index_grid([v.shape[-1] for v, _ in options]))
    M = combos.shape[0]
    R = x.shape[0]
    joint_p = torch.ones(R, M, dtype=DTYPE)
    nominal_cols = {}
    for k, i in enumerate(space.nominal_idx):
        values, probs = options[k]
        sel = combos[:, k]
        nominal_cols[i] = values[:, sel]
        joint_p = joint_p * probs[:, sel]
    points = _assemble(space, x, nominal_cols, M)
    alpha = af(points.reshape(R * M, space.dim)).reshape(R, M)
    return (joint_p * alpha).sum(-1)


def _draw_uniforms(space: SearchSpace, R: int, N: int, rng: np.random.Generator) -> torch.Tensor:
    return torch.as_tensor(rng.uniform(size=(R, N, len(space.nominal_idx))))


def _po_mc(af, space, x, o, cats, settings, u: torch.Tensor) -> torch.Tensor:
    """
    Monte Carlo PO with common random numbers u (R, N, q).

    Ordinal draws use a straight-through tanh relaxation; categorical draws
    carry a score-function factor so their parameters still get gradients.
    """
    options = _nominal_options(space, o, cats, settings)
    R, N = u.shape[0], u.shape[1]
    weight = torch.ones(R, N, dtype=DTYPE)
    nominal_cols = {}
    for k, i in enumerate(space.nominal_idx):
        values, probs = options[k]
        uk = u[:, :, k]
        if space.params[i].is_ordinal:
            p_up = probs[:, 1:2]
            hard = (uk < p_up.detach()).to(DTYPE)
            relaxed = 0.5 * (1.0 + torch.tanh((p_up - uk) / settings.tau))
            z = hard + relaxed - relaxed.detach()
            nominal_cols[i] = values[:, 0:1] + z * (values[:, 1:2] - values[:, 0:1])
        else:
            cdf = torch.cumsum(probs.detach(), dim=-1)
            pick = torch.searchsorted(cdf.contiguous(), uk.contiguous(), right=True).clamp(max=probs.shape[-1] - 1)
            chosen = probs.gather(1, pick)
            weight = weight * chosen / chosen.detach()
            nominal_cols[i] = values.gather(1, pick)
    points = _assemble(space, x, nominal_cols, N)
    alpha = af(points.reshape(R * N, space.dim)).reshape(R, N)
    return (weight * alpha).mean(-1)


def _theta_tensors(space: SearchSpace, thetas: Sequence[ThetaVector], requires_grad: bool):
    x = torch.tensor(np.stack([t.cont for t in thetas]).reshape(len(thetas), len(space.continuous_idx)),
                     requires_grad=requires_grad)
    o = torch.tensor(np.stack([t.ord for t in thetas]).reshape(len(thetas), len(space.ordinal_idx)),
                     requires_grad=requires_grad)
    cats = [
        torch.tensor(np.stack([t.cat[k] for t in thetas]), requires_grad=requires_grad)
        for k in range(len(space.categorical_idx))
    ]
    return x, o, cats


def _po_batch(af, space, x, o, cats, settings, mode, uniforms):
    if mode == "exact":
        return _po_exact(af, space, x, o, cats, settings)
    return _po_mc(af, space, x, o, cats, settings, uniforms)


def probabilistic_objective(
    af: AcquisitionEvaluator,
    space: SearchSpace,
    theta: ThetaVector,
    settings: Optional[ReparamSettings] = None,
    mode: str = "auto",
    seed: int = 0,
) -> float:
    """
    Expected acquisition value under the distribution induced by theta.

    Args:
        af: Evaluator on (B, D) normalized points, larger is better
        space: Search space
        theta: Continuous coordinates plus reparameterization parameters
        settings: Temperature, MC size and enumeration cap
        mode: "exact" (enumerate the joint support), "mc" or "auto"
        seed: Seed for the MC draws

    Returns:
        PO value
    """
    settings = settings or ReparamSettings()
    mode = resolve_mode(space, settings, mode)
    x, o, cats = _theta_tensors(space, [theta], requires_grad=False)
    u = _draw_uniforms(space, 1, settings.mc_samples, np.random.default_rng(seed)) if mode == "mc" else None
    with torch.no_grad():
        return float(_po_batch(af, space, x, o, cats, settings, mode, u)[0])


def po_gradient(
    af: AcquisitionEvaluator,
    space: SearchSpace,
    theta: ThetaVector,
    settings: Optional[ReparamSettings] = None,
    mode: str = "exact",
    seed: int = 0,
) -> Tuple[float, ThetaVector]:
    """PO and its gradient with respect to every component of theta (same layout as theta)."""
    settings = settings or ReparamSettings()
    mode = resolve_mode(space, settings, mode)
    x, o, cats = _theta_tensors(space, [theta], requires_grad=True)
    u = _draw_uniforms(space, 1, settings.mc_samples, np.random.default_rng(seed)) if mode == "mc" else None
    po = _po_batch(af, space, x, o, cats, settings, mode, u)[0]
    leaves = [x, o] + cats
    grads = torch.autograd.grad(po, leaves, allow_unused=True)
    grads = [torch.zeros_like(t) if g is None else g for t, g in zip(leaves, grads)]
    return float(po), ThetaVector(
        cont=grads[0][0].numpy(),
        ord=grads[1][0].numpy(),
        cat=[g[0].numpy() for g in grads[2:]],
    )


# =============================================================================
# OPTIMIZATION
# =============================================================================

@dataclass
class PrOptimum:
    """Best (x, theta) found and its PO value."""
    theta: ThetaVector
    value: float
    mode: str
    restart: int


def _initial_thetas(space: SearchSpace, settings: ReparamSettings, seed: int) -> List[ThetaVector]:
    """Sobol-spread continuous coords and ordinal thetas; categorical at 0.5 plus seeded jitter."""
    R = settings.restarts
    n_cont, ordinals = len(space.continuous_idx), space.ordinal_idx
    n_spread = n_cont + len(ordinals)
    rng = np.random.default_rng([seed, 7])
    if 0 < n_spread <= MAX_SOBOL_DIM:
        U = sobol_points(n_spread, R, seed=seed)
    else:
        U = rng.uniform(size=(R, n_spread))
    thetas = []
    for r in range(R):
        ord_ = []
        for k, i in enumerate(ordinals):
            lo, hi = theta_bounds(space.params[i])
            ord_.append(lo + U[r, n_cont + k] * (hi - lo))
        cats = [0.5 + settings.cat_init_jitter * rng.standard_normal(space.params[i].n_levels)
                for i in space.categorical_idx]
        thetas.append(ThetaVector(cont=U[r, :n_cont], ord=np.asarray(ord_), cat=cats))
    return thetas


def _project(space: SearchSpace, x, o, cats) -> None:
    with torch.no_grad():
        x.clamp_(0.0, 1.0)
        for k, i in enumerate(space.ordinal_idx):
            lo, hi = theta_bounds(space.params[i])
            o[:, k].clamp_(lo, hi)
        for c in cats:
            c.clamp_(0.0, 1.0)


def optimize_acquisition_pr(
    af: AcquisitionEvaluator,
    space: SearchSpace,
    settings: Optional[ReparamSettings] = None,
    seed: int = 0,
    initial_thetas: Optional[Sequence[ThetaVector]] = None,
    mode: str = "auto",
) -> PrOptimum:
    """
    Maximize the PO by projected multi-restart Adam.

    Every restart keeps its best iterate (including its starting point);
    restarts whose PO turns non-finite are discarded. Extra starting points
    passed in initial_thetas run alongside the Sobol-spread restarts.

    Raises:
        ReparamNumericError: no restart produced a finite PO
    """
    settings = settings or ReparamSettings()
    mode = resolve_mode(space, settings, mode)
    thetas = _initial_thetas(space, settings, seed) + list(initial_thetas or [])
    x, o, cats = _theta_tensors(space, thetas, requires_grad=True)
    _project(space, x, o, cats)
    R = len(thetas)
    u = _draw_uniforms(space, R, settings.mc_samples, np.random.default_rng([seed, 11])) if mode == "mc" else None

    leaves = [t for t in [x, o] + cats if t.numel()]
    opt = torch.optim.Adam(leaves, lr=settings.lr) if leaves else None
    best_value = torch.full((R,), -np.inf, dtype=DTYPE)
    best_state = [t.detach().clone() for t in [x, o] + cats]

    for step in range(settings.steps + 1):
        po = _po_batch(af, space, x, o, cats, settings, mode, u)
        finite = torch.isfinite(po)
        with torch.no_grad():
            improved = finite & (po > best_value)
            best_value = torch.where(improved, po.detach(), best_value)
            for saved, live in zip(best_state, [x, o] + cats):
                saved[improved] = live.detach()[improved]
        if step == settings.steps or opt is None:
            break
        opt.zero_grad()
        loss = -torch.where(finite, po, torch.zeros_like(po)).sum()
        loss.backward()
        opt.step()
        _project(space, x, o, cats)

    if not bool(torch.isfinite(best_value).any()):
        raise ReparamNumericError("every PR restart produced a non-finite objective")
    discarded = int((~torch.isfinite(best_value)).sum())
    if discarded:
        logger.warning("%d of %d PR restarts discarded (non-finite objective)", discarded, R)
    r = int(torch.argmax(best_value))
    theta = ThetaVector(
        cont=best_state[0][r].numpy().copy(),
        ord=best_state[1][r].numpy().copy(),
        cat=[s[r].numpy().copy() for s in best_state[2:]],
    )
    logger.debug("PR optimum %.6g from restart %d (%s mode)", float(best_value[r]), r, mode)
    return PrOptimum(theta=theta, value=float(best_value[r]), mode=mode, restart=r)


# =============================================================================
# CANDIDATE SAMPLING
# =============================================================================

def candidate_points(space: SearchSpace, theta: ThetaVector, dist: DiscreteDistribution,
                     combos: np.ndarray) -> Tuple[List[Candidate], np.ndarray]:
    """Raw candidates and normalized points for support-index combinations paired with theta.cont."""
    cont_pos = {i: k for k, i in enumerate(space.continuous_idx)}
    nom_pos = {i: k for k, i in enumerate(space.nominal_idx)}
    points = np.empty((combos.shape[0], space.dim))
    candidates = []
    for row, combo in enumerate(combos):
        values = []
        for i, spec in enumerate(space.params):
            if i in cont_pos:
                u = float(np.clip(theta.cont[cont_pos[i]], 0.0, 1.0))
                points[row, i] = u
                values.append(spec.low + u * (spec.high - spec.low))
            else:
                d = dist.dims[nom_pos[i]]
                j = int(combo[nom_pos[i]])
                points[row, i] = d.coords[j]
                values.append(d.support[j])
        candidates.append(tuple(values))
    return candidates, points


def sample_candidates(
    af: AcquisitionEvaluator,
    space: SearchSpace,
    theta: ThetaVector,
    settings: Optional[ReparamSettings] = None,
    seed: int = 0,
) -> Tuple[Candidate, float]:
    """
    Draw n_samples configurations from the optimized distribution, pair each
    with the optimized continuous coordinates, and return the argmax of af
    (first one on ties) with its value.
    """
    settings = settings or ReparamSettings()
    dist = induced_distribution(space, theta, settings)
    combos = dist.sample(np.random.default_rng(seed), settings.n_samples)
    candidates, points = candidate_points(space, theta, dist, combos)
    with torch.no_grad():
        values = af(torch.as_tensor(points)).numpy()
    best = int(np.argmax(values))
    return candidates[best], float(values[best])
