"""
Acquisition Functions.

Expected improvement and lower confidence bound over the GP posterior
(minimization convention), the pure-exploration max-variance criterion,
the already-sampled penalty, the modified-AF (mAF) controller and the two
acquisition optimizers: probabilistic reparameterization for every kernel
and an enumerate-and-polish search for kernel-rounding presets.

Evaluators follow one convention: (B, D) normalized points in, (B,) values
out, larger is better. LCB is exposed as -LCB so both AFs share the same
optimizer path.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
import torch
from scipy import optimize, stats

from benchmarks import MAX_SOBOL_DIM, sobol_points
from gp import GpModel
from kernels import DTYPE
from reparam import (
    ReparamSettings,
    ThetaVector,
    candidate_points,
    index_grid,
    induced_distribution,
    optimize_acquisition_pr,
    sample_candidates,
    support_size,
)
from search_space import Candidate, SearchSpace, denormalize, enumerate_support, min_distance, normalize


logger = logging.getLogger(__name__)

DEFAULT_LCB_WEIGHT = 2.0
DEFAULT_PENALTY = 1e6
MIN_PENALTY = 1e4
DUPLICATE_TOLERANCE = 1e-9
FALLBACK_LABEL = "fallback_MaxVariance"

KR_COMBO_CAP = 20_000
KR_CONTINUOUS_STARTS = 8
KR_POLISH_TOP_K = 5
KR_BATCH = 4096


class AcquisitionSpecError(ValueError):
    """Invalid acquisition settings."""


class AfKind(Enum):
    EI = "EI"
    LCB = "LCB"
    MAX_VARIANCE = "MaxVariance"


@dataclass(frozen=True)
class AcquisitionSpec:
    """AF kind plus the resampling mitigations and exploration trigger."""
    kind: AfKind = AfKind.EI
    lcb_weight: float = DEFAULT_LCB_WEIGHT
    penalty: bool = True
    penalty_value: float = DEFAULT_PENALTY
    noise_subtraction: bool = False
    maf_threshold: Optional[float] = None
    maf_distance_unit: str = "normalized"
    resample_fallback: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", AfKind(self.kind))
        if not self.lcb_weight > 0:
            raise AcquisitionSpecError(f"lcb_weight must be positive, got {self.lcb_weight}")
        if self.penalty and self.penalty_value < MIN_PENALTY:
            raise AcquisitionSpecError(
                f"penalty_value {self.penalty_value:g} is too small to dominate the standardized mean "
                f"(minimum {MIN_PENALTY:g})"
            )
        if self.maf_threshold is not None and not self.maf_threshold > 0:
            raise AcquisitionSpecError(f"maf_threshold must be positive, got {self.maf_threshold}")
        if self.maf_distance_unit not in ("normalized", "raw"):
            raise AcquisitionSpecError(f"unknown distance unit {self.maf_distance_unit!r}")


# =============================================================================
# CLOSED FORMS
# =============================================================================

def expected_improvement(mu, sigma, f_best: float):
    """
    EI for minimization: (f_best - mu) Phi(u) + sigma phi(u), u = (f_best - mu) / sigma.

    Accepts floats, numpy arrays or tensors. Where sigma is 0 the value is
    max(f_best - mu, 0); the tensor path stays differentiable there.
    """
    if isinstance(mu, torch.Tensor) or isinstance(sigma, torch.Tensor):
        mu = torch.as_tensor(mu, dtype=DTYPE)
        sigma = torch.as_tensor(sigma, dtype=DTYPE)
        gap = f_best - mu
        positive = sigma > 0
        safe = torch.where(positive, sigma, torch.ones_like(sigma))
        u = gap / safe
        ei = gap * torch.special.ndtr(u) + safe * torch.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
        return torch.where(positive, ei, gap.clamp_min(0.0))

    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    gap = f_best - mu
    safe = np.where(sigma > 0, sigma, 1.0)
    u = gap / safe
    ei = np.where(sigma > 0, gap * stats.norm.cdf(u) + safe * stats.norm.pdf(u), np.maximum(gap, 0.0))
    return float(ei) if ei.ndim == 0 else ei


def lower_confidence_bound(mu, sigma, weight: float = DEFAULT_LCB_WEIGHT):
    """mu - weight * sigma (lower is more attractive)."""
    if not weight > 0:
        raise AcquisitionSpecError(f"lcb weight must be positive, got {weight}")
    if isinstance(mu, torch.Tensor) or isinstance(sigma, torch.Tensor):
        return torch.as_tensor(mu, dtype=DTYPE) - weight * torch.as_tensor(sigma, dtype=DTYPE)
    out = np.asarray(mu, dtype=float) - weight * np.asarray(sigma, dtype=float)
    return float(out) if out.ndim == 0 else out


# =============================================================================
# PENALTY
# =============================================================================

def matches_sampled(X, sampled, tol: float = DUPLICATE_TOLERANCE):
    """Rows of X (normalized) equal to some sampled row within tol in every coordinate."""
    as_tensor = isinstance(X, torch.Tensor)
    Xt = torch.as_tensor(np.asarray(X, dtype=float)) if not as_tensor else X.detach()
    Xt = Xt.reshape(-1, Xt.shape[-1])
    S = torch.as_tensor(np.asarray(sampled, dtype=float)) if not isinstance(sampled, torch.Tensor) else sampled
    if S.numel() == 0:
        hits = torch.zeros(Xt.shape[0], dtype=torch.bool)
    else:
        S = S.reshape(-1, Xt.shape[-1]).to(Xt.dtype)
        hits = ((Xt[:, None, :] - S[None, :, :]).abs() <= tol).all(-1).any(-1)
    return hits if as_tensor else hits.numpy()


def apply_penalty(mu, X, sampled, penalty_value: float = DEFAULT_PENALTY, tol: float = DUPLICATE_TOLERANCE):
    """
    Add penalty_value to the posterior mean at already-sampled points.

    Args:
        mu: Posterior mean (float, array or tensor), one entry per row of X
        X: Normalized candidate point(s)
        sampled: Normalized training inputs
        penalty_value: Added where a row matches a sampled point

    Returns:
        mu with matched entries raised; unmatched entries untouched
    """
    if isinstance(mu, torch.Tensor):
        hit = matches_sampled(torch.as_tensor(X), sampled, tol)
        return torch.where(hit, mu + penalty_value, mu)
    hit = matches_sampled(np.atleast_2d(np.asarray(X, dtype=float)), sampled, tol)
    mu_arr = np.asarray(mu, dtype=float)
    out = np.where(hit.reshape(mu_arr.shape) if mu_arr.ndim else hit[0], mu_arr + penalty_value, mu_arr)
    return float(out) if np.ndim(out) == 0 else out


def is_duplicate(space: SearchSpace, c: Sequence[float], sampled: Sequence[Sequence[float]],
                 tol: float = DUPLICATE_TOLERANCE) -> bool:
    """Raw candidate equal to a sampled one (continuous coords within tol normalized)."""
    if not len(sampled):
        return False
    S = np.array([normalize(space, s) for s in sampled])
    return bool(matches_sampled(normalize(space, c)[None, :], S, tol)[0])


# =============================================================================
# EVALUATOR
# =============================================================================

class AcquisitionFunction:
    """
    Differentiable AF over a fitted model.

    EI is maximized directly, LCB as -LCB and MaxVariance as the posterior
    variance. With noise subtraction the posterior comes from the model
    refactorized without its fitted noise.
    """

    def __init__(self, model: GpModel, spec: AcquisitionSpec, kind: Optional[AfKind] = None):
        self.spec = spec
        self.kind = AfKind(kind) if kind is not None else spec.kind
        self.model = model.without_noise() if spec.noise_subtraction else model
        self.f_best = model.f_best
        self.sampled = model.X_train if spec.penalty else None

    def __call__(self, X: torch.Tensor) -> torch.Tensor:
        mu, var = self.model.posterior_tensors(X)
        if self.kind == AfKind.MAX_VARIANCE:
            return var
        if self.sampled is not None:
            mu = apply_penalty(mu, X, self.sampled, self.spec.penalty_value)
        positive = var > 0
        sigma = torch.where(positive, torch.sqrt(torch.where(positive, var, torch.ones_like(var))),
                            torch.zeros_like(var))
        if self.kind == AfKind.EI:
            return expected_improvement(mu, sigma, self.f_best)
        return -lower_confidence_bound(mu, sigma, self.spec.lcb_weight)


# =============================================================================
# PROPOSALS AND THE mAF CONTROLLER
# =============================================================================

@dataclass
class Proposal:
    """Candidate chosen by one BO iteration."""
    candidate: Candidate
    af_value: float
    af_kind: str
    used_exploration: bool
    min_distance_to_data: float


def maf_step(base_kind: AfKind, previous_proposal: Optional[Proposal], threshold: Optional[float]) -> AfKind:
    """
    AF kind for the next iteration.

    A proposal closer than threshold to the existing data switches the next
    iteration to MaxVariance; an exploration iteration never triggers another.
    """
    if threshold is None or previous_proposal is None:
        return base_kind
    if not threshold > 0:
        raise AcquisitionSpecError(f"maf threshold must be positive, got {threshold}")
    if previous_proposal.used_exploration:
        return base_kind
    if previous_proposal.min_distance_to_data < threshold:
        return AfKind.MAX_VARIANCE
    return base_kind


class MafController:
    """Per-run mAF state: remembers the previous proposal."""

    def __init__(self, base_kind: AfKind, threshold: Optional[float] = None):
        self.base_kind = AfKind(base_kind)
        self.threshold = threshold
        self.previous: Optional[Proposal] = None
        self.explorations = 0

    def next_kind(self) -> AfKind:
        kind = maf_step(self.base_kind, self.previous, self.threshold)
        if kind == AfKind.MAX_VARIANCE and kind != self.base_kind:
            logger.debug("near-duplicate proposal (distance %.4g): exploring next",
                         self.previous.min_distance_to_data)
        return kind

    def record(self, proposal: Proposal) -> None:
        if proposal.used_exploration:
            self.explorations += 1
        self.previous = proposal


# =============================================================================
# OPTIMIZERS
# =============================================================================

def _evaluate(af, points: np.ndarray) -> np.ndarray:
    out = []
    with torch.no_grad():
        for start in range(0, points.shape[0], KR_BATCH):
            out.append(af(torch.as_tensor(points[start:start + KR_BATCH])).numpy())
    return np.concatenate(out) if out else np.empty(0)


def _level_anchor_combos(space: SearchSpace, seed: int, cap: int) -> np.ndarray:
    """Normalized level-anchor combinations of the non-continuous dims; a Sobol subset above cap."""
    nominal = space.nominal_idx
    sizes = [space.params[i].n_levels for i in nominal]
    anchors = [space.params[i].anchors for i in nominal]
    total = int(np.prod(sizes, dtype=np.int64))
    if total <= cap:
        idx = index_grid(sizes)
    else:
        U = sobol_points(len(nominal), cap, seed=seed) if len(nominal) <= MAX_SOBOL_DIM \
            else np.random.default_rng(seed).uniform(size=(cap, len(nominal)))
        idx = np.unique(np.minimum((U * np.asarray(sizes)).astype(np.int64), np.asarray(sizes) - 1), axis=0)
    return np.stack([anchors[k][idx[:, k]] for k in range(len(nominal))], axis=1) if nominal \
        else np.zeros((1, 0))


def optimize_acquisition_kr(
    af,
    space: SearchSpace,
    seed: int = 0,
    n_continuous_starts: int = KR_CONTINUOUS_STARTS,
    top_k: int = KR_POLISH_TOP_K,
    combo_cap: int = KR_COMBO_CAP,
) -> Tuple[Candidate, float]:
    """
    Gradient-free AF optimization for kernel-rounding presets.

    Every integer-level combination (a Sobol subset above combo_cap) is
    crossed with Sobol continuous starts and screened; the top_k points are
    polished by Nelder-Mead on the continuous coordinates with the integer
    coordinates held fixed.

    Returns:
        (raw candidate, AF value)
    """
    cont, nominal = space.continuous_idx, space.nominal_idx
    combos = _level_anchor_combos(space, seed, combo_cap)
    starts = sobol_points(len(cont), n_continuous_starts, seed=seed) if cont else np.zeros((1, 0))
    grid = np.empty((combos.shape[0] * starts.shape[0], space.dim))
    grid[:, nominal] = np.repeat(combos, starts.shape[0], axis=0)
    grid[:, cont] = np.tile(starts, (combos.shape[0], 1))
    values = _evaluate(af, grid)

    order = np.argsort(-values, kind="stable")[:top_k]
    best_point, best_value = grid[order[0]].copy(), float(values[order[0]])
    if cont:
        for k in order:
            base = grid[k].copy()

            def negative(u, base=base):
                row = base.copy()
                row[cont] = np.clip(u, 0.0, 1.0)
                return -float(_evaluate(af, row[None, :])[0])

            res = optimize.minimize(negative, base[cont], method="Nelder-Mead",
                                    bounds=[(0.0, 1.0)] * len(cont),
                                    options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": 200 * len(cont)})
            if -res.fun > best_value:
                best_value = float(-res.fun)
                best_point = base.copy()
                best_point[cont] = np.clip(res.x, 0.0, 1.0)
    return denormalize(space, best_point), best_value


def _best_unsampled(af, space: SearchSpace, theta: ThetaVector, settings: ReparamSettings,
                    sampled: Sequence[Candidate]) -> Optional[Tuple[Candidate, float]]:
    """Highest-AF candidate not yet sampled: first within the theta support, then the whole space."""
    dist = induced_distribution(space, theta, settings)
    if dist.support_size <= settings.enumeration_cap:
        combos, _ = dist.joint()
        candidates, points = candidate_points(space, theta, dist, combos)
        values = _evaluate(af, points)
        for k in np.argsort(-values, kind="stable"):
            if not is_duplicate(space, candidates[k], sampled):
                return candidates[k], float(values[k])
    if not space.continuous_idx and support_size(space) <= settings.enumeration_cap:
        candidates = enumerate_support(space)
        values = _evaluate(af, np.array([normalize(space, c) for c in candidates]))
        for k in np.argsort(-values, kind="stable"):
            if not is_duplicate(space, candidates[k], sampled):
                return candidates[k], float(values[k])
    return None


def max_variance(model: GpModel, space: SearchSpace, settings: Optional[ReparamSettings] = None,
                 seed: int = 0) -> Candidate:
    """Candidate with the largest posterior variance, via the PR optimizer."""
    settings = settings or ReparamSettings()
    af = AcquisitionFunction(model, AcquisitionSpec(penalty=False), AfKind.MAX_VARIANCE)
    opt = optimize_acquisition_pr(af, space, settings, seed=seed)
    candidate, _ = sample_candidates(af, space, opt.theta, settings, seed=seed)
    return candidate


def propose(
    model: GpModel,
    space: SearchSpace,
    acq: AcquisitionSpec,
    kind: AfKind,
    sampled: Sequence[Candidate],
    settings: Optional[ReparamSettings] = None,
    seed: int = 0,
    kernel_rounding: bool = False,
    af_label: Optional[str] = None,
) -> Proposal:
    """
    One BO proposal.

    Args:
        model: Fitted GP on the current data
        space: Search space
        acq: Acquisition settings (penalty, noise subtraction, mAF unit)
        kind: AF used this iteration (base kind or MaxVariance)
        sampled: Raw candidates evaluated so far
        settings: PR optimizer settings
        seed: Seed for this iteration's optimizer
        kernel_rounding: Use the enumerate-and-polish optimizer
        af_label: Label written to the trace, defaults to kind.value

    Returns:
        Proposal with the distance of the candidate to the existing data
    """
    settings = settings or ReparamSettings()
    af = AcquisitionFunction(model, acq, kind)
    theta = None
    if kernel_rounding:
        candidate, value = optimize_acquisition_kr(af, space, seed=seed)
    else:
        incumbent = sampled[int(np.argmin(model.data.y_raw))] if len(sampled) else None
        extra = [ThetaVector.at_candidate(space, incumbent)] if incumbent is not None else None
        opt = optimize_acquisition_pr(af, space, settings, seed=seed, initial_thetas=extra)
        theta = opt.theta
        candidate, value = sample_candidates(af, space, theta, settings, seed=seed)

    if (acq.resample_fallback and kind != AfKind.MAX_VARIANCE and theta is not None
            and is_duplicate(space, candidate, sampled)):
        replacement = _best_unsampled(af, space, theta, settings, sampled)
        if replacement is not None:
            logger.debug("sampled candidate %s already evaluated, using %s", candidate, replacement[0])
            candidate, value = replacement

    distance = min_distance(space, candidate, sampled, unit=acq.maf_distance_unit)
    return Proposal(
        candidate=tuple(float(v) for v in candidate),
        af_value=float(value),
        af_kind=af_label or kind.value,
        used_exploration=kind == AfKind.MAX_VARIANCE,
        min_distance_to_data=float(distance),
    )
