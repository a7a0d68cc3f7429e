"""
Kernel Formulations and Hyperparameter Priors.

Covariance functions for mixed spaces: Matern-5/2 and RBF base kernels over
normalized non-categorical coordinates, a Hamming-distance kernel with ARD
weights over categorical indices, and the compositions used by the named
presets (product, sum, joint ARD, and the meta product+sum form).

Each preset in KERNEL_PRESETS carries a description of its formulation.
Priors are Gamma (shape-rate) or LogNormal; Gamma lengthscale priors are
matched to quantiles of the normalized input range.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Union

import numpy as np
import torch
from scipy import optimize, special

from search_space import SearchSpace


DTYPE = torch.float64

DEFAULT_JITTER = 1e-6
QUANTILE_PROBS = (0.05, 0.5)
QUANTILE_BOUNDS = (0.05, 0.5)


class KernelParameterError(ValueError):
    """Non-positive lengthscale/weight/scale or an incompatible preset."""


class PriorFitError(ArithmeticError):
    """Quantile-matched prior has no solution inside the search bracket."""


class BaseKernel(Enum):
    MATERN52 = "Matern52"
    RBF = "RBF"


class Composition(Enum):
    PRODUCT = "product"
    SUM = "sum"
    ARD = "ard"
    META = "meta"


class ScaleMode(Enum):
    FREE = "free"
    FIXED_ONE = "fixed_one"


class LengthscalePrior(Enum):
    NONE = "none"
    GAMMA_QUANTILES = "gamma_quantiles"
    LOGNORMAL_DIM = "lognormal_dim"


class ScalePrior(Enum):
    NONE = "none"
    GAMMA_YRANGE = "gamma_yrange"


class Rounding(Enum):
    OFF = "off"
    KR = "kr"


class PriorFamily(Enum):
    GAMMA = "Gamma"
    LOGNORMAL = "LogNormal"


@dataclass(frozen=True)
class PriorSpec:
    """Gamma(a=shape, b=rate) or LogNormal(a=log-mean, b=log-std)."""
    family: PriorFamily
    a: float
    b: float

    def __post_init__(self):
        if self.family == PriorFamily.GAMMA and not (self.a > 0 and self.b > 0):
            raise KernelParameterError(f"Gamma prior needs shape > 0 and rate > 0, got ({self.a}, {self.b})")
        if self.family == PriorFamily.LOGNORMAL and not self.b > 0:
            raise KernelParameterError(f"LogNormal prior needs s > 0, got {self.b}")

    @property
    def median(self) -> float:
        if self.family == PriorFamily.LOGNORMAL:
            return math.exp(self.a)
        return float(special.gammaincinv(self.a, 0.5) / self.b)


@dataclass(frozen=True)
class KernelSpec:
    """Named kernel formulation with its prior and rounding choices."""
    name: str
    base: BaseKernel
    composition: Composition
    scale_mode: ScaleMode
    lengthscale_prior: LengthscalePrior
    scale_prior: ScalePrior
    rounding: Rounding
    description: str = ""

    def has_second_scale(self, n_categorical: int) -> bool:
        """The meta composition fits scale_b only when there are categorical dims to sum over."""
        return self.composition == Composition.META and n_categorical > 0


# =============================================================================
# KERNEL PRESETS
# =============================================================================

KERNEL_PRESETS: Dict[str, KernelSpec] = {
    "meta_off": KernelSpec(
        name="meta_off",
        base=BaseKernel.MATERN52,
        composition=Composition.META,
        scale_mode=ScaleMode.FREE,
        lengthscale_prior=LengthscalePrior.NONE,
        scale_prior=ScalePrior.NONE,
        rounding=Rounding.OFF,
        description="scale_a * (k_cat x k_ard) + scale_b * (k_cat + k_ard); Matern-5/2 ARD block over "
                    "all ordinal and continuous dims, no priors. Mixed-kernel formulation of the "
                    "original reparameterization code. Without categorical dims it reduces to scale_a * k_ard.",
    ),
    "hvafner_fixed": KernelSpec(
        name="hvafner_fixed",
        base=BaseKernel.MATERN52,
        composition=Composition.ARD,
        scale_mode=ScaleMode.FIXED_ONE,
        lengthscale_prior=LengthscalePrior.LOGNORMAL_DIM,
        scale_prior=ScalePrior.NONE,
        rounding=Rounding.OFF,
        description="Matern-5/2 ARD block with LN(sqrt(2) + log(sqrt(D)), sqrt(3)) lengthscale prior, "
                    "scale fixed to 1. Dimension-scaled priors for vanilla BO.",
    ),
    "KR_on_gam_Mat52": KernelSpec(
        name="KR_on_gam_Mat52",
        base=BaseKernel.MATERN52,
        composition=Composition.PRODUCT,
        scale_mode=ScaleMode.FREE,
        lengthscale_prior=LengthscalePrior.GAMMA_QUANTILES,
        scale_prior=ScalePrior.GAMMA_YRANGE,
        rounding=Rounding.KR,
        description="Product Matern-5/2 over continuous x integer dims with integer inputs rounded "
                    "to the nearest level before evaluation. Incompatible with discrete and "
                    "categorical dims.",
    ),
    "BOSS_off_RBF": KernelSpec(
        name="BOSS_off_RBF",
        base=BaseKernel.RBF,
        composition=Composition.PRODUCT,
        scale_mode=ScaleMode.FREE,
        lengthscale_prior=LengthscalePrior.NONE,
        scale_prior=ScalePrior.NONE,
        rounding=Rounding.OFF,
        description="Product of 1D RBF kernels, no priors.",
    ),
    "BOSS_off_Mat52": KernelSpec(
        name="BOSS_off_Mat52",
        base=BaseKernel.MATERN52,
        composition=Composition.PRODUCT,
        scale_mode=ScaleMode.FREE,
        lengthscale_prior=LengthscalePrior.NONE,
        scale_prior=ScalePrior.NONE,
        rounding=Rounding.OFF,
        description="Product of 1D Matern-5/2 kernels, no priors.",
    ),
    "BOSS_off_Mat52_sum": KernelSpec(
        name="BOSS_off_Mat52_sum",
        base=BaseKernel.MATERN52,
        composition=Composition.SUM,
        scale_mode=ScaleMode.FREE,
        lengthscale_prior=LengthscalePrior.NONE,
        scale_prior=ScalePrior.NONE,
        rounding=Rounding.OFF,
        description="Sum of 1D Matern-5/2 kernels plus the categorical block as one term, no priors. "
                    "Prior variance on the diagonal is D * scale.",
    ),
    "BOSS_on_gam_Mat52": KernelSpec(
        name="BOSS_on_gam_Mat52",
        base=BaseKernel.MATERN52,
        composition=Composition.PRODUCT,
        scale_mode=ScaleMode.FREE,
        lengthscale_prior=LengthscalePrior.GAMMA_QUANTILES,
        scale_prior=ScalePrior.GAMMA_YRANGE,
        rounding=Rounding.OFF,
        description="Product Matern-5/2 with quantile-matched Gamma lengthscale prior and "
                    "Gam(2, (1/(2(max(Y)-min(Y))))^2) scale prior.",
    ),
    "BOSS_on_LN_Mat52": KernelSpec(
        name="BOSS_on_LN_Mat52",
        base=BaseKernel.MATERN52,
        composition=Composition.PRODUCT,
        scale_mode=ScaleMode.FREE,
        lengthscale_prior=LengthscalePrior.LOGNORMAL_DIM,
        scale_prior=ScalePrior.GAMMA_YRANGE,
        rounding=Rounding.OFF,
        description="Product Matern-5/2 with LN(sqrt(2) + log(sqrt(D)), sqrt(3)) lengthscale prior "
                    "and Gamma y-range scale prior.",
    ),
    "BOSS_on_gam_fixed_Mat52": KernelSpec(
        name="BOSS_on_gam_fixed_Mat52",
        base=BaseKernel.MATERN52,
        composition=Composition.PRODUCT,
        scale_mode=ScaleMode.FIXED_ONE,
        lengthscale_prior=LengthscalePrior.GAMMA_QUANTILES,
        scale_prior=ScalePrior.NONE,
        rounding=Rounding.OFF,
        description="Product Matern-5/2 with quantile-matched Gamma lengthscale prior, scale fixed to 1.",
    ),
}


def get_preset(name: str) -> KernelSpec:
    if name not in KERNEL_PRESETS:
        raise KernelParameterError(f"unknown kernel preset {name!r}. Available: {sorted(KERNEL_PRESETS)}")
    return KERNEL_PRESETS[name]


def check_compatible(spec: KernelSpec, space: SearchSpace) -> None:
    """Kernel rounding needs integer dims and tolerates no discrete or categorical dims."""
    if spec.rounding != Rounding.KR:
        return
    if space.discrete_idx or space.categorical_idx:
        raise KernelParameterError(
            f"{spec.name}: kernel rounding is incompatible with discrete/categorical dimensions"
        )
    if not space.integer_idx:
        raise KernelParameterError(f"{spec.name}: kernel rounding needs at least one integer dimension")


# =============================================================================
# HYPERPARAMETERS
# =============================================================================

@dataclass
class HyperParams:
    """
    Kernel and likelihood hyperparameters.

    lengthscales: one per non-categorical dimension (normalized units)
    cat_weights: one per categorical dimension
    scale: output variance (the product block's scale for the meta composition)
    scale_b: second scale, used only by the meta composition
    noise: Gaussian noise variance
    """
    lengthscales: np.ndarray
    cat_weights: np.ndarray
    scale: float
    noise: float
    scale_b: float = 1.0

    def __post_init__(self):
        self.lengthscales = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        self.cat_weights = np.atleast_1d(np.asarray(self.cat_weights, dtype=float))
        if np.any(self.lengthscales <= 0) or np.any(self.cat_weights <= 0):
            raise KernelParameterError("lengthscales and categorical weights must be positive")
        if not (self.scale > 0 and self.scale_b > 0):
            raise KernelParameterError(f"scales must be positive, got ({self.scale}, {self.scale_b})")
        if not self.noise >= 0:
            raise KernelParameterError(f"noise must be non-negative, got {self.noise}")

    @classmethod
    def default(cls, space: SearchSpace, noise: float = 1e-3) -> "HyperParams":
        """Heuristic start: lengthscale 0.5*sqrt(D), unit scales and weights."""
        ls = 0.5 * math.sqrt(space.dim)
        return cls(
            lengthscales=np.full(len(space.noncategorical_idx), ls),
            cat_weights=np.ones(len(space.categorical_idx)),
            scale=1.0,
            noise=noise,
        )

    def tensors(self) -> Dict[str, torch.Tensor]:
        return {
            "lengthscales": torch.as_tensor(self.lengthscales),
            "cat_weights": torch.as_tensor(self.cat_weights),
            "scale": torch.as_tensor(self.scale, dtype=DTYPE),
            "scale_b": torch.as_tensor(self.scale_b, dtype=DTYPE),
        }


# =============================================================================
# BASE KERNELS
# =============================================================================

def _matern52(r):
    """Matern-5/2 on a distance already divided by the lengthscale."""
    sqrt5_r = math.sqrt(5.0) * r
    return (1.0 + sqrt5_r + 5.0 / 3.0 * r * r) * torch.exp(-sqrt5_r)


def _rbf_from_sq(r2):
    return torch.exp(-0.5 * r2)


def kernel_1d(base: BaseKernel, lengthscale: float, r: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    One-dimensional unit-diagonal kernel.

    Args:
        base: Matern52 or RBF
        lengthscale: l > 0
        r: |x - x'| in normalized units

    Returns:
        Kernel value(s), same shape as r
    """
    if not lengthscale > 0:
        raise KernelParameterError(f"lengthscale must be positive, got {lengthscale}")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise KernelParameterError("distance must be non-negative")
    scaled = torch.as_tensor(r_arr / lengthscale)
    if base == BaseKernel.MATERN52:
        value = _matern52(scaled)
    else:
        value = _rbf_from_sq(scaled * scaled)
    value = value.numpy()
    return float(value) if value.ndim == 0 else value


def kernel_categorical(weights: Sequence[float], a: Sequence[int], b: Sequence[int]) -> float:
    """Hamming kernel exp(-sum_i w_i * [a_i != b_i])."""
    w = np.asarray(weights, dtype=float)
    a, b = np.asarray(a), np.asarray(b)
    if not (w.shape == a.shape == b.shape):
        raise KernelParameterError(f"shape mismatch: weights {w.shape}, a {a.shape}, b {b.shape}")
    if np.any(w <= 0):
        raise KernelParameterError("categorical weights must be positive")
    return float(np.exp(-np.sum(w * (a != b))))


# =============================================================================
# COMPOSED COVARIANCE
# =============================================================================

def round_integer_coords(space: SearchSpace, X: torch.Tensor) -> torch.Tensor:
    """Snap integer coordinates of normalized inputs to their nearest level anchor."""
    X = X.clone()
    for i in space.integer_idx:
        steps = space.params[i].n_levels - 1
        X[..., i] = torch.round(X[..., i] * steps) / steps
    return X


def covariance(
    spec: KernelSpec,
    space: SearchSpace,
    X1: torch.Tensor,
    X2: torch.Tensor,
    lengthscales: torch.Tensor,
    cat_weights: torch.Tensor,
    scale: torch.Tensor,
    scale_b: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    Cross-covariance matrix between two batches of normalized points.

    Differentiable in the hyperparameter tensors and in the continuous
    coordinates of X1/X2. Shapes: X1 (n, D), X2 (m, D) -> (n, m).
    """
    if spec.rounding == Rounding.KR:
        X1 = round_integer_coords(space, X1)
        X2 = round_integer_coords(space, X2)

    noncat = space.noncategorical_idx
    cat = space.categorical_idx
    n, m = X1.shape[0], X2.shape[0]
    ones = torch.ones(n, m, dtype=X1.dtype)

    k_cat = None
    if cat:
        mismatch = (X1[:, None, cat] != X2[None, :, cat]).to(X1.dtype)
        k_cat = torch.exp(-(mismatch * cat_weights).sum(-1))

    scaled = (X1[:, None, noncat] - X2[None, :, noncat]) / lengthscales

    def per_dim():
        if spec.base == BaseKernel.MATERN52:
            return _matern52(scaled.abs())
        return _rbf_from_sq(scaled * scaled)

    def joint():
        if not noncat:
            return ones
        r2 = (scaled * scaled).sum(-1)
        if spec.base == BaseKernel.RBF:
            return _rbf_from_sq(r2)
        r = torch.where(r2 > 0, torch.sqrt(r2.clamp_min(1e-30)), torch.zeros_like(r2))
        return _matern52(r)

    if spec.composition == Composition.PRODUCT:
        k = per_dim().prod(-1) if noncat else ones
        if k_cat is not None:
            k = k * k_cat
        return scale * k

    if spec.composition == Composition.SUM:
        k = per_dim().sum(-1) if noncat else torch.zeros(n, m, dtype=X1.dtype)
        if k_cat is not None:
            k = k + k_cat
        return scale * k

    k_ard = joint()
    if spec.composition == Composition.ARD:
        return scale * (k_ard * k_cat if k_cat is not None else k_ard)

    # meta: product block plus sum block, each with its own scale; without
    # categorical dims both blocks are k_ard, so a single scale is kept
    if k_cat is None:
        return scale * k_ard
    if scale_b is None:
        raise KernelParameterError(f"{spec.name}: meta composition needs a second scale")
    return scale * (k_ard * k_cat) + scale_b * (k_ard + k_cat)


def _as_batch(points) -> torch.Tensor:
    return torch.as_tensor(np.atleast_2d(np.asarray(points, dtype=float)))


def kernel_eval(spec: KernelSpec, hp: HyperParams, space: SearchSpace, p, q) -> float:
    """Covariance k(p, q) between two normalized points of the same space."""
    with torch.no_grad():
        return float(covariance(spec, space, _as_batch(p), _as_batch(q), **hp.tensors())[0, 0])


def gram(spec: KernelSpec, hp: HyperParams, space: SearchSpace, points) -> np.ndarray:
    """Symmetric Gram matrix K_ij = k(p_i, p_j)."""
    X = _as_batch(points)
    with torch.no_grad():
        return covariance(spec, space, X, X, **hp.tensors()).numpy()


# =============================================================================
# PRIORS
# =============================================================================

def gamma_from_quantiles(
    q1: float = QUANTILE_BOUNDS[0],
    q2: float = QUANTILE_BOUNDS[1],
    p1: float = QUANTILE_PROBS[0],
    p2: float = QUANTILE_PROBS[1],
    bracket=(1e-2, 1e3),
) -> PriorSpec:
    """
    Gamma(shape, rate) with CDF(q1) = p1 and CDF(q2) = p2.

    For each trial shape the rate is fixed by the q2 condition; the shape is
    then found by a bracketed root search on the q1 condition.

    Raises:
        KernelParameterError: quantiles or probabilities out of order
        PriorFitError: no root inside the bracket
    """
    if not 0 < q1 < q2:
        raise KernelParameterError(f"need 0 < q1 < q2, got ({q1}, {q2})")
    if not 0 < p1 < p2 < 1:
        raise KernelParameterError(f"need 0 < p1 < p2 < 1, got ({p1}, {p2})")

    def rate_for(shape: float) -> float:
        return float(special.gammaincinv(shape, p2)) / q2

    def mismatch(shape: float) -> float:
        return float(special.gammainc(shape, rate_for(shape) * q1)) - p1

    lo, hi = bracket
    if mismatch(lo) * mismatch(hi) > 0:
        raise PriorFitError(f"no Gamma prior matches quantiles ({q1}, {q2}) inside shape bracket {bracket}")
    shape = optimize.brentq(mismatch, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=500)
    return PriorSpec(PriorFamily.GAMMA, float(shape), rate_for(shape))


def lognormal_dim_prior(dim: int) -> PriorSpec:
    """LN(sqrt(2) + log(sqrt(D)), sqrt(3)); median e^sqrt(2) * sqrt(D)."""
    return PriorSpec(PriorFamily.LOGNORMAL, math.sqrt(2.0) + 0.5 * math.log(dim), math.sqrt(3.0))


def gamma_yrange_prior(y: Sequence[float]) -> PriorSpec:
    """Gam(2, (1 / (2 (max y - min y)))^2) in shape-rate form."""
    spread = max(float(np.ptp(np.asarray(y, dtype=float))), 1e-6)
    return PriorSpec(PriorFamily.GAMMA, 2.0, (1.0 / (2.0 * spread)) ** 2)


def prior_log_density(prior: PriorSpec, v):
    """
    Log pdf of the prior at v.

    Accepts a float (returns float, raises on v <= 0) or a tensor (returns a
    differentiable tensor; positivity is the caller's responsibility).
    """
    is_tensor = isinstance(v, torch.Tensor)
    if not is_tensor and not v > 0:
        raise KernelParameterError(f"prior density needs v > 0, got {v}")
    t = v if is_tensor else torch.as_tensor(float(v), dtype=DTYPE)
    a, b = prior.a, prior.b
    if prior.family == PriorFamily.GAMMA:
        out = a * math.log(b) - math.lgamma(a) + (a - 1.0) * torch.log(t) - b * t
    else:
        log_t = torch.log(t)
        out = -log_t - math.log(b) - 0.5 * math.log(2.0 * math.pi) - (log_t - a) ** 2 / (2.0 * b * b)
    return out if is_tensor else float(out)


def lengthscale_prior_for(spec: KernelSpec, space: SearchSpace) -> Optional[PriorSpec]:
    if spec.lengthscale_prior == LengthscalePrior.GAMMA_QUANTILES:
        return gamma_from_quantiles()
    if spec.lengthscale_prior == LengthscalePrior.LOGNORMAL_DIM:
        return lognormal_dim_prior(space.dim)
    return None


def scale_prior_for(spec: KernelSpec, y_std: Sequence[float]) -> Optional[PriorSpec]:
    if spec.scale_prior == ScalePrior.GAMMA_YRANGE and spec.scale_mode == ScaleMode.FREE:
        return gamma_yrange_prior(y_std)
    return None
