"""
Exact Gaussian Process Regression.

Posterior mean/covariance on z-scored targets and MAP hyperparameter fitting
(Adam on log-hyperparameters, log marginal likelihood plus log priors).

Posterior:
    mean = k*^T (K + noise I)^-1 y
    cov  = k** - k*^T (K + noise I)^-1 k*

Factorizations add a jitter to the diagonal and escalate it up to 1e-4
before giving up with GpNumericError.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from kernels import (
    DEFAULT_JITTER,
    DTYPE,
    HyperParams,
    KernelSpec,
    ScaleMode,
    check_compatible,
    covariance,
    lengthscale_prior_for,
    prior_log_density,
    scale_prior_for,
)
from search_space import SearchSpace


logger = logging.getLogger(__name__)

JITTER_LADDER = (1e-6, 1e-5, 1e-4)
NOISE_FLOOR = 1e-6

# Box on log-hyperparameters during fitting
LOG_BOUNDS = {
    "lengthscale": (math.log(1e-3), math.log(1e3)),
    "cat_weight": (math.log(1e-3), math.log(1e3)),
    "scale": (math.log(1e-8), math.log(1e4)),
    "noise": (math.log(NOISE_FLOOR), math.log(10.0)),
}


class GpNumericError(ArithmeticError):
    """Covariance factorization failed after jitter escalation."""


# =============================================================================
# DATA
# =============================================================================

@dataclass(frozen=True)
class Dataset:
    """Observed inputs (normalized) with raw and z-scored targets."""
    X: np.ndarray
    y_raw: np.ndarray
    y_std: np.ndarray
    y_mean: float
    y_sd: float

    @classmethod
    def from_observations(cls, X: Sequence[Sequence[float]], y: Sequence[float]) -> "Dataset":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} targets")
        y_mean = float(np.mean(y)) if y.size else 0.0
        y_sd = float(np.std(y, ddof=1)) if y.size > 1 else 0.0
        if not (np.isfinite(y_sd) and y_sd > 0):
            y_sd = 1.0
        return cls(X=X, y_raw=y, y_std=(y - y_mean) / y_sd, y_mean=y_mean, y_sd=y_sd)

    @property
    def n(self) -> int:
        return int(self.y_raw.shape[0])


@dataclass
class PosteriorResult:
    """Posterior on the standardized scale; raw() converts back."""
    mean: np.ndarray
    var: np.ndarray
    cov: Optional[np.ndarray] = None
    y_mean: float = 0.0
    y_sd: float = 1.0

    def raw(self) -> "PosteriorResult":
        return PosteriorResult(
            mean=self.mean * self.y_sd + self.y_mean,
            var=self.var * self.y_sd ** 2,
            cov=None if self.cov is None else self.cov * self.y_sd ** 2,
            y_mean=self.y_mean,
            y_sd=self.y_sd,
        )


# =============================================================================
# LOG-PARAMETER LAYOUT
# =============================================================================

def log_param_names(spec: KernelSpec, space: SearchSpace) -> List[str]:
    """Names of the free log-hyperparameters, in vector order."""
    names = [f"lengthscale[{space.names[i]}]" for i in space.noncategorical_idx]
    names += [f"cat_weight[{space.names[i]}]" for i in space.categorical_idx]
    if spec.scale_mode == ScaleMode.FREE:
        names.append("scale")
        if spec.has_second_scale(len(space.categorical_idx)):
            names.append("scale_b")
    names.append("noise")
    return names


def log_param_vector(spec: KernelSpec, hp: HyperParams) -> np.ndarray:
    parts = [np.log(hp.lengthscales), np.log(hp.cat_weights)]
    if spec.scale_mode == ScaleMode.FREE:
        parts.append([math.log(hp.scale)])
        if spec.has_second_scale(len(hp.cat_weights)):
            parts.append([math.log(hp.scale_b)])
    parts.append([math.log(hp.noise)])
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def _unpack(spec: KernelSpec, space: SearchSpace, z: torch.Tensor) -> Dict[str, torch.Tensor]:
    p, c = len(space.noncategorical_idx), len(space.categorical_idx)
    out = {
        "lengthscales": torch.exp(z[:p]),
        "cat_weights": torch.exp(z[p:p + c]),
    }
    k = p + c
    one = torch.ones((), dtype=DTYPE)
    if spec.scale_mode == ScaleMode.FREE:
        out["scale"] = torch.exp(z[k])
        k += 1
        if spec.has_second_scale(c):
            out["scale_b"] = torch.exp(z[k])
            k += 1
        else:
            out["scale_b"] = one
    else:
        out["scale"] = one
        out["scale_b"] = one
    out["noise"] = torch.exp(z[k])
    return out


def hyperparams_from_log(spec: KernelSpec, space: SearchSpace, z: Sequence[float]) -> HyperParams:
    with torch.no_grad():
        t = _unpack(spec, space, torch.as_tensor(np.asarray(z, dtype=float)))
    return HyperParams(
        lengthscales=t["lengthscales"].numpy(),
        cat_weights=t["cat_weights"].numpy(),
        scale=float(t["scale"]),
        scale_b=float(t["scale_b"]),
        noise=float(t["noise"]),
    )


def _log_bounds(spec: KernelSpec, space: SearchSpace) -> Tuple[np.ndarray, np.ndarray]:
    kinds = ["lengthscale"] * len(space.noncategorical_idx) + ["cat_weight"] * len(space.categorical_idx)
    if spec.scale_mode == ScaleMode.FREE:
        kinds += ["scale"] * (2 if spec.has_second_scale(len(space.categorical_idx)) else 1)
    kinds.append("noise")
    lo = np.array([LOG_BOUNDS[k][0] for k in kinds])
    hi = np.array([LOG_BOUNDS[k][1] for k in kinds])
    return lo, hi


# =============================================================================
# FACTORIZATION AND LIKELIHOOD
# =============================================================================

def _factorize(K: torch.Tensor, noise: torch.Tensor, jitter: float) -> Tuple[torch.Tensor, float]:
    """Cholesky of K + (noise + jitter) I, escalating the jitter on failure."""
    eye = torch.eye(K.shape[0], dtype=K.dtype)
    ladder = [jitter] + [j for j in JITTER_LADDER if j > jitter]
    for level in ladder:
        L, info = torch.linalg.cholesky_ex(K + (noise + level) * eye)
        if int(info) == 0 and bool(torch.isfinite(L).all()):
            if level != jitter:
                logger.warning("Cholesky needed jitter %.0e (requested %.0e)", level, jitter)
            return L, level
    raise GpNumericError(f"covariance not positive definite after jitter {ladder[-1]:.0e}")


def _lml_tensor(
    spec: KernelSpec,
    space: SearchSpace,
    X: torch.Tensor,
    y: torch.Tensor,
    params: Dict[str, torch.Tensor],
    jitter: float,
) -> torch.Tensor:
    K = covariance(spec, space, X, X, params["lengthscales"], params["cat_weights"],
                   params["scale"], params["scale_b"])
    L, _ = _factorize(K, params["noise"], jitter)
    alpha = torch.cholesky_solve(y[:, None], L)[:, 0]
    n = y.shape[0]
    return -0.5 * (y * alpha).sum() - torch.log(torch.diagonal(L)).sum() - 0.5 * n * math.log(2.0 * math.pi)


def log_marginal_likelihood(
    spec: KernelSpec,
    hp: HyperParams,
    data: Dataset,
    space: SearchSpace,
    jitter: float = DEFAULT_JITTER,
) -> float:
    """
    Log marginal likelihood of the standardized targets.

    -1/2 y^T alpha - sum(log diag L) - n/2 log(2 pi)
    """
    params = dict(hp.tensors(), noise=torch.as_tensor(hp.noise, dtype=DTYPE))
    with torch.no_grad():
        value = _lml_tensor(spec, space, torch.as_tensor(data.X), torch.as_tensor(data.y_std), params, jitter)
    return float(value)


def lml_gradient(
    spec: KernelSpec,
    hp: HyperParams,
    data: Dataset,
    space: SearchSpace,
    jitter: float = DEFAULT_JITTER,
) -> Tuple[float, np.ndarray]:
    """LML and its gradient with respect to log_param_vector(spec, hp)."""
    z = torch.tensor(log_param_vector(spec, hp), requires_grad=True)
    value = _lml_tensor(spec, space, torch.as_tensor(data.X), torch.as_tensor(data.y_std),
                        _unpack(spec, space, z), jitter)
    value.backward()
    return float(value), z.grad.numpy().copy()


def _log_prior_tensor(spec: KernelSpec, params: Dict[str, torch.Tensor], ls_prior, sc_prior) -> torch.Tensor:
    total = torch.zeros((), dtype=DTYPE)
    if ls_prior is not None and params["lengthscales"].numel():
        total = total + prior_log_density(ls_prior, params["lengthscales"]).sum()
    if sc_prior is not None:
        total = total + prior_log_density(sc_prior, params["scale"])
        if spec.has_second_scale(params["cat_weights"].numel()):
            total = total + prior_log_density(sc_prior, params["scale_b"])
    return total


# =============================================================================
# MODEL
# =============================================================================

@dataclass
class GpModel:
    """Fitted GP: kernel spec, hyperparameters, data and cached factorization."""
    spec: KernelSpec
    hp: HyperParams
    data: Dataset
    space: SearchSpace
    chol: torch.Tensor
    alpha: torch.Tensor
    jitter: float
    X_train: torch.Tensor

    def kernel_tensors(self) -> Dict[str, torch.Tensor]:
        return self.hp.tensors()

    def prior_variance(self) -> float:
        """Prior variance k(x, x); every kernel here is stationary, so it is input-independent."""
        x = self.X_train[:1]
        with torch.no_grad():
            return float(covariance(self.spec, self.space, x, x, **self.kernel_tensors())[0, 0])

    def posterior_tensors(self, X: torch.Tensor, full_cov: bool = False):
        """Differentiable posterior mean and variance (or covariance) at normalized inputs X (m, D)."""
        kt = self.kernel_tensors()
        Ks = covariance(self.spec, self.space, self.X_train, X, **kt)
        mean = Ks.T @ self.alpha
        v = torch.linalg.solve_triangular(self.chol, Ks, upper=False)
        if full_cov:
            cov = covariance(self.spec, self.space, X, X, **kt) - v.T @ v
            return mean, cov
        kss = covariance(self.spec, self.space, X[:1].detach(), X[:1].detach(), **kt)[0, 0]
        var = (kss - (v * v).sum(0)).clamp_min(0.0)
        return mean, var

    def without_noise(self) -> "GpModel":
        """Same model refactorized with the fitted noise removed from the diagonal (jitter kept)."""
        return build_model(self.spec, replace(self.hp, noise=0.0), self.data, self.space, jitter=self.jitter)

    @property
    def f_best(self) -> float:
        """Best (lowest) standardized observation."""
        return float(np.min(self.data.y_std))


def build_model(
    spec: KernelSpec,
    hp: HyperParams,
    data: Dataset,
    space: SearchSpace,
    jitter: float = DEFAULT_JITTER,
) -> GpModel:
    """Factorize K + (noise + jitter) I for fixed hyperparameters."""
    if data.n < 1:
        raise ValueError("GP needs at least one observation")
    check_compatible(spec, space)
    if spec.scale_mode == ScaleMode.FIXED_ONE:
        hp = replace(hp, scale=1.0, scale_b=1.0)
    X = torch.as_tensor(data.X)
    y = torch.as_tensor(data.y_std)
    with torch.no_grad():
        K = covariance(spec, space, X, X, **hp.tensors())
        L, used = _factorize(K, torch.as_tensor(hp.noise, dtype=DTYPE), jitter)
        alpha = torch.cholesky_solve(y[:, None], L)[:, 0]
    return GpModel(spec=spec, hp=hp, data=data, space=space, chol=L, alpha=alpha, jitter=used, X_train=X)


def posterior(model: GpModel, Xtest: Sequence[Sequence[float]], full_cov: bool = False) -> PosteriorResult:
    """
    Posterior at normalized test inputs.

    Args:
        model: Fitted model
        Xtest: (m, D) normalized points
        full_cov: Also return the full posterior covariance

    Returns:
        PosteriorResult on the standardized scale
    """
    X = torch.as_tensor(np.atleast_2d(np.asarray(Xtest, dtype=float)))
    with torch.no_grad():
        mean, var = model.posterior_tensors(X)
        cov = model.posterior_tensors(X, full_cov=True)[1].numpy() if full_cov else None
    return PosteriorResult(
        mean=mean.numpy(),
        var=var.numpy(),
        cov=cov,
        y_mean=model.data.y_mean,
        y_sd=model.data.y_sd,
    )


# =============================================================================
# MAP FITTING
# =============================================================================

def _random_start(spec: KernelSpec, space: SearchSpace, rng: np.random.Generator, noise_init: float) -> np.ndarray:
    p, c = len(space.noncategorical_idx), len(space.categorical_idx)
    parts = [
        rng.uniform(math.log(0.05), math.log(2.0), size=p),
        rng.uniform(math.log(0.1), math.log(3.0), size=c),
    ]
    if spec.scale_mode == ScaleMode.FREE:
        parts.append(rng.uniform(math.log(0.1), math.log(10.0), size=2 if spec.has_second_scale(c) else 1))
    parts.append([math.log(noise_init)])
    return np.concatenate([np.asarray(x, dtype=float) for x in parts])


def fit_map(
    spec: KernelSpec,
    data: Dataset,
    space: SearchSpace,
    noise_init: float = 1e-3,
    restarts: int = 5,
    steps: int = 200,
    lr: float = 0.05,
    seed: int = 0,
    jitter: float = DEFAULT_JITTER,
) -> GpModel:
    """
    MAP hyperparameters by multi-restart Adam on log-parameters.

    The first restart starts from lengthscale 0.5*sqrt(D), scale 1 and
    noise_init; the others are drawn log-uniformly from a seeded generator.
    Noise is floored at NOISE_FLOOR.

    Raises:
        GpNumericError: every restart failed to factorize
    """
    if data.n < 2:
        raise ValueError(f"MAP fitting needs at least 2 observations, got {data.n}")
    check_compatible(spec, space)
    noise_init = max(noise_init, NOISE_FLOOR)
    ls_prior = lengthscale_prior_for(spec, space)
    sc_prior = scale_prior_for(spec, data.y_std)
    X = torch.as_tensor(data.X)
    y = torch.as_tensor(data.y_std)
    lo, hi = (torch.as_tensor(b) for b in _log_bounds(spec, space))

    def objective(z: torch.Tensor) -> torch.Tensor:
        params = _unpack(spec, space, z)
        return _lml_tensor(spec, space, X, y, params, jitter) + _log_prior_tensor(spec, params, ls_prior, sc_prior)

    rng = np.random.default_rng(seed)
    starts = [log_param_vector(spec, HyperParams.default(space, noise=noise_init))]
    starts += [_random_start(spec, space, rng, noise_init) for _ in range(max(restarts, 1) - 1)]

    best_z, best_value = None, -math.inf
    for k, z0 in enumerate(starts):
        z = torch.tensor(np.clip(z0, lo.numpy(), hi.numpy()), requires_grad=True)
        opt = torch.optim.Adam([z], lr=lr)
        try:
            for _ in range(steps):
                opt.zero_grad()
                loss = -objective(z)
                loss.backward()
                opt.step()
                with torch.no_grad():
                    z.copy_(torch.maximum(torch.minimum(z, hi), lo))
            with torch.no_grad():
                value = float(objective(z))
        except GpNumericError as e:
            logger.warning("MAP restart %d discarded: %s", k, e)
            continue
        if math.isfinite(value) and value > best_value:
            best_z, best_value = z.detach().numpy().copy(), value

    if best_z is None:
        raise GpNumericError(f"all {len(starts)} MAP restarts failed for {spec.name}")
    hp = hyperparams_from_log(spec, space, best_z)
    logger.debug("%s fitted: ls=%s scale=%.4g noise=%.3g map=%.4f",
                 spec.name, np.round(hp.lengthscales, 4), hp.scale, hp.noise, best_value)
    return build_model(spec, hp, data, space, jitter=jitter)
