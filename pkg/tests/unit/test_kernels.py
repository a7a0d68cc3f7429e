"""
Unit tests for kernels module.

Tests base kernels, the categorical kernel, composed covariances for the
named presets, and the hyperparameter priors.
"""

import math
from dataclasses import replace

import numpy as np
import pytest
import sys
import torch
from pathlib import Path
from scipy import stats

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from benchmarks import BsVariant
from kernels import (
    KERNEL_PRESETS,
    BaseKernel,
    Composition,
    HyperParams,
    KernelParameterError,
    PriorFamily,
    PriorFitError,
    PriorSpec,
    Rounding,
    check_compatible,
    covariance,
    gamma_from_quantiles,
    gamma_yrange_prior,
    get_preset,
    gram,
    kernel_1d,
    kernel_categorical,
    kernel_eval,
    lognormal_dim_prior,
    prior_log_density,
)
from search_space import ParameterSpec, SearchSpace


def _unit_hp(space, scale=1.0, lengthscale=0.7):
    return HyperParams(
        lengthscales=np.full(len(space.noncategorical_idx), lengthscale),
        cat_weights=np.ones(len(space.categorical_idx)),
        scale=scale,
        noise=0.0,
    )


class TestBaseKernels:
    """Tests for one-dimensional kernels."""

    @pytest.mark.unit
    @pytest.mark.kernel
    @pytest.mark.smoke
    @pytest.mark.parametrize("base", list(BaseKernel))
    @pytest.mark.parametrize("lengthscale", [0.1, 1.0, 5.0])
    def test_unit_diagonal(self, base, lengthscale):
        """Every base kernel is 1 at zero distance."""
        assert kernel_1d(base, lengthscale, 0.0) == pytest.approx(1.0)

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_matern52_closed_form(self):
        """Matern-5/2 at r = l = 1 is (1 + sqrt5 + 5/3) exp(-sqrt5)."""
        assert kernel_1d(BaseKernel.MATERN52, 1.0, 1.0) == pytest.approx(0.52399, abs=1e-5)

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_rbf_closed_form(self):
        """RBF at r = l = 1 is exp(-1/2)."""
        assert kernel_1d(BaseKernel.RBF, 1.0, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-5)

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_decreasing_in_distance(self):
        """Kernel values fall as points move apart."""
        values = kernel_1d(BaseKernel.MATERN52, 0.5, np.linspace(0.0, 3.0, 13))
        assert np.all(np.diff(values) < 0)

    @pytest.mark.unit
    @pytest.mark.kernel
    @pytest.mark.parametrize("lengthscale", [0.0, -1.0])
    def test_non_positive_lengthscale(self, lengthscale):
        """Non-positive lengthscales are rejected."""
        with pytest.raises(KernelParameterError):
            kernel_1d(BaseKernel.RBF, lengthscale, 0.5)


class TestCategoricalKernel:
    """Tests for the Hamming kernel."""

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_identical(self):
        """Equal categories give 1."""
        assert kernel_categorical([1.0, 2.0], [0, 2], [0, 2]) == 1.0

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_one_mismatch(self):
        """One mismatch with weight 1 gives exp(-1)."""
        assert kernel_categorical([1.0], [0], [1]) == pytest.approx(0.36788, abs=1e-5)

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_large_weights_vanish(self):
        """All mismatched with huge weights tends to 0."""
        assert kernel_categorical([1e3, 1e3], [0, 0], [1, 1]) < 1e-300

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_shape_mismatch(self):
        """Weights and categories must have the same length."""
        with pytest.raises(KernelParameterError):
            kernel_categorical([1.0], [0, 1], [0, 1])


class TestPresets:
    """Tests for the named kernel presets."""

    @pytest.mark.unit
    @pytest.mark.kernel
    @pytest.mark.smoke
    def test_nine_presets(self):
        """Nine presets are defined, each describing its formulation."""
        assert len(KERNEL_PRESETS) == 9
        for name, spec in KERNEL_PRESETS.items():
            assert spec.name == name
            assert spec.description

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_unknown_preset(self):
        """Unknown names raise a parameter error."""
        with pytest.raises(KernelParameterError):
            get_preset("BOSS_maybe")

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_kr_rejects_discrete(self, dd_space, ci_space):
        """Kernel rounding needs integer dims and tolerates no discrete dims."""
        kr = get_preset("KR_on_gam_Mat52")
        assert kr.rounding == Rounding.KR
        with pytest.raises(KernelParameterError):
            check_compatible(kr, dd_space)
        check_compatible(kr, ci_space)

    @pytest.mark.unit
    @pytest.mark.kernel
    @pytest.mark.parametrize("name", sorted(KERNEL_PRESETS))
    def test_gram_symmetric_psd(self, name, mixed_space, dataset_factory):
        """Every preset yields a symmetric positive semi-definite Gram matrix."""
        spec = get_preset(name)
        space = mixed_space if spec.rounding != Rounding.KR else BsVariant(3, "ci").space
        points = dataset_factory(space, n=10, seed=3).X
        K = gram(spec, _unit_hp(space), space, points)
        assert np.allclose(K, K.T, atol=1e-12)
        assert np.linalg.eigvalsh(K).min() > -1e-9


class TestCompositions:
    """Tests for composed covariances."""

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_product_diagonal_is_scale(self, mixed_space):
        """k(p, p) equals the scale under the product composition."""
        spec = get_preset("BOSS_off_Mat52")
        p = [0.3, 0.5, 1 / 3, 2.0]
        assert kernel_eval(spec, _unit_hp(mixed_space, scale=2.7), mixed_space, p, p) == pytest.approx(2.7)

    @pytest.mark.unit
    @pytest.mark.kernel
    @pytest.mark.parametrize("dims", [2, 3, 4, 5, 6])
    def test_sum_diagonal_is_d_times_scale(self, dims):
        """k_sum(x, x) equals D times the scale."""
        space = SearchSpace(tuple(ParameterSpec.continuous(f"x{k}", 0, 1) for k in range(dims)))
        spec = get_preset("BOSS_off_Mat52_sum")
        assert spec.composition == Composition.SUM
        p = np.linspace(0.1, 0.9, dims)
        assert kernel_eval(spec, _unit_hp(space, scale=1.3), space, p, p) == pytest.approx(dims * 1.3, rel=1e-14)

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_single_point_gram(self, ci_space):
        """A single point gives the 1x1 matrix [scale]."""
        K = gram(get_preset("BOSS_on_gam_Mat52"), _unit_hp(ci_space, scale=0.4), ci_space, [[0.2, 0.5]])
        assert K.shape == (1, 1)
        assert K[0, 0] == pytest.approx(0.4)

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_kr_piecewise_constant(self, ci_space):
        """Under kernel rounding, inputs in the same integer cell give identical kernel values."""
        spec = get_preset("KR_on_gam_Mat52")
        hp = _unit_hp(ci_space, lengthscale=0.3)
        ref = [0.1, 0.8]
        a = kernel_eval(spec, hp, ci_space, [0.4, 0.31], ref)
        b = kernel_eval(spec, hp, ci_space, [0.4, 0.27], ref)
        assert a == b

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_meta_needs_second_scale(self, mixed_space):
        """The meta composition cannot be evaluated without scale_b."""
        spec = get_preset("meta_off")
        X = torch.zeros(1, mixed_space.dim, dtype=torch.float64)
        hp = _unit_hp(mixed_space).tensors()
        with pytest.raises(KernelParameterError):
            covariance(spec, mixed_space, X, X, hp["lengthscales"], hp["cat_weights"], hp["scale"], None)

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_meta_diagonal(self, mixed_space):
        """Meta diagonal is scale_a + 2 * scale_b (both blocks unit-diagonal)."""
        spec = get_preset("meta_off")
        hp = HyperParams(np.full(3, 0.5), np.ones(1), scale=0.5, noise=0.0, scale_b=0.25)
        p = [0.2, 0.5, 1.0, 1.0]
        assert kernel_eval(spec, hp, mixed_space, p, p) == pytest.approx(0.5 + 2 * 0.25)

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_meta_without_categoricals_is_ard(self, ci_space):
        """With no categorical dims the meta kernel is scale_a * k_ard and ignores scale_b."""
        meta = get_preset("meta_off")
        ard = replace(meta, composition=Composition.ARD)
        points = np.array([[0.1, 0.2], [0.5, 0.9], [0.8, 0.4]])
        hp = HyperParams(np.array([0.4, 0.7]), np.ones(0), scale=0.7, noise=0.0, scale_b=0.4)
        np.testing.assert_allclose(gram(meta, hp, ci_space, points), gram(ard, hp, ci_space, points), atol=1e-14)
        assert kernel_eval(meta, replace(hp, scale_b=3.0), ci_space, points[0], points[1]) == \
            pytest.approx(kernel_eval(meta, hp, ci_space, points[0], points[1]))
        assert not meta.has_second_scale(len(ci_space.categorical_idx))
        assert meta.has_second_scale(1)


class TestHyperParams:
    """Tests for the hyperparameter container."""

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_default_lengthscale(self, mixed_space):
        """Default lengthscales are 0.5 * sqrt(D)."""
        hp = HyperParams.default(mixed_space)
        assert hp.lengthscales.tolist() == pytest.approx([1.0, 1.0, 1.0])
        assert hp.cat_weights.tolist() == [1.0]

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_rejects_non_positive(self):
        """Zero lengthscales or scales and negative noise are parameter errors."""
        with pytest.raises(KernelParameterError):
            HyperParams([0.0], [], scale=1.0, noise=0.0)
        with pytest.raises(KernelParameterError):
            HyperParams([1.0], [], scale=0.0, noise=0.0)
        with pytest.raises(KernelParameterError):
            HyperParams([1.0], [], scale=1.0, noise=-1e-3)


class TestPriors:
    """Tests for prior construction and densities."""

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_gamma_quantiles_match(self):
        """The fitted Gamma puts 5% of its mass below 0.05 and 50% below 0.5."""
        prior = gamma_from_quantiles(0.05, 0.5, 0.05, 0.5)
        assert prior.family == PriorFamily.GAMMA
        assert stats.gamma.cdf(0.05, prior.a, scale=1 / prior.b) == pytest.approx(0.05, abs=1e-8)
        assert stats.gamma.cdf(0.5, prior.a, scale=1 / prior.b) == pytest.approx(0.5, abs=1e-8)
        assert prior.median == pytest.approx(0.5, abs=1e-8)

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_gamma_quantiles_no_solution(self):
        """An impossible quantile pair inside the bracket is a fit error."""
        with pytest.raises(PriorFitError):
            gamma_from_quantiles(0.49, 0.5, 0.05, 0.5, bracket=(1.0, 2.0))

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_gamma_quantiles_order(self):
        """Quantiles must be increasing."""
        with pytest.raises(KernelParameterError):
            gamma_from_quantiles(0.5, 0.05)

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_lognormal_density(self):
        """LogNormal(0, 1) at 1 has log density -log(sqrt(2 pi))."""
        prior = PriorSpec(PriorFamily.LOGNORMAL, 0.0, 1.0)
        assert prior_log_density(prior, 1.0) == pytest.approx(-0.91894, abs=1e-5)

    @pytest.mark.unit
    @pytest.mark.kernel
    @pytest.mark.parametrize("x", [0.1, 1.0, 4.5])
    def test_gamma_one_one_is_exponential(self, x):
        """Gamma(1, 1) has log density -x."""
        prior = PriorSpec(PriorFamily.GAMMA, 1.0, 1.0)
        assert prior_log_density(prior, x) == pytest.approx(-x, abs=1e-12)

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_density_domain(self):
        """Non-positive arguments are rejected."""
        with pytest.raises(KernelParameterError):
            prior_log_density(PriorSpec(PriorFamily.GAMMA, 2.0, 1.0), 0.0)

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_lognormal_dim_median(self):
        """The dimension-scaled prior has median exp(sqrt2) * sqrt(D)."""
        assert lognormal_dim_prior(4).median == pytest.approx(math.exp(math.sqrt(2)) * 2.0)

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_yrange_prior(self):
        """Scale prior is Gamma(2, (1 / (2 * range))^2)."""
        prior = gamma_yrange_prior([-1.0, 0.0, 1.0])
        assert (prior.a, prior.b) == pytest.approx((2.0, 1 / 16))

    @pytest.mark.unit
    @pytest.mark.kernel
    def test_tensor_density_matches_float(self):
        """Tensor input gives the same density as float input."""
        prior = gamma_from_quantiles()
        t = prior_log_density(prior, torch.tensor([0.3], dtype=torch.float64))
        assert float(t[0]) == pytest.approx(prior_log_density(prior, 0.3))
