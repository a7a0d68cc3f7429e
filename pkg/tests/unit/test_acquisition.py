"""
Unit tests for acquisition module.

Tests EI and LCB closed forms, the already-sampled penalty, max-variance
proposals, the mAF controller and the proposal path for both optimizers.
"""

import math

import numpy as np
import pytest
import sys
import torch
from pathlib import Path

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from acquisition import (
    FALLBACK_LABEL,
    AcquisitionFunction,
    AcquisitionSpec,
    AcquisitionSpecError,
    AfKind,
    MafController,
    Proposal,
    apply_penalty,
    expected_improvement,
    is_duplicate,
    lower_confidence_bound,
    maf_step,
    max_variance,
    optimize_acquisition_kr,
    propose,
)
from gp import Dataset, build_model, posterior
from kernels import HyperParams, get_preset
from reparam import ReparamSettings
from search_space import ParameterSpec, SearchSpace, denormalize, enumerate_support, normalize


def _proposal(distance, exploring=False):
    return Proposal(candidate=(0.0,), af_value=0.0, af_kind="EI",
                    used_exploration=exploring, min_distance_to_data=distance)


def _fixed_model(space, candidates, y, preset="BOSS_off_Mat52", noise=1e-3, lengthscale=0.4):
    data = Dataset.from_observations([normalize(space, c) for c in candidates], y)
    hp = HyperParams(
        lengthscales=np.full(len(space.noncategorical_idx), lengthscale),
        cat_weights=np.ones(len(space.categorical_idx)),
        scale=1.0,
        noise=noise,
    )
    return build_model(get_preset(preset), hp, data, space)


def _binary_square():
    return SearchSpace((ParameterSpec.binary("a"), ParameterSpec.binary("b")))


class TestClosedForms:
    """Tests for EI and LCB."""

    @pytest.mark.unit
    @pytest.mark.acquisition
    @pytest.mark.smoke
    def test_ei_at_incumbent(self):
        """mu = f_best and sigma = 1 gives phi(0)."""
        assert expected_improvement(0.3, 1.0, 0.3) == pytest.approx(0.39894, abs=1e-5)

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_ei_zero_sigma(self):
        """Zero sigma gives max(f_best - mu, 0)."""
        assert expected_improvement(1.0, 0.0, 0.0) == 0.0
        assert expected_improvement(-1.0, 0.0, 0.0) == 1.0

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_ei_non_negative_and_decreasing(self):
        """EI is non-negative and falls to 0 as mu grows."""
        mu = np.linspace(-3, 30, 50)
        ei = expected_improvement(mu, np.full_like(mu, 0.8), 0.0)
        assert np.all(ei >= 0)
        assert np.all(np.diff(ei) <= 0)
        assert ei[-1] < 1e-12

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_ei_tensor_matches_numpy(self):
        """The tensor path gives the numpy values and stays differentiable at sigma = 0."""
        mu = torch.tensor([-0.5, 0.2, 1.0], dtype=torch.float64, requires_grad=True)
        sigma = torch.tensor([0.7, 0.0, 1.3], dtype=torch.float64)
        ei = expected_improvement(mu, sigma, 0.1)
        expected = expected_improvement(mu.detach().numpy(), sigma.numpy(), 0.1)
        assert ei.detach().numpy().tolist() == pytest.approx(expected.tolist())
        ei.sum().backward()
        assert torch.isfinite(mu.grad).all()

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_lcb(self):
        """LCB is mu - w sigma."""
        assert lower_confidence_bound(1.5, 0.0) == 1.5
        assert lower_confidence_bound(0.0, 1.0, 2.0) == -2.0

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_lcb_weight_positive(self):
        """The exploration weight must be positive."""
        with pytest.raises(AcquisitionSpecError):
            lower_confidence_bound(0.0, 1.0, 0.0)


class TestPenalty:
    """Tests for the already-sampled penalty."""

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_unsampled_unchanged(self):
        """The mean at an unsampled point is untouched."""
        assert apply_penalty(-1.3, [0.5, 0.5], [[0.0, 0.0]]) == -1.3

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_sampled_raised(self):
        """The mean at a sampled point is raised by the penalty."""
        assert apply_penalty(-1.3, [0.5, 0.5], [[0.0, 0.0], [0.5, 0.5]]) == pytest.approx(999998.7)

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_small_penalty_rejected(self):
        """Penalties too small to dominate the standardized mean are rejected."""
        with pytest.raises(AcquisitionSpecError):
            AcquisitionSpec(penalty_value=10.0)

    @pytest.mark.unit
    @pytest.mark.acquisition
    @pytest.mark.parametrize("kind", [AfKind.EI, AfKind.LCB])
    def test_argmax_is_unsampled_point(self, kind):
        """With all but one point sampled, the penalized AF prefers the remaining one."""
        space = _binary_square()
        sampled = [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        model = _fixed_model(space, sampled, [0.1, -0.4, 0.3], noise=0.2)
        af = AcquisitionFunction(model, AcquisitionSpec(kind=kind))
        support = enumerate_support(space)
        values = af(torch.as_tensor(np.array([normalize(space, c) for c in support]))).detach().numpy()
        assert support[int(np.argmax(values))] == (1.0, 0.0)

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_is_duplicate(self, ci_space):
        """Exact repeats are duplicates; nearby points are not."""
        sampled = [(1.5, 4.0), (-2.0, 7.0)]
        assert is_duplicate(ci_space, (1.5, 4.0), sampled)
        assert not is_duplicate(ci_space, (1.5001, 4.0), sampled)
        assert not is_duplicate(ci_space, (1.5, 4.0), [])


class TestNoiseSubtraction:
    """Tests for the noise-subtracted evaluator."""

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_variance_collapses_at_data(self):
        """Without the fitted noise, variance at a sampled point is near zero."""
        space = _binary_square()
        model = _fixed_model(space, [(0.0, 0.0), (1.0, 1.0)], [0.0, 1.0], noise=0.3)
        X = torch.as_tensor(np.array([normalize(space, (0.0, 0.0))]))
        noisy = AcquisitionFunction(model, AcquisitionSpec(penalty=False), AfKind.MAX_VARIANCE)(X)
        clean = AcquisitionFunction(model, AcquisitionSpec(penalty=False, noise_subtraction=True),
                                    AfKind.MAX_VARIANCE)(X)
        assert float(clean[0]) < 1e-4 < float(noisy[0])


class TestMaxVariance:
    """Tests for max-variance proposals."""

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_single_point_goes_to_boundary(self):
        """With one observation in the middle, variance peaks at an end of the line."""
        space = SearchSpace((ParameterSpec.continuous("x", 0, 1),))
        model = _fixed_model(space, [(0.5,)], [1.0])
        candidate = max_variance(model, space, ReparamSettings(restarts=6, steps=100))
        assert min(candidate[0], 1.0 - candidate[0]) < 1e-6

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_matches_exhaustive_variance(self):
        """On an enumerable space the proposal attains the largest posterior variance."""
        space = SearchSpace((ParameterSpec.integer("n", 0, 3), ParameterSpec.binary("b")))
        model = _fixed_model(space, [(0.0, 0.0), (2.0, 1.0), (3.0, 0.0)], [0.3, -0.2, 0.9])
        support = enumerate_support(space)
        variances = posterior(model, np.array([normalize(space, c) for c in support])).var
        candidate = max_variance(model, space, ReparamSettings(restarts=12, steps=80))
        chosen = posterior(model, [normalize(space, candidate)]).var[0]
        assert chosen == pytest.approx(variances.max(), abs=1e-9)


class TestMaf:
    """Tests for the exploration trigger."""

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_far_proposal_keeps_base(self):
        """A proposal beyond the threshold keeps the base AF."""
        assert maf_step(AfKind.EI, _proposal(0.2), 0.1) == AfKind.EI

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_near_duplicate_triggers_exploration(self):
        """A proposal within the threshold switches the next iteration to MaxVariance."""
        assert maf_step(AfKind.LCB, _proposal(0.05), 0.1) == AfKind.MAX_VARIANCE

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_exploration_does_not_chain(self):
        """An exploration step never triggers another one."""
        assert maf_step(AfKind.EI, _proposal(0.0, exploring=True), 0.1) == AfKind.EI

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_disabled(self):
        """Without a threshold the base AF is always used."""
        assert maf_step(AfKind.EI, _proposal(0.0), None) == AfKind.EI

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_controller_counts_explorations(self):
        """The controller remembers the previous proposal and counts explorations."""
        controller = MafController(AfKind.EI, 0.1)
        assert controller.next_kind() == AfKind.EI
        controller.record(_proposal(0.01))
        assert controller.next_kind() == AfKind.MAX_VARIANCE
        controller.record(_proposal(0.01, exploring=True))
        assert controller.next_kind() == AfKind.EI
        assert controller.explorations == 1


class TestPropose:
    """Tests for the proposal path."""

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_penalty_avoids_duplicates(self):
        """With the penalty on, the proposal is the last unsampled configuration."""
        space = _binary_square()
        sampled = [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        model = _fixed_model(space, sampled, [-1.0, 0.5, 0.4], noise=0.2)
        for kind in (AfKind.EI, AfKind.LCB):
            proposal = propose(model, space, AcquisitionSpec(kind=kind), kind, sampled,
                               ReparamSettings(restarts=4, steps=20))
            assert proposal.candidate == (1.0, 0.0)
            assert proposal.min_distance_to_data == pytest.approx(1.0)
            assert proposal.af_kind == kind.value
            assert not proposal.used_exploration

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_fallback_label(self, ci_space, model_factory):
        """A custom label is written instead of the AF name."""
        model = model_factory(ci_space, n=5)
        sampled = [denormalize(ci_space, p) for p in model.data.X]
        proposal = propose(model, ci_space, AcquisitionSpec(), AfKind.MAX_VARIANCE, sampled,
                           ReparamSettings(restarts=4, steps=20), af_label=FALLBACK_LABEL)
        assert proposal.af_kind == FALLBACK_LABEL
        assert proposal.used_exploration

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_kernel_rounding_optimizer(self, ci_space):
        """The enumerate-and-polish optimizer returns a valid candidate near the AF peak."""
        def af(X):
            return -(X[:, 0] - 0.25) ** 2 - (X[:, 1] - 0.7) ** 2

        candidate, value = optimize_acquisition_kr(af, ci_space, seed=0)
        assert candidate[1] == 7.0
        assert candidate[0] == pytest.approx(-2.5, abs=1e-3)
        assert value == pytest.approx(0.0, abs=1e-6)

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_proposal_is_deterministic(self, ci_space, model_factory):
        """Equal seeds give equal proposals."""
        model = model_factory(ci_space, n=6, seed=2)
        sampled = [denormalize(ci_space, p) for p in model.data.X]
        settings = ReparamSettings(restarts=4, steps=30)
        a = propose(model, ci_space, AcquisitionSpec(), AfKind.EI, sampled, settings, seed=9)
        b = propose(model, ci_space, AcquisitionSpec(), AfKind.EI, sampled, settings, seed=9)
        assert a == b
        assert math.isfinite(a.af_value)

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_resample_fallback_off_by_default(self):
        """Duplicates are only ever avoided through the penalty unless the swap is requested."""
        assert AcquisitionSpec().resample_fallback is False

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_penalty_alone_moves_proposal(self):
        """An exploitative LCB re-proposes the incumbent without the penalty and leaves it with the penalty."""
        space = _binary_square()
        sampled = [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        model = _fixed_model(space, sampled, [-5.0, 1.0, 1.0], noise=1e-6)
        settings = ReparamSettings(restarts=4, steps=20)

        plain = AcquisitionSpec(kind=AfKind.LCB, lcb_weight=0.1, penalty=False)
        repeated = propose(model, space, plain, AfKind.LCB, sampled, settings)
        assert repeated.candidate == (0.0, 0.0)
        assert repeated.min_distance_to_data == pytest.approx(0.0)

        penalized = AcquisitionSpec(kind=AfKind.LCB, lcb_weight=0.1, penalty=True)
        moved = propose(model, space, penalized, AfKind.LCB, sampled, settings)
        assert moved.candidate == (1.0, 0.0)
        assert not is_duplicate(space, moved.candidate, sampled)

    @pytest.mark.unit
    @pytest.mark.acquisition
    def test_resample_fallback_swaps_duplicate(self):
        """With the swap requested, a duplicate is exchanged for the best unsampled candidate."""
        space = _binary_square()
        sampled = [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        model = _fixed_model(space, sampled, [-5.0, 1.0, 1.0], noise=1e-6)
        acq = AcquisitionSpec(kind=AfKind.LCB, lcb_weight=0.1, penalty=False, resample_fallback=True)
        proposal = propose(model, space, acq, AfKind.LCB, sampled, ReparamSettings(restarts=4, steps=20))
        assert proposal.candidate == (1.0, 0.0)
