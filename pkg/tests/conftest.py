"""
Pytest configuration and fixtures for the mixed-variable BO benchmarks.

This file contains shared fixtures used across all test modules.
Fixtures follow the pattern: factory functions returning fresh objects.
"""

import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from benchmarks import BsVariant, load_dust
from gp import Dataset, build_model
from harness import RunConfig
from kernels import HyperParams, get_preset
from search_space import ParameterSpec, SearchSpace, normalize


# =============================================================================
# PATH FIXTURES
# =============================================================================

@pytest.fixture
def project_root() -> Path:
    """Return the project root directory."""
    return Path(__file__).parent.parent


@pytest.fixture
def data_dir(project_root: Path) -> Path:
    """Return the directory holding direction numbers and landscape tables."""
    return project_root / "data"


@pytest.fixture
def tmp_output_dir(tmp_path: Path) -> Path:
    """Empty directory for traces and truth caches."""
    out = tmp_path / "results"
    out.mkdir()
    return out


# =============================================================================
# CONFIG FIXTURES
# =============================================================================

@pytest.fixture
def sample_bs_config(project_root: Path) -> Dict[str, Any]:
    """Load the 2D continuous/integer example configuration."""
    with open(project_root / "example_bs2d_ci_config.json", "r") as f:
        return json.load(f)


@pytest.fixture
def run_config_factory(tmp_output_dir: Path) -> Callable[..., RunConfig]:
    """
    Factory for small, fast run configs.

    Defaults to 2D BS "ci", two seeds, a short budget and reduced optimizer
    effort; any RunConfig field can be overridden.
    """
    def _create(**overrides) -> RunConfig:
        base = {
            "benchmark": "bs",
            "dims": 2,
            "pattern": "ci",
            "preset": "ei_BOSS_on_gam_Mat52",
            "seeds": [0, 1],
            "iter_budget": 3,
            "gp_restarts": 1,
            "gp_steps": 20,
            "pr_restarts": 4,
            "pr_steps": 15,
            "n_samples": 8,
            "output_dir": str(tmp_output_dir),
        }
        if overrides.get("benchmark", "bs") != "bs":
            base.pop("dims")
            base.pop("pattern")
        base.update(overrides)
        return RunConfig(**base)
    return _create


# =============================================================================
# SPACE FIXTURES
# =============================================================================

@pytest.fixture
def bs_discrete_levels() -> Sequence[float]:
    return (0, 1, 3, 4, 7, 9)


@pytest.fixture
def mixed_space() -> SearchSpace:
    """One dimension of every kind."""
    return SearchSpace((
        ParameterSpec.continuous("x", 0.0, 10.0),
        ParameterSpec.integer("n", 0, 4),
        ParameterSpec.discrete("d", (0, 1, 3, 4, 7, 9)),
        ParameterSpec.categorical("c", ("red", "green", "blue")),
    ))


@pytest.fixture
def ci_space() -> SearchSpace:
    return BsVariant(2, "ci").space


@pytest.fixture
def ii_space() -> SearchSpace:
    return BsVariant(2, "ii").space


@pytest.fixture
def dd_space() -> SearchSpace:
    return BsVariant(2, "dd").space


@pytest.fixture
def dust1():
    return load_dust("dust1")


@pytest.fixture
def dust2():
    return load_dust("dust2")


# =============================================================================
# MODEL FIXTURES
# =============================================================================

def random_candidate(space: SearchSpace, rng: np.random.Generator):
    """Uniformly drawn valid raw candidate."""
    values = []
    for spec in space.params:
        if spec.kind.value == "continuous":
            values.append(float(rng.uniform(spec.low, spec.high)))
        elif spec.is_ordinal:
            values.append(float(spec.levels[rng.integers(spec.n_levels)]))
        else:
            values.append(float(rng.integers(spec.n_levels)))
    return tuple(values)


@pytest.fixture
def dataset_factory() -> Callable[..., Dataset]:
    """
    Factory for datasets on a space.

    Draws n valid candidates with a seeded generator and evaluates a smooth
    test function unless explicit y values are given.
    """
    def _create(space: SearchSpace, n: int = 8, seed: int = 0, y: Optional[Sequence[float]] = None) -> Dataset:
        rng = np.random.default_rng(seed)
        X = np.array([normalize(space, random_candidate(space, rng)) for _ in range(n)])
        if y is None:
            y = np.sin(3.0 * X.sum(axis=1)) + 0.1 * rng.standard_normal(n)
        return Dataset.from_observations(X, y)
    return _create


@pytest.fixture
def model_factory(dataset_factory) -> Callable[..., Any]:
    """
    Factory for GP models with fixed (unfitted) hyperparameters.

    Uses the preset's kernel and HyperParams.default unless hp is given.
    """
    def _create(space: SearchSpace, preset: str = "BOSS_off_Mat52", n: int = 8, seed: int = 0,
                hp: Optional[HyperParams] = None, noise: float = 1e-3, jitter: float = 1e-6, data=None):
        data = data if data is not None else dataset_factory(space, n=n, seed=seed)
        hp = hp if hp is not None else HyperParams.default(space, noise=noise)
        return build_model(get_preset(preset), hp, data, space, jitter=jitter)
    return _create
