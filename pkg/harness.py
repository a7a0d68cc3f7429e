"""
Benchmark Harness.

Runs Bayesian optimization over the benchmark suite and scores the results:
- RunConfig: validated run settings (pydantic)
- run_bo: seeded BO loop per seed, fanned out over worker threads
- check_convergence / composite_score / rank_models: tolerance-based scoring
- trace and truth persistence for the CLI

Iteration numbering: every initial Sobol row has iter 0, BO acquisitions are
numbered 1..iter_budget. A run converged at iter 0 was solved by its initial
design.
"""

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from acquisition import FALLBACK_LABEL, AcquisitionSpec, AfKind, MafController, propose
from benchmarks import (
    Benchmark,
    BsVariant,
    Optimum,
    benchmark_from_id,
    get_benchmark,
    initial_design,
    sobol_points,
)
from gp import Dataset, GpNumericError, build_model, fit_map
from kernels import KERNEL_PRESETS, HyperParams, Rounding, check_compatible, get_preset
from reparam import ReparamNumericError, ReparamSettings
from search_space import Candidate, ParamKind, SearchSpace, denormalize, normalize
from tolerances import get_budget, get_maf_threshold, get_tolerance


logger = logging.getLogger(__name__)

SOBOL_BASELINE = "SOBOL_off"
AF_PREFIXES = {"ei": AfKind.EI, "lcb": AfKind.LCB}
FALLBACK_NOISE = 1e-2
SEED_STRIDE = 100_003
TRUTH_FILE = "truth.json"


class HarnessError(ValueError):
    """Invalid harness input (unknown model, mismatched tables, missing traces)."""


class RunNumericError(ArithmeticError):
    """A run could not recover from a surrogate failure; partial traces are attached."""

    def __init__(self, message: str, traces: Optional[List["RunTrace"]] = None):
        super().__init__(message)
        self.traces = traces or []


def model_names() -> List[str]:
    """Every runnable model: the Sobol baseline plus ei_/lcb_ x each kernel preset."""
    return [SOBOL_BASELINE] + [f"{af}_{kernel}" for af in AF_PREFIXES for kernel in KERNEL_PRESETS]


def parse_model(name: str) -> Tuple[Optional[AfKind], Optional[str]]:
    """(AF kind, kernel preset) for a model name; (None, None) for the Sobol baseline."""
    if name == SOBOL_BASELINE:
        return None, None
    prefix, _, kernel = name.partition("_")
    if prefix not in AF_PREFIXES or kernel not in KERNEL_PRESETS:
        raise HarnessError(f"Unknown model preset '{name}'. Available: {model_names()}")
    return AF_PREFIXES[prefix], kernel


# =============================================================================
# CONFIGURATION
# =============================================================================

class RunConfig(BaseModel):
    """Settings for one benchmark x model sweep over seeds."""

    model_config = ConfigDict(extra="forbid")

    benchmark: Literal["bs", "dust1", "dust2"] = Field(description="Benchmark family")
    dims: Optional[int] = Field(default=None, ge=2, le=6, description="BS dimensionality")
    pattern: Optional[str] = Field(default=None, description="BS kind mix: ci, id, ii, dd or e.g. 'ccii'")

    preset: str = Field(default="ei_BOSS_on_gam_Mat52", description="Model name: <af>_<kernel> or SOBOL_off")
    af: Optional[Literal["ei", "lcb"]] = Field(default=None, description="Explicit AF, used with kernel")
    kernel: Optional[str] = Field(default=None, description="Explicit kernel preset, used with af")

    seeds: List[int] = Field(default_factory=lambda: list(range(10)), description="Sobol initialisation seeds")
    init_points: Optional[int] = Field(default=None, ge=1, description="Initial Sobol points")
    iter_budget: Optional[int] = Field(default=None, ge=0, description="BO acquisitions per seed")

    penalty: bool = Field(default=True, description="Penalize already-sampled points")
    penalty_value: float = Field(default=1e6, ge=1e4, description="Added to the standardized mean")
    noise_subtraction: bool = Field(default=False, description="Evaluate the AF without fitted noise")
    maf_threshold: Optional[Union[float, Literal["auto"]]] = Field(
        default=None, description="Near-duplicate distance triggering one exploration step"
    )
    maf_distance_unit: Literal["normalized", "raw"] = "normalized"
    resample_fallback: bool = Field(
        default=False, description="Swap a sampled duplicate for the best unsampled candidate"
    )
    lcb_weight: float = Field(default=2.0, gt=0)

    noise_init: float = Field(default=1e-3, gt=0, description="Initial GP noise variance")
    gp_restarts: int = Field(default=5, ge=1)
    gp_steps: int = Field(default=200, ge=0)
    gp_lr: float = Field(default=0.05, gt=0)

    tau: float = Field(default=0.1, gt=0, description="Reparameterization temperature")
    categorical_temperature: Literal["divide", "multiply"] = "divide"
    pr_restarts: int = Field(default=20, ge=1)
    pr_steps: int = Field(default=100, ge=0)
    pr_lr: float = Field(default=0.025, gt=0)
    n_samples: int = Field(default=32, ge=1)
    mc_samples: int = Field(default=128, ge=1)
    enumeration_cap: int = Field(default=1024, ge=1)

    objective_noise_std: float = Field(default=0.0, ge=0, description="Additive Gaussian noise on y")
    record_timing: bool = Field(default=False, description="Write wall time per row (breaks byte-identity)")
    workers: int = Field(default=1, ge=1)
    output_dir: str = "results"

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, v):
        if not v:
            raise ValueError("seeds must not be empty")
        if any(s < 0 for s in v):
            raise ValueError(f"seeds must be non-negative, got {v}")
        if len(set(v)) != len(v):
            raise ValueError(f"seeds must be unique, got {v}")
        return sorted(v)

    @model_validator(mode="after")
    def resolve(self):
        if (self.af is None) != (self.kernel is None):
            raise ValueError("af and kernel must be given together")
        if self.af is not None:
            self.preset = f"{self.af}_{self.kernel}"
        parse_model(self.preset)

        if self.benchmark == "bs":
            if self.dims is None or self.pattern is None:
                raise ValueError("bs benchmarks need dims and pattern")
            BsVariant.from_pattern(self.dims, self.pattern)
        elif self.dims is not None or self.pattern is not None:
            raise ValueError(f"dims/pattern only apply to bs, not {self.benchmark}")

        _, kernel = parse_model(self.preset)
        if kernel is not None:
            check_compatible(get_preset(kernel), self.space)

        if self.maf_threshold == "auto":
            if self.benchmark == "bs":
                raise ValueError("maf_threshold 'auto' is only defined for dust1 and dust2")
            self.maf_threshold = get_maf_threshold(self.benchmark)
        elif self.maf_threshold is not None and not self.maf_threshold > 0:
            raise ValueError(f"maf_threshold must be positive, got {self.maf_threshold}")
        return self

    # Derived views
    def get_benchmark(self) -> Benchmark:
        return get_benchmark(self.benchmark, self.dims, self.pattern)

    @property
    def space(self) -> SearchSpace:
        return self.get_benchmark().space

    @property
    def benchmark_id(self) -> str:
        return self.get_benchmark().benchmark_id

    @property
    def is_baseline(self) -> bool:
        return self.preset == SOBOL_BASELINE

    def budget(self) -> Tuple[int, int]:
        default_init, default_iter = get_budget(self.benchmark, self.dims or 2)
        return (self.init_points if self.init_points is not None else default_init,
                self.iter_budget if self.iter_budget is not None else default_iter)

    def acquisition_spec(self) -> AcquisitionSpec:
        kind, _ = parse_model(self.preset)
        return AcquisitionSpec(
            kind=kind or AfKind.EI,
            lcb_weight=self.lcb_weight,
            penalty=self.penalty,
            penalty_value=self.penalty_value,
            noise_subtraction=self.noise_subtraction,
            maf_threshold=self.maf_threshold,
            maf_distance_unit=self.maf_distance_unit,
            resample_fallback=self.resample_fallback,
        )

    def reparam_settings(self) -> ReparamSettings:
        return ReparamSettings(
            tau=self.tau,
            restarts=self.pr_restarts,
            steps=self.pr_steps,
            lr=self.pr_lr,
            n_samples=self.n_samples,
            mc_samples=self.mc_samples,
            enumeration_cap=self.enumeration_cap,
            categorical_temperature=self.categorical_temperature,
        )


def load_config(path: Union[str, Path], overrides: Optional[Dict] = None) -> RunConfig:
    """RunConfig from a JSON file; non-None overrides win over file values."""
    with open(path, "r") as f:
        raw = json.load(f)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**raw)


# =============================================================================
# TRACES
# =============================================================================

@dataclass
class TraceRow:
    seed: int
    iteration: int
    candidate: Candidate
    y: float
    best_y: float
    regret: float
    af_kind: str
    seconds: float = 0.0


@dataclass
class RunTrace:
    """Per-seed evaluation history in raw units."""
    benchmark_id: str
    model: str
    seed: int
    dim_names: List[str]
    rows: List[TraceRow] = field(default_factory=list)

    def append(self, iteration: int, candidate: Candidate, y: float, truth_value: float,
               af_kind: str, seconds: float = 0.0) -> TraceRow:
        best = min(y, self.rows[-1].best_y) if self.rows else y
        row = TraceRow(self.seed, iteration, tuple(candidate), float(y), float(best),
                       float(best - truth_value), af_kind, float(seconds))
        self.rows.append(row)
        return row

    @property
    def candidates(self) -> List[Candidate]:
        return [r.candidate for r in self.rows]

    @property
    def ys(self) -> List[float]:
        return [r.y for r in self.rows]

    def to_frame(self) -> pd.DataFrame:
        records = []
        for r in self.rows:
            rec = {"seed": r.seed, "iter": r.iteration}
            rec.update({name: float(v) for name, v in zip(self.dim_names, r.candidate)})
            rec.update({"y": r.y, "best_y": r.best_y, "regret": r.regret, "af_kind": r.af_kind, "seconds": r.seconds})
            records.append(rec)
        columns = ["seed", "iter"] + self.dim_names + ["y", "best_y", "regret", "af_kind", "seconds"]
        return pd.DataFrame.from_records(records, columns=columns)

    @classmethod
    def from_frame(cls, df: pd.DataFrame, benchmark_id: str, model: str) -> "RunTrace":
        fixed = {"seed", "iter", "y", "best_y", "regret", "af_kind", "seconds"}
        dim_names = [c for c in df.columns if c not in fixed]
        seed = int(df["seed"].iloc[0]) if len(df) else 0
        trace = cls(benchmark_id, model, seed, dim_names)
        for rec in df.to_dict("records"):
            trace.rows.append(TraceRow(
                seed=int(rec["seed"]),
                iteration=int(rec["iter"]),
                candidate=tuple(float(rec[n]) for n in dim_names),
                y=float(rec["y"]),
                best_y=float(rec["best_y"]),
                regret=float(rec["regret"]),
                af_kind=str(rec["af_kind"]),
                seconds=float(rec["seconds"]),
            ))
        return trace


def trace_path(output_dir: Union[str, Path], benchmark_id: str, model: str, seed: int) -> Path:
    return Path(output_dir) / benchmark_id / model / f"seed_{seed}.csv"


def write_trace(trace: RunTrace, output_dir: Union[str, Path]) -> Path:
    path = trace_path(output_dir, trace.benchmark_id, trace.model, trace.seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace.to_frame().to_csv(path, index=False, float_format="%.17g")
    return path


def read_trace(path: Union[str, Path]) -> RunTrace:
    """Trace from <output_dir>/<benchmark_id>/<model>/seed_<k>.csv."""
    path = Path(path)
    try:
        return RunTrace.from_frame(pd.read_csv(path), benchmark_id=path.parent.parent.name, model=path.parent.name)
    except (KeyError, ValueError, IndexError) as e:
        raise HarnessError(f"malformed trace file {path}: {e}") from e


def collect_traces(output_dir: Union[str, Path], benchmark_id: Optional[str] = None) -> List[RunTrace]:
    """All traces under output_dir, sorted by (benchmark, model, seed)."""
    pattern = f"{benchmark_id or '*'}/*/seed_*.csv"
    traces = [read_trace(p) for p in Path(output_dir).glob(pattern)]
    return sorted(traces, key=lambda t: (t.benchmark_id, t.model, t.seed))


# =============================================================================
# TRUTH CACHE
# =============================================================================

def load_truth(bench: Benchmark, output_dir: Union[str, Path], refresh: bool = False) -> Optimum:
    """Cached optimum of a benchmark, computed with its oracle on a miss."""
    path = Path(output_dir) / TRUTH_FILE
    try:
        cache = json.loads(path.read_text()) if path.exists() else {}
        entry = cache.get(bench.benchmark_id)
        if entry is not None and not refresh:
            return Optimum(candidate=tuple(entry["candidate"]), value=entry["value"], y_max=entry["y_max"])
    except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as e:
        raise HarnessError(f"unreadable truth cache {path}: {e}") from e
    truth = bench.truth()
    cache[bench.benchmark_id] = {"candidate": list(truth.candidate), "value": truth.value, "y_max": truth.y_max}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(dict(sorted(cache.items())), indent=2))
    logger.info("truth for %s: %.10g at %s", bench.benchmark_id, truth.value, truth.candidate)
    return truth


# =============================================================================
# RUN LOOP
# =============================================================================

def _observe(bench: Benchmark, c: Candidate, noise_std: float, rng: np.random.Generator) -> float:
    y = bench.evaluate(c)
    if noise_std > 0:
        y += noise_std * float(rng.standard_normal())
    return y


def _baseline_candidates(space: SearchSpace, init_points: int, iter_budget: int, seed: int) -> List[Candidate]:
    """Continuation of the seed's Sobol stream past the initial design."""
    points = sobol_points(space.dim, iter_budget, skip=seed * init_points + init_points, space=space)
    return [denormalize(space, p) for p in points]


def run_seed(config: RunConfig, bench: Benchmark, truth: Optimum, seed: int) -> RunTrace:
    """
    One seeded BO run.

    Raises:
        RunNumericError: the fallback model also failed; carries the partial trace
    """
    space = bench.space
    init_points, iter_budget = config.budget()
    noise_rng = np.random.default_rng([seed, 101])
    trace = RunTrace(bench.benchmark_id, config.preset, seed, list(space.names))

    for c in initial_design(space, init_points, seed):
        trace.append(0, c, _observe(bench, c, config.objective_noise_std, noise_rng), truth.value, "Sobol")

    if config.is_baseline:
        for it, c in enumerate(_baseline_candidates(space, init_points, iter_budget, seed), start=1):
            trace.append(it, c, _observe(bench, c, config.objective_noise_std, noise_rng), truth.value, "Sobol")
        return trace

    base_kind, kernel_name = parse_model(config.preset)
    kernel = get_preset(kernel_name)
    kernel_rounding = kernel.rounding == Rounding.KR
    acq = config.acquisition_spec()
    settings = config.reparam_settings()
    controller = MafController(base_kind, acq.maf_threshold)

    for it in range(1, iter_budget + 1):
        start = time.perf_counter()
        iter_seed = seed * SEED_STRIDE + it
        sampled = trace.candidates
        data = Dataset.from_observations([normalize(space, c) for c in sampled], trace.ys)
        kind = controller.next_kind()
        try:
            model = fit_map(kernel, data, space, noise_init=config.noise_init, restarts=config.gp_restarts,
                            steps=config.gp_steps, lr=config.gp_lr, seed=iter_seed)
            proposal = propose(model, space, acq, kind, sampled, settings, seed=iter_seed,
                               kernel_rounding=kernel_rounding)
        except (GpNumericError, ReparamNumericError) as e:
            logger.warning("%s seed %d iter %d: %s; falling back to max variance",
                           bench.benchmark_id, seed, it, e)
            try:
                model = build_model(kernel, HyperParams.default(space, noise=FALLBACK_NOISE), data, space)
                proposal = propose(model, space, acq, AfKind.MAX_VARIANCE, sampled, settings, seed=iter_seed,
                                   kernel_rounding=kernel_rounding, af_label=FALLBACK_LABEL)
            except (GpNumericError, ReparamNumericError) as fatal:
                raise RunNumericError(f"{bench.benchmark_id} seed {seed} iter {it}: {fatal}", [trace]) from fatal
        controller.record(proposal)
        y = _observe(bench, proposal.candidate, config.objective_noise_std, noise_rng)
        seconds = time.perf_counter() - start if config.record_timing else 0.0
        trace.append(it, proposal.candidate, y, truth.value, proposal.af_kind, seconds)
        logger.debug("%s seed %d iter %d: %s %s -> %.6g", bench.benchmark_id, seed, it,
                     proposal.af_kind, proposal.candidate, y)
    return trace


def run_bo(config: RunConfig, truth: Optional[Optimum] = None) -> List[RunTrace]:
    """
    Run every seed of a config.

    Args:
        config: Validated run configuration
        truth: Optimum used for regret; computed by the benchmark oracle if omitted

    Returns:
        One RunTrace per seed, sorted by seed

    Raises:
        RunNumericError: some seed failed; traces of all finished or partial seeds attached
    """
    bench = config.get_benchmark()
    truth = truth or bench.truth()
    traces: Dict[int, RunTrace] = {}
    failures: List[RunNumericError] = []
    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        futures = {executor.submit(run_seed, config, bench, truth, seed): seed for seed in config.seeds}
        for future in as_completed(futures):
            seed = futures[future]
            try:
                traces[seed] = future.result()
            except RunNumericError as e:
                failures.append(e)
                for partial in e.traces:
                    traces[seed] = partial
    ordered = [traces[s] for s in sorted(traces)]
    if failures:
        raise RunNumericError("; ".join(sorted(str(e) for e in failures)), ordered)
    return ordered


# =============================================================================
# CONVERGENCE AND SCORING
# =============================================================================

@dataclass(frozen=True)
class ToleranceSpec:
    """Convergence tolerance: percentages of the objective and continuous input ranges."""
    level: str
    y_pct: float
    x_pct: float

    @classmethod
    def for_benchmark(cls, family: str, level: str) -> "ToleranceSpec":
        tol = get_tolerance(family, level)
        return cls(level=level, y_pct=tol["y_pct"], x_pct=tol["x_pct"])


def is_converged(space: SearchSpace, candidate: Candidate, y: float, tol: ToleranceSpec, truth: Optimum) -> bool:
    if abs(y - truth.value) > tol.y_pct / 100.0 * truth.y_range:
        return False
    for i, spec in enumerate(space.params):
        if spec.kind == ParamKind.CONTINUOUS:
            if abs(candidate[i] - truth.candidate[i]) > tol.x_pct / 100.0 * (spec.high - spec.low):
                return False
        elif float(candidate[i]) != float(truth.candidate[i]):
            return False
    return True


def check_convergence(trace: RunTrace, tol: ToleranceSpec, truth: Optimum, space: SearchSpace) -> Optional[int]:
    """
    First iteration whose best sample so far is within tolerance of the optimum.

    The objective gap is compared with y_pct of the objective range, each
    continuous coordinate with x_pct of its range (both inclusive), and every
    non-continuous coordinate must match the optimum exactly.

    Returns:
        Iteration number (0 = initial design) or None if never converged
    """
    best_idx = None
    for k, row in enumerate(trace.rows):
        if best_idx is None or row.y < trace.rows[best_idx].y:
            best_idx = k
        best = trace.rows[best_idx]
        if is_converged(space, best.candidate, best.y, tol, truth):
            return row.iteration
    return None


@dataclass(frozen=True)
class CompositeScore:
    """C / (N * mu) over the seeds of one model on one benchmark."""
    converged: int
    total: int
    mean_iteration: Optional[float]
    score: float


def composite_score(runs: Sequence[Union[Optional[int], Tuple[bool, Optional[int]]]]) -> CompositeScore:
    """
    Composite score from per-seed convergence results.

    Args:
        runs: Convergence iteration per seed (None = not converged), or
              (converged, iteration) pairs

    Returns:
        CompositeScore; the score is 0 when no seed converged. When every
        converged seed converged at iteration 0, mu is taken as 1.
    """
    if not len(runs):
        raise HarnessError("composite score needs at least one run")
    iterations = []
    for run in runs:
        if isinstance(run, tuple):
            converged, iteration = run
            if converged:
                iterations.append(float(iteration))
        elif run is not None:
            iterations.append(float(run))
    n, c = len(runs), len(iterations)
    if c == 0:
        return CompositeScore(converged=0, total=n, mean_iteration=None, score=0.0)
    mu = float(np.mean(iterations))
    return CompositeScore(converged=c, total=n, mean_iteration=mu, score=c / (n * (mu if mu > 0 else 1.0)))


def score_from_counts(converged: int, mean_iteration: float, total: int) -> float:
    """Score for a (C, mu, N) triple as printed in score tables."""
    if converged == 0:
        return 0.0
    return converged / (total * mean_iteration)


def score_traces(traces: Sequence[RunTrace], level: str, truths: Dict[str, Optimum]) -> pd.DataFrame:
    """
    Composite score per (benchmark, model).

    Returns:
        DataFrame with benchmark, dims, model, converged, total, mean_iteration, score
        and the per-seed convergence iterations (semicolon separated)
    """
    groups: Dict[Tuple[str, str], List[RunTrace]] = {}
    for t in traces:
        groups.setdefault((t.benchmark_id, t.model), []).append(t)
    records = []
    for (bid, model), runs in sorted(groups.items()):
        bench = benchmark_from_id(bid)
        tol = ToleranceSpec.for_benchmark(bench.family, level)
        iterations = [check_convergence(t, tol, truths[bid], bench.space) for t in sorted(runs, key=lambda r: r.seed)]
        cs = composite_score(iterations)
        records.append({
            "benchmark": bid,
            "dims": bench.space.dim,
            "model": model,
            "converged": cs.converged,
            "total": cs.total,
            "mean_iteration": cs.mean_iteration,
            "score": cs.score,
            "iterations": ";".join("-" if i is None else str(i) for i in iterations),
        })
    return pd.DataFrame.from_records(records, columns=[
        "benchmark", "dims", "model", "converged", "total", "mean_iteration", "score", "iterations"])


def _rank_block(scores: pd.DataFrame, partial: bool) -> pd.DataFrame:
    variants = scores.groupby("model")["benchmark"].apply(frozenset)
    if variants.nunique() > 1 and not partial:
        raise HarnessError("models were scored on different benchmark sets; use partial ranking")
    ranked = scores.copy()
    ranked["rank"] = ranked.groupby("benchmark")["score"].rank(method="dense", ascending=False).astype(int)
    summary = ranked.groupby("model")["rank"].agg(
        mean_rank="mean", median_rank="median", min_rank="min", max_rank="max", n_ranks="count"
    ).reset_index()
    return summary.sort_values(["mean_rank", "model"], kind="stable").reset_index(drop=True)


def rank_models(scores: pd.DataFrame, partial: bool = False, group_by: Optional[str] = None) -> pd.DataFrame:
    """
    Rank statistics of models across benchmarks.

    Per benchmark, models get dense ranks by descending score (equal scores
    share a rank). Each model is summarized by mean, median, min and max rank.

    Args:
        scores: Frame with at least benchmark, model, score (and dims for grouping)
        partial: Allow models scored on different benchmark sets; each model is
                 then ranked only where it has a score
        group_by: Optional column (e.g. "dims") to aggregate per group

    Returns:
        Summary frame sorted by mean rank, ties alphabetical by model
    """
    for column in ("benchmark", "model", "score"):
        if column not in scores.columns:
            raise HarnessError(f"scores frame lacks column '{column}'")
    if group_by is None:
        return _rank_block(scores, partial)
    blocks = []
    for key, block in scores.groupby(group_by, sort=True):
        summary = _rank_block(block, partial)
        summary.insert(0, group_by, key)
        blocks.append(summary)
    return pd.concat(blocks, ignore_index=True) if blocks else pd.DataFrame()


def budget_convergence(runs: Dict[str, Sequence[Optional[int]]], budget: int,
                       fractions: Sequence[float] = (0.25, 0.5, 0.75, 1.0)) -> pd.DataFrame:
    """
    Percentage of seeds converged within fractions of the iteration budget.

    Args:
        runs: Model name -> convergence iteration per seed (None = not converged)
        budget: BO iteration budget
        fractions: Budget fractions reported as columns

    Returns:
        One row per model, one column per fraction ("25%", "50%", ...)
    """
    records = []
    for model in sorted(runs):
        iterations = runs[model]
        rec = {"model": model}
        for frac in fractions:
            limit = frac * budget
            hits = sum(1 for i in iterations if i is not None and i <= limit)
            rec[f"{frac:.0%}"] = 100.0 * hits / len(iterations) if iterations else 0.0
        records.append(rec)
    return pd.DataFrame.from_records(records, columns=["model"] + [f"{f:.0%}" for f in fractions])


def plot_data(traces: Sequence[RunTrace]) -> pd.DataFrame:
    """
    Best-so-far regret bands per model and iteration.

    Returns:
        Frame with benchmark, model, iter, mean, std, median, q25, q75, n
    """
    frames = []
    for t in traces:
        df = t.to_frame()
        last = df.groupby("iter", sort=True)["regret"].last().reset_index()
        last["benchmark"], last["model"], last["seed"] = t.benchmark_id, t.model, t.seed
        frames.append(last)
    if not frames:
        return pd.DataFrame(columns=["benchmark", "model", "iter", "mean", "std", "median", "q25", "q75", "n"])
    regret = pd.concat(frames, ignore_index=True)
    grouped = regret.groupby(["benchmark", "model", "iter"], sort=True)["regret"]
    out = grouped.agg(["mean", "std", "median", "count"]).rename(columns={"count": "n"})
    out["std"] = out["std"].fillna(0.0)
    out["q25"] = grouped.quantile(0.25)
    out["q75"] = grouped.quantile(0.75)
    return out.reset_index()[["benchmark", "model", "iter", "mean", "std", "median", "q25", "q75", "n"]]

