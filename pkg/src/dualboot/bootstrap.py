"""Dual- and single-mode bootstrap for the probability-weighted disparity.

Dual mode resamples the training data and refits the imputation model on
every draw, so the draws carry both sampling and measurement uncertainty.
Single mode keeps the original model fixed and resamples only the primary
data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .data import PrimaryDataset, TrainingDataset
from .errors import (
    InsufficientDraws,
    NotConverged,
    RankDeficient,
    SeparableData,
    TooManyFailedDraws,
    ZeroWeight,
)
from .logistic import ModelSpec, add_intercept, binary_labels, fit_arrays, fit_logistic, sigmoid
from .rng import substream

FAILED_DRAW_CEILING = 0.05
DRAW_FAILURES = (NotConverged, SeparableData, RankDeficient, ZeroWeight)

# Substream stages within one bootstrap draw. Keeping the primary-data stage
# separate from the model stage means single and dual modes share the same
# primary resampling schedule under a common seed.
STAGE_TRAIN = 0
STAGE_MODEL = 1
STAGE_PRIMARY = 2


@dataclass(frozen=True)
class BootstrapConfig:
    draws: int
    level: float = 0.05
    mode: str = "dual"
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.draws < 2:
            raise ValueError("at least 2 bootstrap draws are required")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if self.mode not in ("dual", "single"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass(frozen=True)
class BootstrapResult:
    draws: np.ndarray
    point_estimate: float
    interval: tuple
    standard_error: float
    mode: str
    level: float
    requested_draws: int
    failed_draws: int
    seed: int

    def __post_init__(self):
        arr = np.asarray(self.draws, dtype=float)
        if np.any(np.isnan(arr)):
            raise ValueError("draws contain NaN")
        arr.setflags(write=False)
        object.__setattr__(self, "draws", arr)

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "B": self.requested_draws,
            "level": self.level,
            "point_estimate": self.point_estimate,
            "lower": self.interval[0],
            "upper": self.interval[1],
            "standard_error": self.standard_error,
            "failed_draws": self.failed_draws,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def resample_with_replacement(n: int, rng: np.random.Generator) -> np.ndarray:
    """n indices drawn uniformly with replacement from {0..n-1}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.integers(0, n, size=n)


def percentile_interval(draws, level: float) -> tuple:
    """Ceiling order-statistic percentile interval at confidence 1 - level."""
    arr = np.sort(np.asarray(draws, dtype=float))
    b = arr.shape[0]
    if b == 0:
        raise ValueError("draws must be nonempty")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if b * (level / 2.0) < 1.0:
        raise InsufficientDraws(
            f"B * level/2 = {b * level / 2.0:.3g} < 1; need more draws for level {level}"
        )
    lo = arr[math.ceil(b * (level / 2.0)) - 1]
    hi = arr[math.ceil(b * (1.0 - level / 2.0)) - 1]
    return float(lo), float(hi)


def collect_draws(draw_fn, n_draws: int, jobs: int = 1):
    """Run draw_fn(b) for b in 0..n_draws-1, dropping and counting failures.

    Aggregation is ordered by draw index, so the result is independent of
    the worker count.
    """

    def run_one(b):
        try:
            return draw_fn(b)
        except DRAW_FAILURES:
            return None

    if jobs == 1:
        results = [run_one(b) for b in range(n_draws)]
    else:
        chunks = np.array_split(np.arange(n_draws), jobs * 4)
        chunk_results = Parallel(n_jobs=jobs)(
            delayed(lambda idx: [run_one(int(b)) for b in idx])(chunk)
            for chunk in chunks if len(chunk)
        )
        results = [v for chunk in chunk_results for v in chunk]

    values = [v for v in results if v is not None]
    failed = n_draws - len(values)
    if failed > FAILED_DRAW_CEILING * n_draws:
        raise TooManyFailedDraws(failed, n_draws)
    return np.array(values, dtype=float), failed


def _weighted_delta(p1, y):
    """delta from a positive-group probability column over resampled rows."""
    s1 = p1.sum()
    s0 = (1.0 - p1).sum()
    if s1 <= 0.0:
        raise ZeroWeight("positive group")
    if s0 <= 0.0:
        raise ZeroWeight("negative group")
    return float(p1 @ y / s1 - (1.0 - p1) @ y / s0)


def run_bootstrap(training: TrainingDataset, primary: PrimaryDataset,
                  spec: ModelSpec, config: BootstrapConfig,
                  group_a, group_b) -> BootstrapResult:
    """Bootstrap the disparity between group_a and group_b.

    The point estimate always comes from the un-resampled data; the original
    fit also serves as the fixed model in single mode.
    """
    model = fit_logistic(training, spec, positive_label=group_a)
    if model.negative_label != group_b:
        raise ValueError(
            f"group_b {group_b!r} does not match training labels "
            f"({model.positive_label!r}, {model.negative_label!r})"
        )

    a_labels, _, _ = binary_labels(training, positive_label=group_a)
    x_train = add_intercept(training.features)
    x_primary = add_intercept(primary.features)
    y = primary.outcomes
    n_t, n_p = training.n, primary.n

    p1_fixed = sigmoid(x_primary @ model.coefficients)
    point = _weighted_delta(p1_fixed, y)
    dual = config.mode == "dual"

    def draw(b):
        if dual:
            rng_t = substream(config.seed, b, STAGE_TRAIN)
            idx_t = resample_with_replacement(n_t, rng_t)
            coef, converged, _, _ = fit_arrays(x_train[idx_t], a_labels[idx_t], spec)
            if not converged:
                raise NotConverged("bootstrap refit did not converge")
            p1 = sigmoid(x_primary @ coef)
        else:
            p1 = p1_fixed
        rng_p = substream(config.seed, b, STAGE_PRIMARY)
        idx_p = resample_with_replacement(n_p, rng_p)
        return _weighted_delta(p1[idx_p], y[idx_p])

    draws, failed = collect_draws(draw, config.draws, config.jobs)
    interval = percentile_interval(draws, config.level)
    se = float(np.std(draws, ddof=1))
    return BootstrapResult(
        draws=draws,
        point_estimate=point,
        interval=interval,
        standard_error=se,
        mode=config.mode,
        level=config.level,
        requested_draws=config.draws,
        failed_draws=failed,
        seed=config.seed,
    )
