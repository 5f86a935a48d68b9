"""Datasets, probability matrices, and the probability-weighted disparity estimator.

Group means are weighted by each unit's estimated probability of belonging to
the group (a Hajek-style ratio), so the disparity between two groups is the
difference of two probability-weighted means.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SchemaError, ZeroWeight

ROW_SUM_TOL = 1e-9
ROW_SUM_HARD_TOL = 1e-6


def _as_finite_2d(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class TrainingDataset:
    """Rows of proxy features paired with observed group labels."""

    features: np.ndarray
    groups: tuple
    feature_names: tuple

    def __post_init__(self):
        feats = _as_finite_2d(self.features, "features")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if feats.shape[0] != len(self.groups):
            raise DimensionMismatch(
                f"{feats.shape[0]} feature rows but {len(self.groups)} group labels"
            )
        if feats.shape[1] != len(self.feature_names):
            raise DimensionMismatch("feature_names length does not match feature columns")
        if not self.groups:
            raise ValueError("training dataset is empty")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def group_labels(self):
        return tuple(sorted(set(self.groups)))

    def take(self, indices):
        """Row subset/resample; used by the bootstrap engine."""
        idx = np.asarray(indices)
        return TrainingDataset(
            self.features[idx], [self.groups[i] for i in idx], self.feature_names
        )


@dataclass(frozen=True)
class PrimaryDataset:
    """Rows of proxy features paired with outcomes (group labels unobserved)."""

    features: np.ndarray
    outcomes: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        feats = _as_finite_2d(self.features, "features")
        feats.setflags(write=False)
        outc = np.asarray(self.outcomes, dtype=float)
        if outc.ndim != 1:
            raise ValueError("outcomes must be a 1-d array")
        if not np.all(np.isfinite(outc)):
            raise ValueError("outcomes contain NaN or Inf")
        outc.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "outcomes", outc)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if feats.shape[0] != outc.shape[0]:
            raise DimensionMismatch(
                f"{feats.shape[0]} feature rows but {outc.shape[0]} outcomes"
            )
        if feats.shape[1] != len(self.feature_names):
            raise DimensionMismatch("feature_names length does not match feature columns")

    @property
    def n(self):
        return self.features.shape[0]

    def take(self, indices):
        idx = np.asarray(indices)
        return PrimaryDataset(self.features[idx], self.outcomes[idx], self.feature_names)


@dataclass(frozen=True)
class ProbabilityMatrix:
    """Per-row, per-group membership probabilities on the simplex."""

    values: np.ndarray
    group_labels: tuple

    def __post_init__(self):
        vals = _as_finite_2d(self.values, "probabilities")
        object.__setattr__(self, "group_labels", tuple(self.group_labels))
        if len(self.group_labels) < 2:
            raise ValueError("at least two groups are required")
        if vals.shape[1] != len(self.group_labels):
            raise DimensionMismatch("group_labels length does not match columns")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        row_sums = vals.sum(axis=1)
        dev = np.abs(row_sums - 1.0)
        worst = dev.max(initial=0.0)
        if worst > ROW_SUM_HARD_TOL:
            # Refuse to renormalize: a row this far off signals an upstream bug.
            bad = int(np.argmax(dev))
            raise ValueError(
                f"row {bad} sums to {row_sums[bad]:.9f}; renormalization refused"
            )
        if worst > ROW_SUM_TOL:
            vals = vals / row_sums[:, None]
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self):
        return self.values.shape[0]

    def column(self, group):
        if group not in self.group_labels:
            raise KeyError(f"unknown group {group!r}")
        return self.values[:, self.group_labels.index(group)]


@dataclass(frozen=True)
class DisparityEstimate:
    """Difference of probability-weighted group means, with effective counts."""

    value: float
    group_a: object
    group_b: object
    n_effective_a: float
    n_effective_b: float


def group_weighted_mean(probs: ProbabilityMatrix, outcomes, group) -> float:
    """Probability-weighted mean outcome for one group: sum(p*y) / sum(p)."""
    y = np.asarray(outcomes, dtype=float)
    if y.shape[0] != probs.n:
        raise DimensionMismatch(
            f"{y.shape[0]} outcomes but {probs.n} probability rows"
        )
    p = probs.column(group)
    total = p.sum()
    if total <= 0.0:
        raise ZeroWeight(group)
    return float(p @ y / total)


def weighted_disparity(probs: ProbabilityMatrix, outcomes, group_a, group_b) -> DisparityEstimate:
    """Disparity between two groups under probability weighting."""
    if group_a == group_b:
        raise ValueError("group_a and group_b must differ")
    mean_a = group_weighted_mean(probs, outcomes, group_a)
    mean_b = group_weighted_mean(probs, outcomes, group_b)
    return DisparityEstimate(
        value=mean_a - mean_b,
        group_a=group_a,
        group_b=group_b,
        n_effective_a=float(probs.column(group_a).sum()),
        n_effective_b=float(probs.column(group_b).sum()),
    )


# ---------------------------------------------------------------------------
# CSV ingestion. Column convention: `feature:<name>` columns carry reals,
# `group` carries UTF-8 labels (training files), `outcome` carries reals
# (primary files).

def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("empty file: missing header row", line=1)
        return list(reader), reader.fieldnames


def _feature_columns(fieldnames):
    cols = [c for c in fieldnames if c.startswith("feature:")]
    if not cols:
        raise SchemaError("no `feature:*` columns found in header", line=1)
    return cols


def _parse_real(raw, column, line):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise SchemaError(f"column {column!r}: {raw!r} is not a number", line=line) from None


def load_training_csv(path) -> TrainingDataset:
    rows, fieldnames = _read_rows(path)
    if "group" not in fieldnames:
        raise SchemaError("missing required column 'group'", line=1)
    cols = _feature_columns(fieldnames)
    feats, groups = [], []
    for i, row in enumerate(rows, start=2):
        feats.append([_parse_real(row[c], c, i) for c in cols])
        label = row["group"]
        if label is None or label == "":
            raise SchemaError("column 'group': empty label", line=i)
        groups.append(label)
    names = [c.removeprefix("feature:") for c in cols]
    return TrainingDataset(np.array(feats), groups, names)


def load_primary_csv(path) -> PrimaryDataset:
    rows, fieldnames = _read_rows(path)
    if "outcome" not in fieldnames:
        raise SchemaError("missing required column 'outcome'", line=1)
    cols = _feature_columns(fieldnames)
    feats, outcomes = [], []
    for i, row in enumerate(rows, start=2):
        feats.append([_parse_real(row[c], c, i) for c in cols])
        outcomes.append(_parse_real(row["outcome"], "outcome", i))
    names = [c.removeprefix("feature:") for c in cols]
    return PrimaryDataset(np.array(feats), np.array(outcomes), names)
