"""Binary logistic regression fit by damped iteratively reweighted least squares.

The fit doubles as the first block of the stacked estimating equations used
for sandwich variance, so convergence is certified by the score norm, not by
parameter movement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import ProbabilityMatrix, TrainingDataset
from .errors import DimensionMismatch, NotConverged, RankDeficient, SeparableData

SEPARATION_BOUND = 30.0  # |logit| beyond this, the likelihood is flat to machine precision
SEPARATION_RESIDUAL = 1e-6  # every residual below this means a perfect fit, so no finite MLE
MAX_HALVINGS = 20


@dataclass(frozen=True)
class ModelSpec:
    max_iterations: int = 100
    gradient_tolerance: float = 1e-8
    ridge_epsilon: float = 0.0
    kind: str = "logistic"

    def __post_init__(self):
        if self.kind != "logistic":
            raise ValueError(f"unsupported model kind {self.kind!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.gradient_tolerance <= 0:
            raise ValueError("gradient_tolerance must be positive")
        if self.ridge_epsilon < 0:
            raise ValueError("ridge_epsilon must be nonnegative")


@dataclass(frozen=True)
class LogisticModel:
    """Fitted coefficients plus convergence metadata.

    Coefficient layout: one entry per feature, then the intercept last.
    """

    coefficients: np.ndarray
    converged: bool
    iterations: int
    final_gradient_norm: float
    feature_names: tuple
    positive_label: object
    negative_label: object

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        if not np.all(np.isfinite(coef)):
            raise ValueError("coefficients must be finite")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "logistic",
                "coefficients": list(self.coefficients),
                "feature_names": list(self.feature_names),
                "positive_label": self.positive_label,
                "negative_label": self.negative_label,
                "converged": self.converged,
                "iterations": self.iterations,
                "final_gradient_norm": self.final_gradient_norm,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "LogisticModel":
        doc = json.loads(text)
        return cls(
            coefficients=np.array(doc["coefficients"], dtype=float),
            converged=doc["converged"],
            iterations=doc["iterations"],
            final_gradient_norm=doc["final_gradient_norm"],
            feature_names=doc["feature_names"],
            positive_label=doc["positive_label"],
            negative_label=doc["negative_label"],
        )


def sigmoid(t):
    """Overflow-safe logistic function."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    et = np.exp(t[~pos])
    out[~pos] = et / (1.0 + et)
    return out


def add_intercept(features):
    features = np.asarray(features, dtype=float)
    return np.hstack([features, np.ones((features.shape[0], 1))])


def _log_likelihood(x, a, coef):
    # sum a*eta - log(1 + exp(eta)), stable via logaddexp
    eta = x @ coef
    return float(a @ eta - np.logaddexp(0.0, eta).sum())


def binary_labels(training: TrainingDataset, positive_label=None):
    """Map the two group labels of a training dataset onto {0, 1}."""
    labels = training.group_labels
    if len(labels) == 1:
        # Degenerate one-class data: let the fit run and fail as separable.
        only = labels[0]
        if positive_label is None or positive_label == only:
            a = np.ones(training.n)
            return a, only, f"not-{only}"
        return np.zeros(training.n), positive_label, only
    if len(labels) != 2:
        raise ValueError(f"expected exactly 2 group labels, got {labels}")
    if positive_label is None:
        positive_label = labels[1]
    if positive_label not in labels:
        raise ValueError(f"positive label {positive_label!r} not in {labels}")
    negative_label = labels[0] if labels[1] == positive_label else labels[1]
    a = np.array([1.0 if g == positive_label else 0.0 for g in training.groups])
    return a, positive_label, negative_label


def fit_arrays(x, a, spec: ModelSpec):
    """IRLS on a design matrix that already includes any intercept column."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    n, d = x.shape
    coef = np.zeros(d)
    loglik = _log_likelihood(x, a, coef)
    score = x.T @ (a - sigmoid(x @ coef))
    if np.linalg.norm(score) <= spec.gradient_tolerance:
        return coef, True, 0, float(np.linalg.norm(score))
    iterations = 0
    for iterations in range(1, spec.max_iterations + 1):
        mu = sigmoid(x @ coef)
        w = mu * (1.0 - mu)
        hess = x.T @ (w[:, None] * x)
        if spec.ridge_epsilon > 0:
            hess = hess + spec.ridge_epsilon * np.eye(d)
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            raise RankDeficient(
                "weighted normal equations are singular (ridge_epsilon = 0)"
            ) from None
        # Step-halving keeps the ascent monotone when the Newton step overshoots.
        scale = 1.0
        for _ in range(MAX_HALVINGS + 1):
            candidate = coef + scale * step
            cand_loglik = _log_likelihood(x, a, candidate)
            if cand_loglik >= loglik:
                break
            scale *= 0.5
        coef = coef + scale * step
        loglik = _log_likelihood(x, a, coef)
        if np.max(np.abs(coef)) > SEPARATION_BOUND:
            raise SeparableData(
                f"coefficient magnitude exceeded {SEPARATION_BOUND}; data look separable"
            )
        resid = a - sigmoid(x @ coef)
        score = x.T @ resid
        if np.linalg.norm(score) <= spec.gradient_tolerance:
            if np.max(np.abs(resid)) < SEPARATION_RESIDUAL:
                raise SeparableData(
                    "every unit is fit perfectly; the likelihood has no finite maximizer"
                )
            return coef, True, iterations, float(np.linalg.norm(score))
    return coef, False, iterations, float(np.linalg.norm(score))


def fit_logistic(training: TrainingDataset, spec: ModelSpec = ModelSpec(),
                 positive_label=None) -> LogisticModel:
    """Fit P(A = positive | z) with an intercept appended to the features."""
    a, pos, neg = binary_labels(training, positive_label)
    x = add_intercept(training.features)
    try:
        coef, converged, iterations, grad_norm = fit_arrays(x, a, spec)
    except (SeparableData, RankDeficient):
        raise
    if not converged:
        model = LogisticModel(coef, False, iterations, grad_norm,
                              training.feature_names, pos, neg)
        raise NotConverged(
            f"IRLS did not reach gradient tolerance in {spec.max_iterations} iterations",
            last_model=model,
        )
    return LogisticModel(coef, True, iterations, grad_norm,
                         training.feature_names, pos, neg)


def predict_proba(model: LogisticModel, features) -> ProbabilityMatrix:
    """Two-column probability matrix (positive group first)."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[1] != len(model.feature_names):
        raise DimensionMismatch(
            f"expected {len(model.feature_names)} feature columns, got shape {features.shape}"
        )
    p1 = sigmoid(add_intercept(features) @ model.coefficients)
    values = np.column_stack([p1, 1.0 - p1])
    return ProbabilityMatrix(values, (model.positive_label, model.negative_label))
