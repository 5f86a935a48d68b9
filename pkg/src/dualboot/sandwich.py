"""Stacked estimating equations and sandwich covariance for the disparity.

The parameter vector stacks the logistic coefficients with the two
probability-weighted group means (or, for the linear variant, a single slope).
Group labels are observed only in the training data and outcomes only in the
primary data, so the logistic block of the equations averages over the
training rows while the mean blocks average over the primary rows; the meat
matrix is block diagonal because the two samples are independent, with each
block scaled by its own sample size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .data import PrimaryDataset, TrainingDataset, group_weighted_mean
from .errors import DimensionMismatch, NegativeVariance, SingularBread, ZeroWeight
from .logistic import (
    ModelSpec,
    add_intercept,
    binary_labels,
    fit_logistic,
    predict_proba,
    sigmoid,
)

KINDS = ("disparity_means", "linear_disparity")


@dataclass(frozen=True)
class ThetaVector:
    """Logistic coefficients plus the mean parameters they feed.

    For kind "disparity_means", theta_1 and theta_0 are the weighted means of
    the two groups. For kind "linear_disparity", theta_1 holds the slope and
    theta_0 is unused (None).
    """

    theta_alpha: np.ndarray
    theta_1: float
    theta_0: float | None
    kind: str = "disparity_means"

    def __post_init__(self):
        alpha = np.asarray(self.theta_alpha, dtype=float)
        if not np.all(np.isfinite(alpha)):
            raise ValueError("theta_alpha must be finite")
        alpha.setflags(write=False)
        object.__setattr__(self, "theta_alpha", alpha)
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "disparity_means" and self.theta_0 is None:
            raise ValueError("disparity_means requires theta_0")

    @property
    def flat(self) -> np.ndarray:
        tail = [self.theta_1] if self.theta_0 is None else [self.theta_1, self.theta_0]
        return np.concatenate([self.theta_alpha, tail])

    @property
    def p(self) -> int:
        return self.flat.shape[0]

    def replace_flat(self, flat) -> "ThetaVector":
        d = self.theta_alpha.shape[0]
        flat = np.asarray(flat, dtype=float)
        if self.theta_0 is None:
            return ThetaVector(flat[:d], float(flat[d]), None, self.kind)
        return ThetaVector(flat[:d], float(flat[d]), float(flat[d + 1]), self.kind)


@dataclass(frozen=True)
class SandwichCovariance:
    """bread^-1 . meat . bread^-T with per-block sample-size scaling applied.

    `meat` is the unscaled block-diagonal average of psi outer products; the
    1/n_train and 1/n_primary factors appear only in `matrix`.
    """

    matrix: np.ndarray
    bread: np.ndarray
    meat: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if np.max(np.abs(m - m.T)) > 1e-10:
            raise ValueError("covariance matrix is not symmetric")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


# --- estimating-equation coordinates ---------------------------------------

def psi_alpha_rows(theta_alpha, x, a):
    """Logistic score contributions, one row per training unit."""
    resid = a - sigmoid(x @ theta_alpha)
    return x * resid[:, None]


def psi_mean_rows(theta: ThetaVector, x, y):
    """Weighted-mean coordinates, one row per primary unit."""
    p1 = sigmoid(x @ theta.theta_alpha)
    if theta.kind == "disparity_means":
        return np.column_stack([
            p1 * y - p1 * theta.theta_1,
            (1.0 - p1) * y - (1.0 - p1) * theta.theta_0,
        ])
    return (p1 * (y - p1 * theta.theta_1))[:, None]


def evaluate_psi(theta: ThetaVector, row, kind=None):
    """Stacked psi vector for one (z, a, y) row; missing pieces yield NaN.

    `row` is (z, a_or_none, y_or_none) where z is the full design vector
    (intercept included) matching theta_alpha.
    """
    if kind is not None and kind != theta.kind:
        raise ValueError("kind does not match theta.kind")
    z, a, y = row
    x = np.atleast_2d(np.asarray(z, dtype=float))
    if x.shape[1] != theta.theta_alpha.shape[0]:
        raise DimensionMismatch(
            f"feature dimension {x.shape[1]} != theta_alpha dimension {theta.theta_alpha.shape[0]}"
        )
    d = theta.theta_alpha.shape[0]
    n_mu = 1 if theta.kind == "linear_disparity" else 2
    out = np.full(d + n_mu, np.nan)
    if a is not None:
        out[:d] = psi_alpha_rows(theta.theta_alpha, x, np.array([float(a)]))[0]
    if y is not None:
        out[d:] = psi_mean_rows(theta, x, np.array([float(y)]))[0]
    return out


def averaged_psi(theta: ThetaVector, x_train, a, x_primary, y) -> np.ndarray:
    """Block-averaged stacked equations: training block then primary block."""
    top = psi_alpha_rows(theta.theta_alpha, x_train, a).mean(axis=0)
    bottom = psi_mean_rows(theta, x_primary, y).mean(axis=0)
    return np.concatenate([top, bottom])


# --- solving ----------------------------------------------------------------

def solve_theta(training: TrainingDataset, primary: PrimaryDataset,
                kind="disparity_means", spec: ModelSpec = ModelSpec(),
                positive_label=None) -> ThetaVector:
    """Root of the stacked equations: IRLS for alpha, closed form for the rest."""
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    model = fit_logistic(training, spec, positive_label=positive_label)
    x_p = add_intercept(primary.features)
    p1 = sigmoid(x_p @ model.coefficients)
    y = primary.outcomes
    if kind == "disparity_means":
        probs = predict_proba(model, primary.features)
        theta_1 = group_weighted_mean(probs, y, model.positive_label)
        theta_0 = group_weighted_mean(probs, y, model.negative_label)
        return ThetaVector(model.coefficients, theta_1, theta_0, kind)
    # Linear variant: slope of the least-squares fit of y on p1 with intercept.
    var_p = float(np.var(p1))
    if var_p <= 0.0:
        raise ZeroWeight("fitted probabilities are constant")
    slope = float(np.cov(p1, y, ddof=0)[0, 1] / var_p)
    return ThetaVector(model.coefficients, slope, None, kind)


# --- covariance -------------------------------------------------------------

def finite_difference_jacobian(fn, theta_flat):
    """Central-difference Jacobian with per-coordinate relative steps."""
    theta_flat = np.asarray(theta_flat, dtype=float)
    p = theta_flat.shape[0]
    f0 = np.asarray(fn(theta_flat))
    jac = np.empty((f0.shape[0], p))
    for k in range(p):
        h = max(1e-6, 1e-6 * abs(theta_flat[k]))
        up = theta_flat.copy()
        dn = theta_flat.copy()
        up[k] += h
        dn[k] -= h
        jac[:, k] = (np.asarray(fn(up)) - np.asarray(fn(dn))) / (2.0 * h)
    return jac


def sandwich_core(psi_bar_fn, scaled_meat, theta_flat):
    """Covariance from an averaged-psi function and an already-scaled meat."""
    bread = finite_difference_jacobian(psi_bar_fn, theta_flat)
    try:
        half = np.linalg.solve(bread, scaled_meat)
        cov = np.linalg.solve(bread, half.T).T
    except np.linalg.LinAlgError:
        raise SingularBread("estimating-equation Jacobian is numerically singular") from None
    if not np.all(np.isfinite(cov)):
        raise SingularBread("covariance blew up; Jacobian is effectively singular")
    return 0.5 * (cov + cov.T), bread


def sandwich(theta: ThetaVector, training: TrainingDataset, primary: PrimaryDataset,
             kind=None, positive_label=None) -> SandwichCovariance:
    """Sandwich covariance of theta under the two-sample block layout."""
    if kind is not None and kind != theta.kind:
        raise ValueError("kind does not match theta.kind")
    a, _, _ = binary_labels(training, positive_label=positive_label)
    x_t = add_intercept(training.features)
    x_p = add_intercept(primary.features)
    y = primary.outcomes
    d = theta.theta_alpha.shape[0]
    n_t, n_p = training.n, primary.n

    rows_t = psi_alpha_rows(theta.theta_alpha, x_t, a)
    rows_p = psi_mean_rows(theta, x_p, y)
    meat_t = rows_t.T @ rows_t / n_t
    meat_p = rows_p.T @ rows_p / n_p
    p = d + rows_p.shape[1]
    meat = np.zeros((p, p))
    meat[:d, :d] = meat_t
    meat[d:, d:] = meat_p
    scaled = np.zeros((p, p))
    scaled[:d, :d] = meat_t / n_t
    scaled[d:, d:] = meat_p / n_p

    def psi_bar(flat):
        return averaged_psi(theta.replace_flat(flat), x_t, a, x_p, y)

    cov, bread = sandwich_core(psi_bar, scaled, theta.flat)
    return SandwichCovariance(matrix=cov, bread=bread, meat=meat)


def wald_interval(theta: ThetaVector, cov: SandwichCovariance, contrast,
                  level: float = 0.05):
    """Normal-approximation interval for a linear contrast of theta."""
    c = np.asarray(contrast, dtype=float)
    flat = theta.flat
    if c.shape[0] != flat.shape[0]:
        raise DimensionMismatch(f"contrast length {c.shape[0]} != p = {flat.shape[0]}")
    est = float(c @ flat)
    var = float(c @ cov.matrix @ c)
    if var < -1e-12:
        raise NegativeVariance(f"contrast variance {var} is negative")
    se = np.sqrt(max(var, 0.0))
    z = float(ndtri(1.0 - level / 2.0))
    return est - z * se, est + z * se


def disparity_contrast(theta: ThetaVector) -> np.ndarray:
    """Contrast selecting theta_1 - theta_0."""
    if theta.kind != "disparity_means":
        raise ValueError("disparity contrast requires kind 'disparity_means'")
    c = np.zeros(theta.p)
    c[-2] = 1.0
    c[-1] = -1.0
    return c


def empirical_result(training: TrainingDataset, primary: PrimaryDataset,
                     level: float = 0.05, spec: ModelSpec = ModelSpec(),
                     positive_label=None) -> dict:
    """JSON-shaped disparity result matching the bootstrap document layout."""
    theta = solve_theta(training, primary, "disparity_means", spec, positive_label)
    cov = sandwich(theta, training, primary, positive_label=positive_label)
    c = disparity_contrast(theta)
    lower, upper = wald_interval(theta, cov, c, level)
    se = float(np.sqrt(max(c @ cov.matrix @ c, 0.0)))
    return {
        "mode": "empirical",
        "B": None,
        "level": level,
        "point_estimate": float(theta.theta_1 - theta.theta_0),
        "lower": lower,
        "upper": upper,
        "standard_error": se,
        "failed_draws": 0,
        "seed": None,
    }
