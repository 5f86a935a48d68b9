"""Data-generating processes, synthetic census products, and experiments.

Two experiment families: coverage of the dual/single/empirical intervals
under a logistic proxy model, and dual-versus-single standard errors under
surname-geolocation imputation on synthetic census bundles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from .bisg import (
    CensusBundle,
    BisgRecord,
    GeoPriorTable,
    SurnameTable,
    VarianceReplicates,
    bisg_mean_vector_draws,
    build_geo_covariance,
    likelihood_matrix,
)
from .bootstrap import BootstrapConfig, run_bootstrap
from .data import PrimaryDataset, TrainingDataset
from .errors import DualbootError, InfeasibleSpec, InfeasibleTarget, TooManyFailedDraws
from .logistic import ModelSpec, sigmoid
from .rng import substream
from .sandwich import empirical_result

# Mean proxy gap E[Z | A=1] - E[Z | A=0] under Z ~ N(0,1) with a unit-slope
# logistic link, pinned by quadrature (scipy.integrate.quad on
# z*sigma(z)*phi(z); absolute error < 1e-12). The true disparity is the
# outcome slope times this gap.
UNIT_SLOPE_Z_GAP = 0.8264838565676284
TRUE_DELTA_DEFAULT = 5.0 * UNIT_SLOPE_Z_GAP

MAX_FAILED_REPS = 0.05


@dataclass(frozen=True)
class LogisticDgpSpec:
    n_train: int
    n_primary: int
    slope_y: float = 5.0
    noise_var_y: float = 9.0
    seed: int = 0

    def __post_init__(self):
        if self.n_train < 1 or self.n_primary < 1:
            raise ValueError("sample sizes must be >= 1")
        if self.noise_var_y <= 0:
            raise ValueError("noise_var_y must be positive")

    @property
    def true_delta(self) -> float:
        return self.slope_y * UNIT_SLOPE_Z_GAP


def generate_logistic_dgp(spec: LogisticDgpSpec):
    """Draw training and primary datasets from the logistic proxy process.

    Z ~ N(0,1); the group indicator is Bernoulli with logit Z; the outcome is
    N(slope_y * Z, noise_var_y). Returns (training, primary, true_delta).
    """
    rng = substream(spec.seed, 0)
    z_t = rng.standard_normal(spec.n_train)
    a = (rng.random(spec.n_train) < sigmoid(z_t)).astype(float)
    z_p = rng.standard_normal(spec.n_primary)
    y = spec.slope_y * z_p + np.sqrt(spec.noise_var_y) * rng.standard_normal(spec.n_primary)
    training = TrainingDataset(
        z_t[:, None], ["g1" if v else "g0" for v in a], ["z"]
    )
    primary = PrimaryDataset(z_p[:, None], y, ["z"])
    return training, primary, spec.true_delta


@dataclass(frozen=True)
class CoverageReport:
    rows: tuple  # of dicts: n_train, n_primary, method, coverage_rate, mean_width, ...
    long_rows: tuple  # per-repetition records for plotting

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "long_rows", tuple(self.long_rows))
        for row in self.rows:
            if not 0.0 <= row["coverage_rate"] <= 1.0:
                raise ValueError("coverage_rate out of [0, 1]")
            if row["repetitions"] < 1:
                raise ValueError("repetitions must be >= 1")

    def to_csv(self, path):
        cols = ["n_train", "n_primary", "method", "coverage_rate", "mean_width",
                "repetitions", "failed_repetitions"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            writer.writerows(self.rows)

    def to_long_csv(self, path):
        cols = ["n_train", "n_primary", "repetition", "method", "point_estimate",
                "lower", "upper", "covered"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            writer.writerows(self.long_rows)


def _bootstrap_seed(seed, *path) -> int:
    return int(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(path)).generate_state(1)[0])


def _coverage_rep(ci, rep, n_t, n_p, draws, level, seed):
    spec = LogisticDgpSpec(n_t, n_p, seed=_bootstrap_seed(seed, ci, rep, 0))
    training, primary, truth = generate_logistic_dgp(spec)
    out = {}
    for mode in ("dual", "single"):
        config = BootstrapConfig(draws=draws, level=level, mode=mode,
                                 seed=_bootstrap_seed(seed, ci, rep, 1))
        res = run_bootstrap(training, primary, ModelSpec(), config, "g1", "g0")
        out[mode] = (res.point_estimate, res.interval[0], res.interval[1])
    emp = empirical_result(training, primary, level=level, positive_label="g1")
    out["empirical"] = (emp["point_estimate"], emp["lower"], emp["upper"])
    return out, truth


def run_coverage_experiment(sizes, repetitions, draws, level=0.05, seed=0,
                            jobs=1) -> CoverageReport:
    """Coverage and width of the three interval types over fresh datasets."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if not sizes:
        raise ValueError("sizes list is empty")
    rows, long_rows = [], []
    for ci, (n_t, n_p) in enumerate(sizes):
        def rep_task(rep):
            try:
                return _coverage_rep(ci, rep, n_t, n_p, draws, level, seed)
            except DualbootError:
                return None
        if jobs == 1:
            results = [rep_task(rep) for rep in range(repetitions)]
        else:
            results = Parallel(n_jobs=jobs)(
                delayed(rep_task)(rep) for rep in range(repetitions)
            )
        kept = [(rep, r) for rep, r in enumerate(results) if r is not None]
        failed = repetitions - len(kept)
        if failed > MAX_FAILED_REPS * repetitions:
            raise TooManyFailedDraws(failed, repetitions)
        for method in ("dual", "single", "empirical"):
            covered, widths = [], []
            for rep, (out, truth) in kept:
                point, lo, hi = out[method]
                hit = lo <= truth <= hi
                covered.append(hit)
                widths.append(hi - lo)
                long_rows.append({
                    "n_train": n_t, "n_primary": n_p, "repetition": rep,
                    "method": method, "point_estimate": point,
                    "lower": lo, "upper": hi, "covered": int(hit),
                })
            rows.append({
                "n_train": n_t, "n_primary": n_p, "method": method,
                "coverage_rate": float(np.mean(covered)),
                "mean_width": float(np.mean(widths)),
                "repetitions": len(kept),
                "failed_repetitions": failed,
            })
    return CoverageReport(rows, long_rows)


# ---------------------------------------------------------------------------
# Synthetic census products.

@dataclass(frozen=True)
class SyntheticCensusSpec:
    n_geoids: int
    race_labels: tuple
    prevalence: tuple
    zero_count_fraction: tuple
    replicate_noise_scale: float = 1.0
    seed: int = 0
    mean_geoid_total: float = 1000.0
    concentration: float = 1.0  # lognormal sigma of nonzero per-geoid counts
    zero_count_moe: float = 12.0  # margin of error published for zero cells
    signature_surname_floor: float = 0.0  # min signature-surname count, as a share of the population

    def __post_init__(self):
        object.__setattr__(self, "race_labels", tuple(self.race_labels))
        object.__setattr__(self, "prevalence", tuple(float(p) for p in self.prevalence))
        object.__setattr__(self, "zero_count_fraction",
                           tuple(float(f) for f in self.zero_count_fraction))
        if self.n_geoids < 1:
            raise ValueError("n_geoids must be >= 1")
        k = len(self.race_labels)
        if len(self.prevalence) != k or len(self.zero_count_fraction) != k:
            raise ValueError("prevalence and zero_count_fraction must match races")
        if abs(sum(self.prevalence) - 1.0) > 1e-9:
            raise ValueError("prevalence must sum to 1")
        if any(not 0.0 <= f < 1.0 for f in self.zero_count_fraction):
            raise ValueError("zero_count_fraction entries must lie in [0, 1)")


def generate_synthetic_census(spec: SyntheticCensusSpec):
    """Build a census bundle with controlled prevalence and concentration.

    Returns (bundle, weights) where weights carries the marginal sampling
    probabilities for drawing records: geoids proportional to their totals
    and surnames proportional to their table counts.
    """
    rng = substream(spec.seed, 0)
    n, k = spec.n_geoids, len(spec.race_labels)
    grand_total = spec.n_geoids * spec.mean_geoid_total
    counts = np.zeros((n, k))
    moes = np.zeros((n, k))
    replicates = np.zeros((n, 80, k))

    for r in range(k):
        race_total = spec.prevalence[r] * grand_total
        n_nonzero = round(n * (1.0 - spec.zero_count_fraction[r]))
        if race_total > 0 and n_nonzero == 0:
            raise InfeasibleSpec(
                f"race {spec.race_labels[r]!r} has positive prevalence but no nonzero geoids"
            )
        if n_nonzero == 0:
            continue
        nonzero = rng.permutation(n)[:n_nonzero]
        intensity = rng.lognormal(0.0, spec.concentration, n_nonzero)
        cell = np.maximum(1, np.rint(intensity / intensity.sum() * race_total)).astype(float)
        counts[nonzero, r] = cell
        moes[nonzero, r] = 1.645 * spec.replicate_noise_scale * np.sqrt(cell + 1.0)
        noise = rng.standard_normal((n_nonzero, 80)) * (
            spec.replicate_noise_scale * np.sqrt(cell + 1.0)
        )[:, None]
        replicates[nonzero, :, r] = np.clip(np.rint(cell[:, None] + noise), 0.0, None)
        moes[counts[:, r] == 0, r] = spec.zero_count_moe

    # No geoid may be empty: give strays one person of the most prevalent race.
    empty = counts.sum(axis=1) == 0
    if np.any(empty):
        major = int(np.argmax(spec.prevalence))
        counts[empty, major] = 1.0
        replicates[empty, :, major] = 1.0
    totals = counts.sum(axis=1)

    geoids = [f"G{idx:05d}" for idx in range(n)]
    priors = GeoPriorTable(geoids, counts, moes, totals, spec.race_labels)
    reps = VarianceReplicates(geoids, replicates, spec.race_labels)

    # Surname table: one signature name per race plus a common name whose
    # shares mirror the overall prevalence.
    surnames, s_counts, s_shares = [], [], []
    prev = np.array(spec.prevalence)
    for r, label in enumerate(spec.race_labels):
        share = 0.25 * prev.copy()
        share[r] = 0.0
        if share.sum() > 0:
            share = share / share.sum() * 0.25
        share[r] = 0.75
        surnames.append(f"NAME {label}".upper())
        floor = spec.signature_surname_floor * grand_total
        s_counts.append(max(100, int(round(max(floor, prev[r] * grand_total)))))
        s_shares.append(share / share.sum())
    surnames.append("COMMON")
    s_counts.append(max(100, int(round(0.5 * grand_total))))
    s_shares.append(prev / prev.sum())
    table = SurnameTable(surnames, np.array(s_counts, dtype=float),
                         np.vstack(s_shares), spec.race_labels)

    bundle = CensusBundle(priors, reps, table)
    weights = {
        "geoid_probs": totals / totals.sum(),
        "surname_probs": np.array(s_counts, dtype=float) / sum(s_counts),
    }
    return bundle, weights


GEOID_EFFECT_STREAM = 90210


def geoid_effects(n_geoids: int) -> np.ndarray:
    """Fixed standard-normal outcome effect per geoid index.

    Deterministic in the geoid index so the same geography keeps the same
    effect across repetitions and across modified bundles.
    """
    return substream(GEOID_EFFECT_STREAM, 0).standard_normal(n_geoids)


def draw_bisg_records(bundle: CensusBundle, weights, n, rng,
                      exclude_incompatible=True, geoid_effect_scale=0.0):
    """Sample (geoid, surname, outcome) records from the marginal frequencies.

    Outcomes are standard normal, independent of everything, so every
    record's outcome is equally informative for every group; a positive
    geoid_effect_scale optionally adds a fixed per-geoid outcome shift to
    study geographically structured outcomes instead. With
    exclude_incompatible, pairs whose prior and likelihood are mutually
    exclusive are redrawn (they are excluded from the simulation population).
    """
    priors = bundle.geo_priors
    table = bundle.surname_table
    lik = likelihood_matrix(table.counts, table.shares)
    prior_shares = priors.counts / np.maximum(priors.counts.sum(axis=1), 1.0)[:, None]
    compatible = (prior_shares @ lik.T) > 0.0  # (geoid, surname) product mass

    g_idx = np.empty(n, dtype=int)
    s_idx = np.empty(n, dtype=int)
    remaining = np.arange(n)
    for _ in range(1000):
        g_idx[remaining] = rng.choice(len(priors.geoids), size=remaining.size,
                                      p=weights["geoid_probs"])
        s_idx[remaining] = rng.choice(len(table.surnames), size=remaining.size,
                                      p=weights["surname_probs"])
        if not exclude_incompatible:
            break
        bad = ~compatible[g_idx[remaining], s_idx[remaining]]
        remaining = remaining[bad]
        if remaining.size == 0:
            break
    else:
        raise InfeasibleSpec("could not draw compatible (geoid, surname) pairs")
    y = geoid_effect_scale * geoid_effects(len(priors.geoids))[g_idx] + rng.standard_normal(n)
    return [
        BisgRecord(table.surnames[s], priors.geoids[g], float(v))
        for g, s, v in zip(g_idx, s_idx, y)
    ]


def modify_state_concentration(bundle: CensusBundle, race, target_total,
                               target_zero_fraction, seed) -> CensusBundle:
    """Retarget one race's total count and zero-count geoid fraction.

    Zero/nonzero conversions copy whole per-race records (count, margin of
    error, replicates) from randomly chosen donor geoids; the remaining
    nonzero counts, margins, and replicates are then scaled proportionally to
    hit the target total. Other races' columns are untouched.
    """
    priors = bundle.geo_priors
    reps = bundle.replicates
    r = priors.race_labels.index(race)
    counts = np.array(priors.counts)
    moes = np.array(priors.moes)
    rep_vals = np.array(reps.values)
    n = counts.shape[0]
    rng = substream(seed, 0)

    zero = np.flatnonzero(counts[:, r] == 0)
    nonzero = np.flatnonzero(counts[:, r] > 0)
    target_n_zero = round(n * target_zero_fraction)

    if target_n_zero > zero.size:
        # Convert nonzero geoids to zero by copying zero-cell records.
        need = target_n_zero - zero.size
        if zero.size == 0:
            raise InfeasibleTarget("no zero-count donor geoids for this race")
        if need > nonzero.size:
            raise InfeasibleTarget("not enough nonzero geoids to convert")
        recipients = rng.choice(nonzero, size=need, replace=False)
        donors = rng.choice(zero, size=need, replace=True)
        counts[recipients, r] = 0.0
        moes[recipients, r] = moes[donors, r]
        rep_vals[recipients, :, r] = rep_vals[donors, :, r]
    elif target_n_zero < zero.size:
        need = zero.size - target_n_zero
        if nonzero.size == 0:
            raise InfeasibleTarget("no nonzero donor geoids for this race")
        recipients = rng.choice(zero, size=need, replace=False)
        donors = rng.choice(nonzero, size=need, replace=True)
        counts[recipients, r] = counts[donors, r]
        moes[recipients, r] = moes[donors, r]
        rep_vals[recipients, :, r] = rep_vals[donors, :, r]

    current_total = counts[:, r].sum()
    if current_total <= 0 and target_total > 0:
        raise InfeasibleTarget("race has no counts to scale up from")
    if current_total > 0:
        factor = float(target_total) / current_total
        mask = counts[:, r] > 0
        counts[mask, r] *= factor
        moes[mask, r] *= factor
        rep_vals[mask, :, r] *= factor

    totals = priors.totals + (counts[:, r] - priors.counts[:, r])
    new_priors = GeoPriorTable(priors.geoids, counts, moes, totals, priors.race_labels)
    new_reps = VarianceReplicates(reps.geoids, rep_vals, reps.race_labels)
    return CensusBundle(new_priors, new_reps, bundle.surname_table)


def run_se_comparison(bundle: CensusBundle, weights, n_primary, repetitions,
                      draws, seed=0, jobs=1, geoid_effect_scale=0.0):
    """Average dual and single bootstrap standard errors per race.

    Returns a list of row dicts: race, dual_se_mean, dual_se_sd,
    single_se_mean, single_se_sd, repetitions.
    """
    if n_primary < 1:
        raise ValueError("n_primary must be >= 1")
    labels = bundle.race_labels
    covariance = build_geo_covariance(bundle, seed)

    def rep_task(rep):
        rng = substream(seed, rep, 0)
        records = draw_bisg_records(bundle, weights, n_primary, rng,
                                    geoid_effect_scale=geoid_effect_scale)
        ses = {}
        for mode in ("dual", "single"):
            config = BootstrapConfig(draws=draws, mode=mode,
                                     seed=_bootstrap_seed(seed, rep, 1))
            _, mat = bisg_mean_vector_draws(bundle, records, config,
                                            covariance=covariance)
            with np.errstate(invalid="ignore"):
                ses[mode] = np.array([
                    np.nanstd(mat[:, kk], ddof=1) if np.isfinite(mat[:, kk]).sum() >= 2
                    else np.nan
                    for kk in range(len(labels))
                ])
        return ses

    if jobs == 1:
        results = [rep_task(rep) for rep in range(repetitions)]
    else:
        results = Parallel(n_jobs=jobs)(
            delayed(rep_task)(rep) for rep in range(repetitions)
        )

    rows = []
    for kk, label in enumerate(labels):
        dual = np.array([res["dual"][kk] for res in results])
        single = np.array([res["single"][kk] for res in results])
        rows.append({
            "race": label,
            "dual_se_mean": float(np.nanmean(dual)),
            "dual_se_sd": float(np.nanstd(dual, ddof=1)) if repetitions > 1 else 0.0,
            "single_se_mean": float(np.nanmean(single)),
            "single_se_sd": float(np.nanstd(single, ddof=1)) if repetitions > 1 else 0.0,
            "repetitions": repetitions,
        })
    return rows


def run_concentration_sweep(bundle: CensusBundle, weights, race, totals,
                            zero_fractions, n_primary, repetitions, draws,
                            seed=0, jobs=1, geoid_effect_scale=0.0):
    """Dual/single SE grid over target totals and zero-count fractions."""
    rows = []
    for i, total in enumerate(totals):
        for j, frac in enumerate(zero_fractions):
            modified = modify_state_concentration(
                bundle, race, total, frac, seed=_bootstrap_seed(seed, i, j, 0)
            )
            table = run_se_comparison(
                modified, weights, n_primary, repetitions, draws,
                seed=_bootstrap_seed(seed, i, j, 1), jobs=jobs,
                geoid_effect_scale=geoid_effect_scale,
            )
            row = next(r for r in table if r["race"] == race)
            rows.append({
                "race": race, "target_total": total, "zero_fraction": frac,
                **{key: row[key] for key in
                   ("dual_se_mean", "dual_se_sd", "single_se_mean",
                    "single_se_sd", "repetitions")},
            })
    return rows


def write_rows_csv(rows, path):
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
