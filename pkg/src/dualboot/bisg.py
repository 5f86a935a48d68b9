"""Surname-geolocation race probabilities and their dual-bootstrap.

The imputation Bayes-updates a geolocation prior (census-style counts per
race) with a surname likelihood. Measurement uncertainty of the prior is
approximated by a normal sampling distribution whose covariance comes from
the 80 published variance replicates via the successive differences
replication formula; zero-count cells recover their variance from the
published margin of error instead.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bootstrap import (
    FAILED_DRAW_CEILING,
    STAGE_MODEL,
    STAGE_PRIMARY,
    STAGE_TRAIN,
    BootstrapConfig,
    BootstrapResult,
    percentile_interval,
    resample_with_replacement,
)
from .errors import (
    AllZeroDraw,
    DegenerateInputs,
    MissingGeoid,
    ReplicateCountMismatch,
    SchemaError,
    TooManyFailedDraws,
    ZeroWeight,
)
from .rng import substream

N_REPLICATES = 80
# Census margins of error are half-widths of 90% intervals.
MOE_TO_SE = 1.0 / 1.645
OTHER_SURNAME_KEY = "ALL OTHER NAMES"


@dataclass(frozen=True)
class SurnameTable:
    """Counts and race shares per surname, plus the aggregate Other bucket."""

    surnames: tuple
    counts: np.ndarray
    shares: np.ndarray  # (n_surnames, K), rows sum to 1
    race_labels: tuple
    suppressed_cells: int = 0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        shares = np.asarray(self.shares, dtype=float)
        object.__setattr__(self, "surnames", tuple(self.surnames))
        object.__setattr__(self, "race_labels", tuple(self.race_labels))
        if counts.min(initial=1) < 1:
            raise ValueError("surname counts must be >= 1")
        if shares.shape != (len(self.surnames), len(self.race_labels)):
            raise ValueError("shares shape does not match surnames x races")
        if np.max(np.abs(shares.sum(axis=1) - 1.0)) > 1e-6:
            raise ValueError("race shares must sum to 1 per surname")
        counts.setflags(write=False)
        shares.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "shares", shares)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.surnames)})

    @property
    def k(self):
        return len(self.race_labels)

    def row_index(self, surname):
        """Index of the surname, falling back to the Other bucket; None if neither."""
        idx = self._index.get(surname)
        if idx is None:
            idx = self._index.get(OTHER_SURNAME_KEY)
        return idx


def likelihood_matrix(counts, shares) -> np.ndarray:
    """Per-surname likelihoods: count*share normalized down each race column."""
    weighted = counts[:, None] * shares
    denom = weighted.sum(axis=0)
    out = np.zeros_like(weighted)
    np.divide(weighted, denom[None, :], out=out, where=denom[None, :] > 0)
    return out


def surname_likelihood(table: SurnameTable, surname, race) -> float:
    """Probability of the surname given the race implied by the table."""
    k = table.race_labels.index(race)
    return float(surname_likelihood_vector(table, surname)[k])


def surname_likelihood_vector(table: SurnameTable, surname) -> np.ndarray:
    idx = table.row_index(surname)
    if idx is None:
        # No Other bucket to fall back to: a flat likelihood leaves the
        # geolocation prior untouched.
        return np.ones(table.k)
    return likelihood_matrix(table.counts, table.shares)[idx]


def bisg_posterior(geo_prior, surname_lik) -> np.ndarray:
    """Bayes update of the geolocation prior by the surname likelihood.

    When the two are mutually exclusive (all products zero), the surname
    likelihood takes primacy and is returned normalized on its own.
    """
    prior = np.asarray(geo_prior, dtype=float)
    lik = np.asarray(surname_lik, dtype=float)
    if prior.min() < 0 or lik.min() < 0:
        raise ValueError("inputs must be nonnegative")
    lik_total = lik.sum()
    if lik_total <= 0.0:
        if prior.sum() <= 0.0:
            raise DegenerateInputs("both prior and likelihood are all zeros")
        return prior / prior.sum()
    product = prior * lik
    total = product.sum()
    if total <= 0.0:
        return lik / lik_total
    return product / total


def sdr_covariance(estimate, replicates) -> np.ndarray:
    """Successive differences replication covariance: (4/80) sum of outer products."""
    mu = np.asarray(estimate, dtype=float)
    reps = np.asarray(replicates, dtype=float)
    if reps.shape[0] != N_REPLICATES:
        raise ReplicateCountMismatch(
            f"expected {N_REPLICATES} replicate rows, got {reps.shape[0]}"
        )
    dev = reps - mu[None, :]
    cov = (4.0 / N_REPLICATES) * (dev.T @ dev)
    return psd_repair(cov)


def psd_repair(matrix) -> np.ndarray:
    """Clip negative eigenvalues to zero, preserving symmetry."""
    sym = 0.5 * (matrix + matrix.T)
    eigval, eigvec = np.linalg.eigh(sym)
    if eigval.min(initial=0.0) >= 0.0:
        return sym
    clipped = (eigvec * np.clip(eigval, 0.0, None)) @ eigvec.T
    return 0.5 * (clipped + clipped.T)


def psd_factor(matrix) -> np.ndarray:
    """Factor L with L L^T = matrix for a PSD matrix (eigen square root)."""
    eigval, eigvec = np.linalg.eigh(0.5 * (matrix + matrix.T))
    return eigvec * np.sqrt(np.clip(eigval, 0.0, None))


def discrete_uniform_max(moe: float) -> int:
    """Smallest integer M with Var(Uniform{0..M}) = M(M+2)/12 >= (moe/1.645)^2."""
    if moe < 0:
        raise ValueError("moe must be nonnegative")
    target = (moe * MOE_TO_SE) ** 2
    m = max(0, int(np.ceil(np.sqrt(12.0 * target + 1.0) - 1.0)) - 1)
    while m * (m + 2) / 12.0 < target:
        m += 1
    return m


def impute_zero_count_replicates(moe: float, rng: np.random.Generator) -> np.ndarray:
    """80 replicate counts for a zero-count cell, uniform on {0..M}."""
    m = discrete_uniform_max(moe)
    return rng.integers(0, m + 1, size=N_REPLICATES)


def sample_geo_prior(mu, sigma, rng: np.random.Generator, total=None,
                     factor=None) -> np.ndarray:
    """One draw of geolocation race shares from N(mu, sigma), clamped.

    Negative count draws clamp to 0 (and to `total` above, when given) before
    normalizing to shares. All-zero draws retry up to 10 times, then fall
    back to the normalized estimate.
    """
    mu = np.asarray(mu, dtype=float)
    if factor is None:
        factor = psd_factor(np.asarray(sigma, dtype=float))
    upper = np.inf if total is None else float(total)
    for _ in range(10):
        counts = np.clip(mu + factor @ rng.standard_normal(mu.shape[0]), 0.0, upper)
        s = counts.sum()
        if s > 0.0:
            return counts / s
    if mu.sum() <= 0.0:
        raise AllZeroDraw("every clamped draw and the estimate itself are all zeros")
    return mu / mu.sum()


@dataclass(frozen=True)
class GeoPriorTable:
    """Per-geoid race counts, margins of error, and totals."""

    geoids: tuple
    counts: np.ndarray  # (n_geoids, K)
    moes: np.ndarray  # (n_geoids, K)
    totals: np.ndarray  # (n_geoids,)
    race_labels: tuple

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        moes = np.asarray(self.moes, dtype=float)
        totals = np.asarray(self.totals, dtype=float)
        object.__setattr__(self, "geoids", tuple(self.geoids))
        object.__setattr__(self, "race_labels", tuple(self.race_labels))
        n, k = counts.shape
        if (n, k) != (len(self.geoids), len(self.race_labels)):
            raise ValueError("counts shape does not match geoids x races")
        if moes.shape != (n, k) or totals.shape != (n,):
            raise ValueError("moes/totals shapes do not match counts")
        if not np.all(np.isfinite(counts)) or counts.min(initial=0) < 0:
            raise ValueError("counts must be finite and nonnegative")
        if moes.min(initial=0) < 0:
            raise ValueError("margins of error must be nonnegative")
        if np.any(totals + 1e-9 < counts.max(axis=1)):
            raise ValueError("geoid total below its largest race count")
        for arr in (counts, moes, totals):
            arr.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "moes", moes)
        object.__setattr__(self, "totals", totals)
        object.__setattr__(self, "_index", {g: i for i, g in enumerate(self.geoids)})

    def index(self, geoid):
        idx = self._index.get(geoid)
        if idx is None:
            raise MissingGeoid(geoid)
        return idx


@dataclass(frozen=True)
class VarianceReplicates:
    """80 replicate count vectors per geoid."""

    geoids: tuple
    values: np.ndarray  # (n_geoids, 80, K)
    race_labels: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "geoids", tuple(self.geoids))
        object.__setattr__(self, "race_labels", tuple(self.race_labels))
        if vals.ndim != 3 or vals.shape[1] != N_REPLICATES:
            raise ReplicateCountMismatch(
                f"replicate array must be (n_geoids, {N_REPLICATES}, K), got {vals.shape}"
            )
        if vals.shape[0] != len(self.geoids) or vals.shape[2] != len(self.race_labels):
            raise ValueError("replicate array does not match geoids x races")
        if vals.min(initial=0) < 0:
            raise ValueError("replicate counts must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "_index", {g: i for i, g in enumerate(self.geoids)})

    def for_geoid(self, geoid):
        idx = self._index.get(geoid)
        if idx is None:
            raise MissingGeoid(geoid)
        return self.values[idx]


@dataclass(frozen=True)
class GeoCovariance:
    """Per-geoid sampling covariance of the race-count estimates."""

    geoids: tuple
    matrices: np.ndarray  # (n_geoids, K, K)

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        object.__setattr__(self, "geoids", tuple(self.geoids))
        mats.setflags(write=False)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "_index", {g: i for i, g in enumerate(self.geoids)})

    def for_geoid(self, geoid):
        idx = self._index.get(geoid)
        if idx is None:
            raise MissingGeoid(geoid)
        return self.matrices[idx]


@dataclass(frozen=True)
class BisgRecord:
    surname: str
    geoid: str
    outcome: float


@dataclass(frozen=True)
class CensusBundle:
    """Everything the imputation needs: priors, replicates, surnames."""

    geo_priors: GeoPriorTable
    replicates: VarianceReplicates
    surname_table: SurnameTable

    def __post_init__(self):
        if self.geo_priors.race_labels != self.surname_table.race_labels:
            raise ValueError("geo prior and surname race labels disagree")
        if self.replicates is not None:
            if self.replicates.race_labels != self.geo_priors.race_labels:
                raise ValueError("replicate race labels disagree with priors")
            if self.replicates.geoids != self.geo_priors.geoids:
                raise ValueError("replicate geoids disagree with priors")

    @property
    def race_labels(self):
        return self.geo_priors.race_labels


def build_geo_covariance(bundle: CensusBundle, seed: int) -> GeoCovariance:
    """SDR covariance per geoid with zero-count imputation.

    Zero-count cells (estimate 0, all replicates 0) get replicates imputed
    from the margin of error; their cross terms with other races are zeroed
    afterwards. The imputation stream depends only on the seed and the
    geoid/race position, so rebuilt covariances are identical.
    """
    priors = bundle.geo_priors
    reps = bundle.replicates
    n, k = priors.counts.shape
    mats = np.empty((n, k, k))
    for g in range(n):
        rep = np.array(reps.values[g])
        imputed = []
        for r in range(k):
            if priors.counts[g, r] == 0 and not rep[:, r].any():
                rng = substream(seed, g, r)
                rep[:, r] = impute_zero_count_replicates(priors.moes[g, r], rng)
                imputed.append(r)
        cov = sdr_covariance(priors.counts[g], rep)
        for r in imputed:
            own = cov[r, r]
            cov[r, :] = 0.0
            cov[:, r] = 0.0
            cov[r, r] = own
        mats[g] = psd_repair(cov)
    return GeoCovariance(priors.geoids, mats)


class BisgImputer:
    """Posterior machinery shared by the point estimate and the bootstrap."""

    def __init__(self, bundle: CensusBundle, records, covariance: GeoCovariance = None):
        self.bundle = bundle
        self.records = list(records)
        self.race_labels = bundle.race_labels
        priors = bundle.geo_priors
        self.geo_idx = np.array([priors.index(r.geoid) for r in self.records])
        self.outcomes = np.array([r.outcome for r in self.records], dtype=float)
        table = bundle.surname_table
        self.surname_idx = np.array(
            [self._require_surname_row(table, r.surname) for r in self.records]
        )
        self.base_lik = likelihood_matrix(table.counts, table.shares)
        row_sums = priors.counts.sum(axis=1)
        # Shares from counts: normalize by the row sum so they live on the simplex.
        self.base_prior = np.divide(
            priors.counts, np.where(row_sums > 0, row_sums, 1.0)[:, None]
        )
        if covariance is not None:
            self.factors = np.stack(
                [psd_factor(covariance.matrices[g]) for g in range(len(priors.geoids))]
            )
        else:
            self.factors = None

    @staticmethod
    def _require_surname_row(table, surname):
        idx = table.row_index(surname)
        return -1 if idx is None else idx

    def _lik_rows(self, lik):
        rows = np.empty((len(self.records), len(self.race_labels)))
        known = self.surname_idx >= 0
        rows[known] = lik[self.surname_idx[known]]
        rows[~known] = 1.0  # flat likelihood when no table row applies
        return rows

    def posteriors(self, prior_shares, lik) -> np.ndarray:
        """Posterior weight matrix over records, with surname primacy."""
        lik_rows = self._lik_rows(lik)
        prior_rows = prior_shares[self.geo_idx]
        product = prior_rows * lik_rows
        sums = product.sum(axis=1)
        exclusive = sums <= 0.0
        if np.any(exclusive):
            lik_sums = lik_rows[exclusive].sum(axis=1)
            if np.any(lik_sums <= 0.0):
                raise DegenerateInputs("record with all-zero prior and likelihood")
            product[exclusive] = lik_rows[exclusive] / lik_sums[:, None]
            sums[exclusive] = 1.0
        return product / sums[:, None]

    def sample_prior_shares(self, rng) -> np.ndarray:
        """One joint draw of all geoids' prior shares (dual mode)."""
        priors = self.bundle.geo_priors
        mu = priors.counts
        noise = rng.standard_normal(mu.shape)
        counts = mu + np.einsum("gkl,gl->gk", self.factors, noise)
        counts = np.clip(counts, 0.0, priors.totals[:, None])
        sums = counts.sum(axis=1)
        for _ in range(10):
            dead = sums <= 0.0
            if not np.any(dead):
                break
            redraw = mu[dead] + np.einsum(
                "gkl,gl->gk", self.factors[dead], rng.standard_normal(mu[dead].shape)
            )
            counts[dead] = np.clip(redraw, 0.0, priors.totals[dead, None])
            sums = counts.sum(axis=1)
        dead = sums <= 0.0
        if np.any(dead):
            counts[dead] = mu[dead]
            sums[dead] = mu[dead].sum(axis=1)
        return counts / sums[:, None]

    def resampled_likelihood(self, rng) -> np.ndarray:
        """Likelihoods after multinomial resampling of the surname microdata."""
        table = self.bundle.surname_table
        counts_int = np.rint(table.counts).astype(np.int64)
        resampled = rng.multinomial(counts_int, table.shares)
        shares = resampled / counts_int[:, None]
        return likelihood_matrix(table.counts, shares)


def group_statistic(weights, outcomes, race_labels, group_a, group_b=None) -> float:
    """Weighted mean for group_a, or the disparity against group_b."""
    ka = race_labels.index(group_a)
    wa = weights[:, ka]
    sa = wa.sum()
    if sa <= 0.0:
        raise ZeroWeight(group_a)
    mean_a = float(wa @ outcomes / sa)
    if group_b is None:
        return mean_a
    kb = race_labels.index(group_b)
    wb = weights[:, kb]
    sb = wb.sum()
    if sb <= 0.0:
        raise ZeroWeight(group_b)
    return mean_a - float(wb @ outcomes / sb)


def _mean_vector(weights, outcomes) -> np.ndarray:
    """Weighted mean per race column; NaN where a column has zero weight."""
    sums = weights.sum(axis=0)
    means = np.full(weights.shape[1], np.nan)
    ok = sums > 0.0
    means[ok] = (weights[:, ok].T @ outcomes) / sums[ok]
    return means


def bisg_mean_vector_draws(bundle: CensusBundle, records, config: BootstrapConfig,
                           resample_surnames=False, covariance: GeoCovariance = None):
    """Bootstrap draws of every race's weighted mean in one pass.

    Returns (point_vector, draws_matrix) where draws_matrix is (B, K) with
    NaN marking draws in which a race had zero total weight.
    """
    dual = config.mode == "dual"
    if dual and covariance is None:
        covariance = build_geo_covariance(bundle, config.seed)
    engine = BisgImputer(bundle, records, covariance if dual else None)
    n = len(engine.records)
    if n < 1:
        raise ValueError("no records supplied")

    fixed_weights = engine.posteriors(engine.base_prior, engine.base_lik)
    point = _mean_vector(fixed_weights, engine.outcomes)

    def draw(b):
        if dual:
            lik = engine.base_lik
            if resample_surnames:
                rng_s = substream(config.seed, b, STAGE_TRAIN)
                lik = engine.resampled_likelihood(rng_s)
            rng_g = substream(config.seed, b, STAGE_MODEL)
            prior = engine.sample_prior_shares(rng_g)
            weights = engine.posteriors(prior, lik)
        else:
            weights = fixed_weights
        rng_p = substream(config.seed, b, STAGE_PRIMARY)
        idx = resample_with_replacement(n, rng_p)
        return _mean_vector(weights[idx], engine.outcomes[idx])

    draws = np.vstack([draw(b) for b in range(config.draws)])
    return point, draws


def bisg_dual_bootstrap(bundle: CensusBundle, records, config: BootstrapConfig,
                        group_a, group_b=None, resample_surnames=False,
                        covariance: GeoCovariance = None) -> BootstrapResult:
    """Bootstrap a group mean or disparity under surname-geolocation imputation.

    Dual mode redraws every geoid's prior from its sampling distribution (and
    optionally resamples the surname microdata) each draw; single mode keeps
    the imputation fixed and resamples only the records.
    """
    labels = list(bundle.race_labels)
    if group_a not in labels:
        raise ValueError(f"unknown group {group_a!r}")
    if group_b is not None and group_b not in labels:
        raise ValueError(f"unknown group {group_b!r}")
    point_vec, draw_mat = bisg_mean_vector_draws(
        bundle, records, config, resample_surnames, covariance
    )
    ka = labels.index(group_a)
    if np.isnan(point_vec[ka]):
        raise ZeroWeight(group_a)
    values = draw_mat[:, ka]
    point = point_vec[ka]
    if group_b is not None:
        kb = labels.index(group_b)
        if np.isnan(point_vec[kb]):
            raise ZeroWeight(group_b)
        values = values - draw_mat[:, kb]
        point = point - point_vec[kb]
    keep = ~np.isnan(values)
    failed = int((~keep).sum())
    if failed > FAILED_DRAW_CEILING * config.draws:
        raise TooManyFailedDraws(failed, config.draws)
    draws = values[keep]
    interval = percentile_interval(draws, config.level)
    return BootstrapResult(
        draws=draws,
        point_estimate=float(point),
        interval=interval,
        standard_error=float(np.std(draws, ddof=1)),
        mode=config.mode,
        level=config.level,
        requested_draws=config.draws,
        failed_draws=failed,
        seed=config.seed,
    )


# ---------------------------------------------------------------------------
# CSV formats. Surnames: surname,count,share_<race>... (blank share =
# suppressed cell; remaining shares are renormalized). Geo priors:
# geoid,total,count_<race>...,moe_<race>... Replicates: geoid,race,rep_1..rep_80.

def _race_labels_from_header(fieldnames, prefix):
    labels = [c.removeprefix(prefix) for c in fieldnames if c.startswith(prefix)]
    if not labels:
        raise SchemaError(f"no `{prefix}*` columns found in header", line=1)
    return labels


def load_surname_csv(path) -> SurnameTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("empty file: missing header row", line=1)
        for col in ("surname", "count"):
            if col not in reader.fieldnames:
                raise SchemaError(f"missing required column {col!r}", line=1)
        labels = _race_labels_from_header(reader.fieldnames, "share_")
        surnames, counts, shares = [], [], []
        suppressed = 0
        for i, row in enumerate(reader, start=2):
            surnames.append(row["surname"])
            try:
                counts.append(int(row["count"]))
            except (TypeError, ValueError):
                raise SchemaError(f"column 'count': {row['count']!r} is not an integer",
                                  line=i) from None
            raw = []
            for lab in labels:
                cell = row[f"share_{lab}"]
                if cell is None or cell.strip() in ("", "(S)"):
                    raw.append(None)
                    suppressed += 1
                else:
                    raw.append(float(cell))
            given = sum(v for v in raw if v is not None)
            if given <= 0:
                raise SchemaError("all race shares suppressed or zero", line=i)
            # Suppressed cells: redistribute the missing mass proportionally.
            shares.append([0.0 if v is None else v / given for v in raw])
        return SurnameTable(surnames, np.array(counts, dtype=float),
                            np.array(shares), labels, suppressed_cells=suppressed)


def load_geo_csv(path) -> GeoPriorTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("empty file: missing header row", line=1)
        for col in ("geoid", "total"):
            if col not in reader.fieldnames:
                raise SchemaError(f"missing required column {col!r}", line=1)
        labels = _race_labels_from_header(reader.fieldnames, "count_")
        moe_labels = _race_labels_from_header(reader.fieldnames, "moe_")
        if set(labels) != set(moe_labels):
            raise SchemaError("count_* and moe_* race labels disagree", line=1)
        geoids, counts, moes, totals = [], [], [], []
        for i, row in enumerate(reader, start=2):
            geoids.append(row["geoid"])
            try:
                totals.append(float(row["total"]))
                counts.append([float(row[f"count_{lab}"]) for lab in labels])
                moes.append([float(row[f"moe_{lab}"]) for lab in labels])
            except (TypeError, ValueError) as exc:
                raise SchemaError(str(exc), line=i) from None
        return GeoPriorTable(geoids, np.array(counts), np.array(moes),
                             np.array(totals), labels)


def load_replicates_csv(path, geoids, race_labels) -> VarianceReplicates:
    """Replicates in long form, one row per (geoid, race)."""
    rep_cols = [f"rep_{r}" for r in range(1, N_REPLICATES + 1)]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("empty file: missing header row", line=1)
        for col in ("geoid", "race"):
            if col not in reader.fieldnames:
                raise SchemaError(f"missing required column {col!r}", line=1)
        present = [c for c in reader.fieldnames if c.startswith("rep_")]
        if len(present) != N_REPLICATES:
            raise SchemaError(
                f"ReplicateCountMismatch: found {len(present)} rep_* columns, "
                f"need {N_REPLICATES}", line=1,
            )
        g_index = {g: i for i, g in enumerate(geoids)}
        r_index = {r: i for i, r in enumerate(race_labels)}
        values = np.zeros((len(geoids), N_REPLICATES, len(race_labels)))
        seen = np.zeros((len(geoids), len(race_labels)), dtype=bool)
        for i, row in enumerate(reader, start=2):
            if row["geoid"] not in g_index:
                raise SchemaError(f"unknown geoid {row['geoid']!r}", line=i)
            if row["race"] not in r_index:
                raise SchemaError(f"unknown race {row['race']!r}", line=i)
            g, r = g_index[row["geoid"]], r_index[row["race"]]
            try:
                values[g, :, r] = [float(row[c]) for c in rep_cols]
            except (TypeError, ValueError) as exc:
                raise SchemaError(str(exc), line=i) from None
            seen[g, r] = True
        if not seen.all():
            g, r = np.argwhere(~seen)[0]
            raise SchemaError(
                f"no replicate row for geoid {geoids[g]!r}, race {race_labels[r]!r}"
            )
        return VarianceReplicates(geoids, values, race_labels)


def write_surname_csv(table: SurnameTable, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["surname", "count"] + [f"share_{lab}" for lab in table.race_labels])
        for i, name in enumerate(table.surnames):
            writer.writerow([name, int(table.counts[i])] + list(table.shares[i]))


def write_geo_csv(priors: GeoPriorTable, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        labels = priors.race_labels
        writer.writerow(["geoid", "total"] + [f"count_{lab}" for lab in labels]
                        + [f"moe_{lab}" for lab in labels])
        for i, g in enumerate(priors.geoids):
            writer.writerow([g, priors.totals[i]] + list(priors.counts[i])
                            + list(priors.moes[i]))


def write_replicates_csv(reps: VarianceReplicates, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["geoid", "race"] + [f"rep_{r}" for r in range(1, N_REPLICATES + 1)])
        for i, g in enumerate(reps.geoids):
            for r, lab in enumerate(reps.race_labels):
                writer.writerow([g, lab] + list(reps.values[i, :, r]))


def load_bisg_records_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("empty file: missing header row", line=1)
        for col in ("surname", "geoid", "outcome"):
            if col not in reader.fieldnames:
                raise SchemaError(f"missing required column {col!r}", line=1)
        records = []
        for i, row in enumerate(reader, start=2):
            try:
                outcome = float(row["outcome"])
            except (TypeError, ValueError):
                raise SchemaError(
                    f"column 'outcome': {row['outcome']!r} is not a number", line=i
                ) from None
            records.append(BisgRecord(row["surname"], row["geoid"], outcome))
        return records
