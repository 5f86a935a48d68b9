import numpy as np
import pytest

from dualboot.bisg import (
    BisgImputer,
    BisgRecord,
    CensusBundle,
    GeoPriorTable,
    SurnameTable,
    VarianceReplicates,
    bisg_dual_bootstrap,
    bisg_posterior,
    build_geo_covariance,
    discrete_uniform_max,
    group_statistic,
    impute_zero_count_replicates,
    likelihood_matrix,
    load_geo_csv,
    load_replicates_csv,
    load_surname_csv,
    load_bisg_records_csv,
    psd_factor,
    psd_repair,
    sample_geo_prior,
    sdr_covariance,
    surname_likelihood,
    surname_likelihood_vector,
    write_geo_csv,
    write_replicates_csv,
    write_surname_csv,
)
from dualboot.bootstrap import STAGE_PRIMARY, BootstrapConfig, resample_with_replacement
from dualboot.errors import (
    DegenerateInputs,
    MissingGeoid,
    ReplicateCountMismatch,
    SchemaError,
    ZeroWeight,
)
from dualboot.rng import substream

from conftest import build_bundle


def make_records(bundle, n=120, seed=44):
    rng = substream(seed, 0)
    geoids = bundle.geo_priors.geoids
    surnames = bundle.surname_table.surnames
    return [
        BisgRecord(
            surnames[rng.integers(0, len(surnames))],
            geoids[rng.integers(0, len(geoids))],
            float(rng.standard_normal()),
        )
        for _ in range(n)
    ]


class TestSurnameLikelihood:
    def test_single_surname_gives_one(self):
        table = SurnameTable(["ONLY"], np.array([10.0]),
                             np.array([[0.6, 0.4]]), ("a", "b"))
        assert surname_likelihood(table, "ONLY", "a") == 1.0
        assert surname_likelihood(table, "ONLY", "b") == 1.0

    def test_two_surnames_normalized_by_counts(self):
        table = SurnameTable(["X", "Y"], np.array([100.0, 300.0]),
                             np.array([[1.0, 0.0], [1.0, 0.0]]), ("a", "b"))
        assert surname_likelihood(table, "X", "a") == pytest.approx(0.25)
        assert surname_likelihood(table, "Y", "a") == pytest.approx(0.75)

    def test_unknown_surname_falls_back_to_other_bucket(self):
        table = SurnameTable(["X", "ALL OTHER NAMES"], np.array([100.0, 900.0]),
                             np.array([[0.5, 0.5], [0.3, 0.7]]), ("a", "b"))
        vec = surname_likelihood_vector(table, "NOT-IN-TABLE")
        other = likelihood_matrix(table.counts, table.shares)[1]
        assert vec == pytest.approx(other)

    def test_unknown_surname_without_other_bucket_is_flat(self):
        table = SurnameTable(["X"], np.array([100.0]),
                             np.array([[0.5, 0.5]]), ("a", "b"))
        assert surname_likelihood_vector(table, "NOT-IN-TABLE") == pytest.approx([1.0, 1.0])


class TestBisgPosterior:
    def test_hand_bayes(self):
        out = bisg_posterior([0.5, 0.5], [0.9, 0.1])
        assert out == pytest.approx([0.9, 0.1])

    def test_uniform_likelihood_returns_normalized_prior(self):
        out = bisg_posterior([2.0, 6.0], [0.3, 0.3])
        assert out == pytest.approx([0.25, 0.75])

    def test_surname_primacy_on_exclusive_inputs(self):
        out = bisg_posterior([0.0, 1.0], [1.0, 0.0])
        assert out == pytest.approx([1.0, 0.0])

    def test_both_zero_rejected(self):
        with pytest.raises(DegenerateInputs):
            bisg_posterior([0.0, 0.0], [0.0, 0.0])

    def test_simplex_invariant_on_random_inputs(self):
        rng = substream(3, 0)
        for _ in range(200):
            prior = rng.random(4) * (rng.random(4) > 0.3)
            lik = rng.random(4) * (rng.random(4) > 0.3)
            if lik.sum() == 0 and prior.sum() == 0:
                continue
            out = bisg_posterior(prior, lik)
            assert out.sum() == pytest.approx(1.0, abs=1e-9)
            assert out.min() >= 0.0 and out.max() <= 1.0


class TestSdrCovariance:
    def test_identical_replicates_give_zero(self):
        mu = np.array([10.0, 20.0])
        reps = np.tile(mu, (80, 1))
        assert sdr_covariance(mu, reps) == pytest.approx(np.zeros((2, 2)))

    def test_single_deviation_hand_formula(self):
        mu = np.array([10.0, 20.0])
        reps = np.tile(mu, (80, 1))
        d = 3.0
        reps[17, 0] += d
        cov = sdr_covariance(mu, reps)
        assert cov[0, 0] == pytest.approx(4.0 * d**2 / 80.0)
        assert cov[0, 1] == 0.0 and cov[1, 1] == 0.0

    def test_matches_double_loop_oracle_exactly(self):
        rng = substream(5, 0)
        for _ in range(100):
            k = int(rng.integers(2, 5))
            mu = rng.random(k) * 10
            reps = mu[None, :] + rng.standard_normal((80, k))
            cov = sdr_covariance(mu, reps)
            oracle = np.zeros((k, k))
            for r in range(80):
                dev = reps[r] - mu
                oracle += np.outer(dev, dev)
            oracle *= 4.0 / 80.0
            assert np.max(np.abs(cov - oracle)) < 1e-10
            assert np.max(np.abs(cov - cov.T)) == 0.0
            assert np.linalg.eigvalsh(cov).min() >= -1e-10

    def test_replicate_count_checked(self):
        with pytest.raises(ReplicateCountMismatch):
            sdr_covariance(np.zeros(2), np.zeros((79, 2)))


class TestZeroCountImputation:
    def test_zero_moe_gives_zero_max(self):
        assert discrete_uniform_max(0.0) == 0
        rng = substream(1, 0)
        assert (impute_zero_count_replicates(0.0, rng) == 0).all()

    def test_variance_two_gives_max_four(self):
        moe = 1.645 * np.sqrt(2.0)
        assert discrete_uniform_max(moe) == 4
        draws = impute_zero_count_replicates(moe, substream(2, 0))
        assert draws.min() >= 0 and draws.max() <= 4
        assert len(draws) == 80

    def test_monotone_in_moe(self):
        moes = np.linspace(0.0, 40.0, 200)
        maxima = [discrete_uniform_max(m) for m in moes]
        assert all(b >= a for a, b in zip(maxima, maxima[1:]))

    def test_cross_terms_zeroed_for_imputed_cells(self, small_bundle):
        cov = build_geo_covariance(small_bundle, seed=9)
        priors = small_bundle.geo_priors
        for g, geoid in enumerate(priors.geoids):
            if priors.counts[g, 1] == 0:
                mat = cov.for_geoid(geoid)
                assert mat[0, 1] == 0.0 and mat[1, 0] == 0.0
                assert mat[1, 1] > 0.0  # variance recovered from the moe

    def test_rebuild_is_deterministic(self, small_bundle):
        a = build_geo_covariance(small_bundle, seed=4)
        b = build_geo_covariance(small_bundle, seed=4)
        assert (a.matrices == b.matrices).all()


class TestSampleGeoPrior:
    def test_zero_covariance_returns_normalized_estimate(self):
        mu = np.array([30.0, 10.0])
        out = sample_geo_prior(mu, np.zeros((2, 2)), substream(0, 0))
        assert (out == mu / mu.sum()).all()

    def test_seeded_reproducibility(self):
        mu = np.array([30.0, 10.0])
        sigma = np.array([[4.0, 1.0], [1.0, 2.0]])
        a = sample_geo_prior(mu, sigma, substream(7, 1))
        b = sample_geo_prior(mu, sigma, substream(7, 1))
        assert (a == b).all()

    def test_monte_carlo_mean_matches_away_from_boundary(self):
        mu = np.array([200.0, 150.0, 100.0])
        sigma = np.diag([25.0, 16.0, 9.0]).astype(float)
        rng = substream(8, 0)
        draws = np.vstack([sample_geo_prior(mu, sigma, rng) for _ in range(10_000)])
        target = mu / mu.sum()
        # All coordinates are far from 0 relative to their sd, so clamping
        # bias is negligible and the 4-sigma Monte Carlo band applies.
        mc_se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
        assert (np.abs(draws.mean(axis=0) - target) < 4.0 * mc_se + 1e-4).all()

    def test_clamps_negative_coordinates(self):
        mu = np.array([1.0, 50.0])
        sigma = np.diag([400.0, 0.0]).astype(float)
        rng = substream(9, 0)
        draws = np.vstack([sample_geo_prior(mu, sigma, rng) for _ in range(500)])
        assert draws.min() >= 0.0
        assert draws.sum(axis=1) == pytest.approx(1.0)


class TestPsdRepair:
    def test_indefinite_matrix_becomes_psd(self):
        mat = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
        fixed = psd_repair(mat)
        assert np.linalg.eigvalsh(fixed).min() >= -1e-12

    def test_psd_matrix_unchanged(self):
        mat = np.array([[2.0, 1.0], [1.0, 2.0]])
        assert psd_repair(mat) == pytest.approx(mat)

    def test_factor_squares_back(self):
        mat = np.array([[4.0, 1.0], [1.0, 3.0]])
        factor = psd_factor(mat)
        assert factor @ factor.T == pytest.approx(mat)


class TestSurnameResampling:
    def test_resampled_shares_unbiased(self, small_bundle):
        engine = BisgImputer(small_bundle, make_records(small_bundle, n=5))
        table = small_bundle.surname_table
        rng = substream(10, 0)
        total = np.zeros_like(table.shares)
        n_draws = 10_000
        counts_int = np.rint(table.counts).astype(np.int64)
        for _ in range(n_draws):
            resampled = rng.multinomial(counts_int, table.shares)
            total += resampled / counts_int[:, None]
        mean_shares = total / n_draws
        mc_se = np.sqrt(table.shares * (1 - table.shares) / counts_int[:, None] / n_draws)
        assert (np.abs(mean_shares - table.shares) <= 4.0 * mc_se + 1e-12).all()

    def test_resampled_likelihood_columns_normalized(self, small_bundle):
        engine = BisgImputer(small_bundle, make_records(small_bundle, n=5))
        lik = engine.resampled_likelihood(substream(11, 0))
        assert lik.sum(axis=0) == pytest.approx(1.0)


class TestBisgBootstrap:
    def test_zero_covariance_collapses_dual_to_single(self):
        races = ("maj", "min")
        geoids = ["Z00", "Z01", "Z02"]
        counts = np.full((3, 2), 40.0)
        moes = np.full((3, 2), 5.0)
        reps = np.repeat(counts[:, None, :], 80, axis=1)
        bundle = CensusBundle(
            GeoPriorTable(geoids, counts, moes, counts.sum(axis=1), races),
            VarianceReplicates(geoids, reps, races),
            SurnameTable(["S1", "S2"], np.array([100.0, 300.0]),
                         np.array([[0.8, 0.2], [0.3, 0.7]]), races),
        )
        records = make_records(bundle, n=80, seed=12)
        out = {}
        for mode in ("dual", "single"):
            config = BootstrapConfig(draws=100, mode=mode, seed=21)
            out[mode] = bisg_dual_bootstrap(bundle, records, config, "maj", "min")
        assert (out["dual"].draws == out["single"].draws).all()
        assert out["dual"].standard_error == out["single"].standard_error

    def test_single_geoid_uniform_surname_reduces_to_plain_resampling(self):
        # One geoid and a surname with uniform shares: the posterior weights
        # are constant across records within a draw, so every group-mean draw
        # collapses to the resampled outcome mean. Oracle: direct resampling
        # with the same substreams.
        races = ("a", "b")
        counts = np.array([[60.0, 40.0]])
        reps = counts[None, :, :].repeat(80, axis=1) + substream(1, 0).standard_normal((1, 80, 2))
        bundle = CensusBundle(
            GeoPriorTable(["G0"], counts, np.array([[3.0, 3.0]]),
                          counts.sum(axis=1), races),
            VarianceReplicates(["G0"], np.clip(reps, 0, None), races),
            SurnameTable(["U"], np.array([100.0]), np.array([[0.5, 0.5]]), races),
        )
        rng = substream(2, 0)
        records = [BisgRecord("U", "G0", float(v))
                   for v in rng.standard_normal(50)]
        config = BootstrapConfig(draws=60, mode="dual", seed=33)
        res = bisg_dual_bootstrap(bundle, records, config, "a")
        y = np.array([r.outcome for r in records])
        oracle = np.array([
            y[resample_with_replacement(50, substream(33, b, STAGE_PRIMARY))].mean()
            for b in range(60)
        ])
        assert res.draws == pytest.approx(oracle, abs=1e-12)

    def test_mode_and_jobs_deterministic(self, small_bundle):
        records = make_records(small_bundle)
        cov = build_geo_covariance(small_bundle, seed=1)
        runs = [
            bisg_dual_bootstrap(
                small_bundle, records,
                BootstrapConfig(draws=50, mode="dual", seed=5, jobs=jobs),
                "min", covariance=cov,
            )
            for jobs in (1, 4)
        ]
        assert (runs[0].draws == runs[1].draws).all()

    def test_resample_surnames_changes_draws(self, small_bundle):
        records = make_records(small_bundle)
        cov = build_geo_covariance(small_bundle, seed=1)
        base = bisg_dual_bootstrap(
            small_bundle, records, BootstrapConfig(draws=50, mode="dual", seed=5),
            "min", covariance=cov,
        )
        resampled = bisg_dual_bootstrap(
            small_bundle, records, BootstrapConfig(draws=50, mode="dual", seed=5),
            "min", resample_surnames=True, covariance=cov,
        )
        assert not np.allclose(base.draws, resampled.draws)

    def test_unknown_group_rejected(self, small_bundle):
        records = make_records(small_bundle)
        with pytest.raises(ValueError):
            bisg_dual_bootstrap(
                small_bundle, records, BootstrapConfig(draws=10, seed=0), "zzz"
            )

    def test_missing_geoid_raises(self, small_bundle):
        records = [BisgRecord("SMITH", "NOPE", 0.0)]
        with pytest.raises(MissingGeoid):
            bisg_dual_bootstrap(
                small_bundle, records, BootstrapConfig(draws=10, seed=0), "maj"
            )


class TestGroupStatistic:
    def test_mean_and_disparity(self):
        weights = np.array([[0.8, 0.2], [0.2, 0.8], [0.5, 0.5]])
        y = np.array([1.0, 0.0, 2.0])
        labels = ("a", "b")
        assert group_statistic(weights, y, labels, "a") == pytest.approx(1.2)
        assert group_statistic(weights, y, labels, "a", "b") == pytest.approx(0.4)

    def test_zero_weight(self):
        weights = np.array([[1.0, 0.0]])
        with pytest.raises(ZeroWeight):
            group_statistic(weights, np.array([1.0]), ("a", "b"), "b")


class TestCsvRoundTrips:
    def test_geo_roundtrip(self, small_bundle, tmp_path):
        path = tmp_path / "geo.csv"
        write_geo_csv(small_bundle.geo_priors, path)
        loaded = load_geo_csv(path)
        assert loaded.geoids == small_bundle.geo_priors.geoids
        assert loaded.counts == pytest.approx(small_bundle.geo_priors.counts)
        assert loaded.moes == pytest.approx(small_bundle.geo_priors.moes)

    def test_replicates_roundtrip(self, small_bundle, tmp_path):
        path = tmp_path / "reps.csv"
        write_replicates_csv(small_bundle.replicates, path)
        loaded = load_replicates_csv(
            path, small_bundle.geo_priors.geoids, small_bundle.race_labels
        )
        assert loaded.values == pytest.approx(small_bundle.replicates.values)

    def test_surname_roundtrip(self, small_bundle, tmp_path):
        path = tmp_path / "surnames.csv"
        write_surname_csv(small_bundle.surname_table, path)
        loaded = load_surname_csv(path)
        assert loaded.surnames == small_bundle.surname_table.surnames
        assert loaded.shares == pytest.approx(small_bundle.surname_table.shares)

    def test_suppressed_shares_renormalized(self, tmp_path):
        path = tmp_path / "surnames.csv"
        path.write_text(
            "surname,count,share_a,share_b,share_c\n"
            "X,100,0.6,(S),0.2\n"
        )
        table = load_surname_csv(path)
        assert table.suppressed_cells == 1
        assert table.shares[0] == pytest.approx([0.75, 0.0, 0.25])

    def test_replicate_count_mismatch_cited(self, fixtures_dir):
        priors = load_geo_csv(fixtures_dir / "geo.csv")
        with pytest.raises(SchemaError, match="ReplicateCountMismatch"):
            load_replicates_csv(
                fixtures_dir / "replicates_79.csv", priors.geoids, priors.race_labels
            )

    def test_records_roundtrip(self, fixtures_dir):
        records = load_bisg_records_csv(fixtures_dir / "records.csv")
        assert len(records) == 150
        assert isinstance(records[0], BisgRecord)
