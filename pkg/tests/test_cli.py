import json

import pytest
from click.testing import CliRunner

from dualboot.bisg import (
    CensusBundle,
    bisg_dual_bootstrap,
    load_bisg_records_csv,
    load_geo_csv,
    load_replicates_csv,
    load_surname_csv,
)
from dualboot.bootstrap import BootstrapConfig
from dualboot.cli import main
from dualboot.data import load_primary_csv, load_training_csv
from dualboot.sandwich import empirical_result


@pytest.fixture
def runner():
    return CliRunner()


def run(runner, args):
    return runner.invoke(main, args, catch_exceptions=False)


class TestEstimate:
    def test_dual_is_byte_identical_across_runs(self, runner, fixtures_dir, tmp_path):
        args = [
            "estimate", str(fixtures_dir / "training.csv"),
            str(fixtures_dir / "primary.csv"),
            "--method", "dual", "--group-a", "g1", "--group-b", "g0",
            "--b", "100", "--level", "0.05", "--seed", "7",
        ]
        bodies = []
        for name in ("one", "two"):
            out = tmp_path / name
            res = run(runner, args + ["--out-dir", str(out)])
            assert res.exit_code == 0, res.output
            bodies.append((out / "result.json").read_bytes())
        assert bodies[0] == bodies[1]

    def test_empirical_matches_library_output(self, runner, fixtures_dir, tmp_path):
        res = run(runner, [
            "estimate", str(fixtures_dir / "training.csv"),
            str(fixtures_dir / "primary.csv"),
            "--method", "empirical", "--group-a", "g1", "--group-b", "g0",
            "--out-dir", str(tmp_path),
        ])
        assert res.exit_code == 0, res.output
        doc = json.loads((tmp_path / "result.json").read_text())
        expected = empirical_result(
            load_training_csv(fixtures_dir / "training.csv"),
            load_primary_csv(fixtures_dir / "primary.csv"),
            positive_label="g1",
        )
        assert doc == expected

    def test_missing_outcome_column_exits_2_naming_it(self, runner, fixtures_dir,
                                                     tmp_path):
        res = run(runner, [
            "estimate", str(fixtures_dir / "training.csv"),
            str(fixtures_dir / "primary_no_outcome.csv"),
            "--group-a", "g1", "--group-b", "g0", "--seed", "1",
            "--out-dir", str(tmp_path),
        ])
        assert res.exit_code == 2
        assert "outcome" in res.output

    def test_seed_required_for_bootstrap(self, runner, fixtures_dir, tmp_path):
        res = run(runner, [
            "estimate", str(fixtures_dir / "training.csv"),
            str(fixtures_dir / "primary.csv"),
            "--group-a", "g1", "--group-b", "g0", "--out-dir", str(tmp_path),
        ])
        assert res.exit_code == 2
        assert "--seed" in res.output

    def test_manifest_written(self, runner, fixtures_dir, tmp_path):
        res = run(runner, [
            "estimate", str(fixtures_dir / "training.csv"),
            str(fixtures_dir / "primary.csv"),
            "--group-a", "g1", "--group-b", "g0", "--seed", "3",
            "--b", "60", "--out-dir", str(tmp_path),
        ])
        assert res.exit_code == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "estimate"
        assert manifest["seed"] == 3
        assert len(manifest["config_digest"]) == 64
        assert manifest["timing"] >= 0
        assert manifest["outputs"] == [str(tmp_path / "result.json")]


class TestBisg:
    def bundle_args(self, fixtures_dir, suffix=""):
        return [
            str(fixtures_dir / f"geo{suffix}.csv"),
            str(fixtures_dir / f"replicates{suffix}.csv"),
            str(fixtures_dir / "surnames.csv"),
            str(fixtures_dir / f"records{suffix}.csv"),
        ]

    def test_matches_library_bitwise(self, runner, fixtures_dir, tmp_path):
        res = run(runner, ["bisg", *self.bundle_args(fixtures_dir),
                           "--groups", "maj,min", "--b", "80", "--seed", "3",
                           "--out-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        doc = json.loads((tmp_path / "result.json").read_text())
        priors = load_geo_csv(fixtures_dir / "geo.csv")
        bundle = CensusBundle(
            priors,
            load_replicates_csv(fixtures_dir / "replicates.csv",
                                priors.geoids, priors.race_labels),
            load_surname_csv(fixtures_dir / "surnames.csv"),
        )
        records = load_bisg_records_csv(fixtures_dir / "records.csv")
        expected = bisg_dual_bootstrap(
            bundle, records, BootstrapConfig(draws=80, mode="dual", seed=3),
            "maj", "min",
        ).to_json_dict()
        assert doc == expected

    def test_zero_covariance_fixture_gives_equal_ses(self, runner, fixtures_dir,
                                                     tmp_path):
        ses = {}
        for mode in ("dual", "single"):
            out = tmp_path / mode
            res = run(runner, ["bisg", *self.bundle_args(fixtures_dir, "_zero_cov"),
                               "--method", mode, "--groups", "maj,min",
                               "--b", "80", "--seed", "5", "--out-dir", str(out)])
            assert res.exit_code == 0, res.output
            ses[mode] = json.loads((out / "result.json").read_text())["standard_error"]
        assert ses["dual"] == ses["single"]

    def test_group_means_mode(self, runner, fixtures_dir, tmp_path):
        res = run(runner, ["bisg", *self.bundle_args(fixtures_dir),
                           "--group", "maj", "--group", "min",
                           "--b", "60", "--seed", "2", "--out-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        doc = json.loads((tmp_path / "result.json").read_text())
        assert set(doc) == {"maj", "min"}

    def test_short_replicates_exit_2_citing_mismatch(self, runner, fixtures_dir,
                                                     tmp_path):
        res = run(runner, ["bisg", str(fixtures_dir / "geo.csv"),
                           str(fixtures_dir / "replicates_79.csv"),
                           str(fixtures_dir / "surnames.csv"),
                           str(fixtures_dir / "records.csv"),
                           "--groups", "maj,min", "--seed", "1",
                           "--out-dir", str(tmp_path)])
        assert res.exit_code == 2
        assert "ReplicateCountMismatch" in res.output

    def test_unknown_geoids_exit_4_listing_them(self, runner, fixtures_dir,
                                                tmp_path):
        bad = tmp_path / "bad_records.csv"
        bad.write_text("surname,geoid,outcome\nSMITH,NOPE1,0.5\nSMITH,NOPE2,0.1\n")
        res = run(runner, ["bisg", str(fixtures_dir / "geo.csv"),
                           str(fixtures_dir / "replicates.csv"),
                           str(fixtures_dir / "surnames.csv"), str(bad),
                           "--groups", "maj,min", "--seed", "1",
                           "--out-dir", str(tmp_path)])
        assert res.exit_code == 4
        assert "NOPE1" in res.output and "NOPE2" in res.output

    def test_group_flags_mutually_exclusive(self, runner, fixtures_dir, tmp_path):
        res = run(runner, ["bisg", *self.bundle_args(fixtures_dir),
                           "--seed", "1", "--out-dir", str(tmp_path)])
        assert res.exit_code == 2


class TestSimulate:
    def test_coverage_config_writes_reports(self, runner, tmp_path):
        config = tmp_path / "cov.json"
        config.write_text(json.dumps({
            "kind": "coverage", "sizes": [[60, 200]],
            "repetitions": 2, "draws": 60,
        }))
        out = tmp_path / "out"
        res = run(runner, ["simulate", str(config), "--seed", "5",
                           "--out-dir", str(out)])
        assert res.exit_code == 0, res.output
        header = (out / "coverage.csv").read_text().splitlines()[0]
        for col in ("n_train", "n_primary", "method", "coverage_rate",
                    "mean_width", "repetitions"):
            assert col in header
        assert (out / "coverage_long.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "simulate"

    def test_toml_concentration_sweep(self, runner, tmp_path):
        config = tmp_path / "sweep.toml"
        config.write_text(
            'kind = "concentration-sweep"\n'
            'race = "min"\n'
            "totals = [300]\n"
            "zero_fractions = [0.4]\n"
            "n_primary = 80\n"
            "repetitions = 1\n"
            "draws = 40\n\n"
            "[census]\n"
            "n_geoids = 40\n"
            'race_labels = ["maj", "min"]\n'
            "prevalence = [0.9, 0.1]\n"
            "zero_count_fraction = [0.0, 0.5]\n"
        )
        out = tmp_path / "out"
        res = run(runner, ["simulate", str(config), "--seed", "9",
                           "--out-dir", str(out)])
        assert res.exit_code == 0, res.output
        body = (out / "concentration_sweep.csv").read_text()
        assert "zero_fraction" in body

    def test_empty_sizes_exits_2(self, runner, tmp_path):
        config = tmp_path / "cov.json"
        config.write_text(json.dumps({
            "kind": "coverage", "sizes": [], "repetitions": 1, "draws": 50,
        }))
        res = run(runner, ["simulate", str(config), "--seed", "1",
                           "--out-dir", str(tmp_path / "out")])
        assert res.exit_code == 2

    def test_unknown_kind_exits_2(self, runner, tmp_path):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"kind": "mystery"}))
        res = run(runner, ["simulate", str(config), "--seed", "1",
                           "--out-dir", str(tmp_path / "out")])
        assert res.exit_code == 2


class TestValidate:
    def test_all_fixture_files_pass(self, runner, fixtures_dir):
        res = run(runner, [
            "validate",
            "--training", str(fixtures_dir / "training.csv"),
            "--primary", str(fixtures_dir / "primary.csv"),
            "--geo", str(fixtures_dir / "geo.csv"),
            "--replicates", str(fixtures_dir / "replicates.csv"),
            "--surnames", str(fixtures_dir / "surnames.csv"),
            "--records", str(fixtures_dir / "records.csv"),
        ])
        assert res.exit_code == 0, res.output
        assert res.output.count("ok:") == 6

    def test_bad_file_exits_2(self, runner, fixtures_dir):
        res = run(runner, [
            "validate", "--primary", str(fixtures_dir / "primary_no_outcome.csv"),
        ])
        assert res.exit_code == 2

    def test_no_files_exits_2(self, runner):
        res = run(runner, ["validate"])
        assert res.exit_code == 2

    def test_replicates_requires_geo(self, runner, fixtures_dir):
        res = run(runner, [
            "validate", "--replicates", str(fixtures_dir / "replicates.csv"),
        ])
        assert res.exit_code == 2
