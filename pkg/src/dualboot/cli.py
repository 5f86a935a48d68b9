"""Command-line front end for estimation, bootstrapping, and simulation.

Exit codes: 2 for schema or configuration errors, 3 for estimation errors,
4 for records referencing geoids absent from the geo table. Every stochastic
command requires an explicit --seed; results are byte-identical across
--jobs values.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import click

from . import __version__
from .bisg import (
    CensusBundle,
    bisg_dual_bootstrap,
    load_bisg_records_csv,
    load_geo_csv,
    load_replicates_csv,
    load_surname_csv,
)
from .bootstrap import BootstrapConfig, run_bootstrap
from .data import load_primary_csv, load_training_csv
from .errors import DualbootError, SchemaError
from .logistic import ModelSpec
from .sandwich import empirical_result
from .simulate import (
    SyntheticCensusSpec,
    generate_synthetic_census,
    run_concentration_sweep,
    run_coverage_experiment,
    run_se_comparison,
    write_rows_csv,
)

EXIT_SCHEMA = 2
EXIT_ESTIMATION = 3
EXIT_GEOID = 4


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _require_seed(seed):
    if seed is None:
        _fail(EXIT_SCHEMA, "--seed is required for stochastic commands")
    return int(seed)


def _config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _write_manifest(out_dir: Path, command, config, seed, started, outputs):
    manifest = {
        "command": command,
        "config_digest": _config_digest(config),
        "seed": seed,
        "versions": f"dualboot {__version__}",
        "timing": time.perf_counter() - started,
        "outputs": [str(p) for p in outputs],
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _write_json(out_dir: Path, name, document) -> Path:
    path = out_dir / name
    path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    return path


@click.group()
@click.version_option(version=__version__)
def main():
    """Disparity estimation with imputation-aware uncertainty."""


@main.command()
@click.argument("training_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("primary_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["dual", "single", "empirical"]),
              default="dual", show_default=True)
@click.option("--group-a", required=True, help="Group whose mean is the minuend.")
@click.option("--group-b", required=True, help="Group whose mean is subtracted.")
@click.option("--b", "draws", default=500, show_default=True, help="Bootstrap draws.")
@click.option("--level", default=0.05, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--jobs", default=1, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=".",
              show_default=True)
def estimate(training_csv, primary_csv, method, group_a, group_b, draws, level,
             seed, jobs, out_dir):
    """Disparity between two groups from training and primary CSV files."""
    started = time.perf_counter()
    if method != "empirical":
        seed = _require_seed(seed)
    try:
        training = load_training_csv(training_csv)
        primary = load_primary_csv(primary_csv)
    except SchemaError as exc:
        _fail(EXIT_SCHEMA, exc)
    config = {
        "training": str(training_csv), "primary": str(primary_csv),
        "method": method, "group_a": group_a, "group_b": group_b,
        "b": draws, "level": level, "seed": seed,
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if method == "empirical":
            document = empirical_result(training, primary, level=level,
                                        positive_label=group_a)
        else:
            boot = BootstrapConfig(draws=draws, level=level, mode=method,
                                   seed=seed, jobs=jobs)
            document = run_bootstrap(training, primary, ModelSpec(), boot,
                                     group_a, group_b).to_json_dict()
    except ValueError as exc:
        _fail(EXIT_SCHEMA, exc)
    except DualbootError as exc:
        _fail(EXIT_ESTIMATION, f"{type(exc).__name__}: {exc}")
    result = _write_json(out, "result.json", document)
    _write_manifest(out, "estimate", config, seed, started, [result])
    click.echo(result)


def _load_bundle(geo_csv, replicates_csv, surnames_csv):
    priors = load_geo_csv(geo_csv)
    replicates = load_replicates_csv(replicates_csv, priors.geoids,
                                     priors.race_labels)
    surnames = load_surname_csv(surnames_csv)
    return CensusBundle(priors, replicates, surnames)


@main.command()
@click.argument("geo_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("replicates_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("surnames_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("records_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["dual", "single"]), default="dual",
              show_default=True)
@click.option("--group", "groups", multiple=True,
              help="Emit this group's weighted mean; repeatable.")
@click.option("--groups", "pair", default=None,
              help="Comma-separated pair a,b for a disparity.")
@click.option("--resample-surnames", is_flag=True, default=False)
@click.option("--b", "draws", default=500, show_default=True)
@click.option("--level", default=0.05, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--jobs", default=1, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=".",
              show_default=True)
def bisg(geo_csv, replicates_csv, surnames_csv, records_csv, method, groups,
         pair, resample_surnames, draws, level, seed, jobs, out_dir):
    """Group means or a disparity under surname-geolocation imputation."""
    started = time.perf_counter()
    seed = _require_seed(seed)
    try:
        bundle = _load_bundle(geo_csv, replicates_csv, surnames_csv)
        records = load_bisg_records_csv(records_csv)
    except SchemaError as exc:
        _fail(EXIT_SCHEMA, exc)
    known = set(bundle.geo_priors.geoids)
    unmatched = sorted({r.geoid for r in records} - known)
    if unmatched:
        _fail(EXIT_GEOID, "records reference unknown geoids: " + ", ".join(unmatched))
    if bool(groups) == bool(pair):
        _fail(EXIT_SCHEMA, "provide either --group (repeatable) or --groups a,b")

    config = {
        "geo": str(geo_csv), "replicates": str(replicates_csv),
        "surnames": str(surnames_csv), "records": str(records_csv),
        "method": method, "groups": list(groups) or pair,
        "resample_surnames": resample_surnames,
        "b": draws, "level": level, "seed": seed,
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    boot = BootstrapConfig(draws=draws, level=level, mode=method, seed=seed,
                           jobs=jobs)
    try:
        if pair:
            parts = [s.strip() for s in pair.split(",")]
            if len(parts) != 2:
                _fail(EXIT_SCHEMA, "--groups expects exactly two labels a,b")
            res = bisg_dual_bootstrap(bundle, records, boot, parts[0], parts[1],
                                      resample_surnames=resample_surnames)
            document = res.to_json_dict()
        else:
            document = {
                label: bisg_dual_bootstrap(
                    bundle, records, boot, label,
                    resample_surnames=resample_surnames,
                ).to_json_dict()
                for label in groups
            }
    except ValueError as exc:
        _fail(EXIT_SCHEMA, exc)
    except DualbootError as exc:
        _fail(EXIT_ESTIMATION, f"{type(exc).__name__}: {exc}")
    result = _write_json(out, "result.json", document)
    _write_manifest(out, "bisg", config, seed, started, [result])
    click.echo(result)


def _load_config(path: Path) -> dict:
    raw = path.read_bytes()
    try:
        if path.suffix == ".toml":
            return tomllib.loads(raw.decode("utf-8"))
        return json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise SchemaError(f"cannot parse config {path}: {exc}") from None


def _census_spec(config, seed):
    fields = {k: config[k] for k in (
        "n_geoids", "race_labels", "prevalence", "zero_count_fraction",
    )}
    for opt in ("replicate_noise_scale", "mean_geoid_total", "concentration",
                "zero_count_moe"):
        if opt in config:
            fields[opt] = config[opt]
    return SyntheticCensusSpec(seed=seed, **fields)


@main.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--jobs", default=1, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=".",
              show_default=True)
def simulate(config_file, seed, jobs, out_dir):
    """Run a coverage, bisg-se, or concentration-sweep experiment."""
    started = time.perf_counter()
    seed = _require_seed(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        config = _load_config(Path(config_file))
        kind = config.get("kind")
        if kind not in ("coverage", "bisg-se", "concentration-sweep"):
            raise SchemaError(f"unknown experiment kind {kind!r}")
        outputs = []
        if kind == "coverage":
            report = run_coverage_experiment(
                sizes=[tuple(s) for s in config["sizes"]],
                repetitions=int(config["repetitions"]),
                draws=int(config["draws"]),
                level=float(config.get("level", 0.05)),
                seed=seed, jobs=jobs,
            )
            summary, longform = out / "coverage.csv", out / "coverage_long.csv"
            report.to_csv(summary)
            report.to_long_csv(longform)
            outputs += [summary, longform]
        else:
            spec = _census_spec(config["census"], seed)
            bundle, weights = generate_synthetic_census(spec)
            if kind == "bisg-se":
                rows = run_se_comparison(
                    bundle, weights, int(config["n_primary"]),
                    int(config["repetitions"]), int(config["draws"]),
                    seed=seed, jobs=jobs,
                )
                path = out / "se_comparison.csv"
            else:
                rows = run_concentration_sweep(
                    bundle, weights, config["race"],
                    [float(t) for t in config["totals"]],
                    [float(f) for f in config["zero_fractions"]],
                    int(config["n_primary"]), int(config["repetitions"]),
                    int(config["draws"]), seed=seed, jobs=jobs,
                )
                path = out / "concentration_sweep.csv"
            write_rows_csv(rows, path)
            outputs.append(path)
    except (SchemaError, KeyError, TypeError, ValueError) as exc:
        _fail(EXIT_SCHEMA, exc)
    except DualbootError as exc:
        _fail(EXIT_ESTIMATION, f"{type(exc).__name__}: {exc}")
    _write_manifest(out, "simulate", config, seed, started, outputs)
    for path in outputs:
        click.echo(path)


@main.command()
@click.option("--training", type=click.Path(exists=True, dir_okay=False))
@click.option("--primary", type=click.Path(exists=True, dir_okay=False))
@click.option("--geo", type=click.Path(exists=True, dir_okay=False))
@click.option("--replicates", type=click.Path(exists=True, dir_okay=False),
              help="Requires --geo for geoid and race-label closure.")
@click.option("--surnames", type=click.Path(exists=True, dir_okay=False))
@click.option("--records", type=click.Path(exists=True, dir_okay=False))
def validate(training, primary, geo, replicates, surnames, records):
    """Check files against their schemas without running any estimation."""
    checks = []
    try:
        if training:
            load_training_csv(training)
            checks.append(("training", training))
        if primary:
            load_primary_csv(primary)
            checks.append(("primary", primary))
        priors = None
        if geo:
            priors = load_geo_csv(geo)
            checks.append(("geo", geo))
        if replicates:
            if priors is None:
                _fail(EXIT_SCHEMA, "--replicates requires --geo")
            load_replicates_csv(replicates, priors.geoids, priors.race_labels)
            checks.append(("replicates", replicates))
        if surnames:
            load_surname_csv(surnames)
            checks.append(("surnames", surnames))
        if records:
            load_bisg_records_csv(records)
            checks.append(("records", records))
    except SchemaError as exc:
        _fail(EXIT_SCHEMA, exc)
    if not checks:
        _fail(EXIT_SCHEMA, "no files supplied")
    for kind, path in checks:
        click.echo(f"ok: {kind} {path}")


if __name__ == "__main__":
    main()
