"""Command-line front end: ``hetfac analyze``, ``hetfac test`` and
``hetfac simulate``.

Every command accepts a TOML config file mirroring its flags; flags win over
the file.  The worker count comes from the ``HETFAC_WORKERS`` environment
variable only.  All pipeline errors are mapped to distinct exit codes
(input 2, convergence 3, singularity 4, config 5) with a structured JSON
message on stderr.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import sys
from dataclasses import dataclass

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from ._parallel import workers_from_env
from .errors import ConfigError, ConvergenceError, HetfacError, InputError
from .factor_core import (
    DataMatrix,
    LoadingMatrix,
    PafOptions,
    correlation_from_data,
    load_csv,
    paf_fit,
)
from .heterogeneity import (
    SweepOptions,
    _binomial_right_tail,
    accept_individual_loadings,
    binomial_cutoff,
    conditional_predictor,
    heterogeneity_test,
    hrfs_determinacy,
    hrfs_scores,
    loo_loading_sweep,
    null_reference_sd,
    salient_assignment,
)
from .rotation import VarimaxOptions, procrustes_target, rotate_model, varimax
from .scoring import determinacy_sample, loo_determinacy_table, rfs_scores
from .simulation import (
    ESTIMATORS,
    PopulationSpec,
    ReplicationOptions,
    run_study,
)

ROTATIONS = ("varimax", "target", "none")


def _fail(exc: HetfacError):
    kinds = {2: "input", 3: "convergence", 4: "singularity", 5: "config"}
    payload = {
        "error": kinds.get(exc.exit_code, "error"),
        "exit_code": exc.exit_code,
        "message": str(exc),
    }
    click.echo(json.dumps(payload, sort_keys=True), err=True)
    sys.exit(exc.exit_code)


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None


def _resolve(flag_value, config, key, default):
    """Flags win over the config file, the config file over the default."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _provenance(config: dict, seed: int) -> dict:
    return {
        "seed": seed,
        "config": config,
        "config_hash": _config_hash(config),
        "versions": {
            "hetfac": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _read_pattern(path, p, q):
    """Target pattern CSV: header row, then p rows of q loadings."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            next(reader)
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise InputError(f"{path}: non-numeric value at line {line_no}") from None
    pattern = np.asarray(rows, dtype=float)
    if pattern.shape != (p, q):
        raise InputError(
            f"{path}: target pattern has shape {pattern.shape}, expected ({p}, {q})"
        )
    return pattern


def _read_assignment(path, data: DataMatrix, q: int):
    """Assignment file: a JSON array of q arrays of column names or 0-based
    indices."""
    try:
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"assignment file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(raw, list) or len(raw) != q:
        raise ConfigError(f"{path}: expected a JSON array of {q} factor groups")
    name_to_index = {name: i for i, name in enumerate(data.column_names)}
    groups = []
    for group in raw:
        indices = []
        for item in group:
            if isinstance(item, str):
                if item not in name_to_index:
                    raise ConfigError(f"{path}: unknown column name {item!r}")
                indices.append(name_to_index[item])
            else:
                idx = int(item)
                if not 0 <= idx < data.p:
                    raise ConfigError(f"{path}: column index {idx} out of range")
                indices.append(idx)
        groups.append(tuple(indices))
    return tuple(groups)


@dataclass
class AnalysisResult:
    """Everything the analyze pipeline produces, pre-serialisation."""

    data: DataMatrix
    model: object
    heterogeneity: object
    rho_r: np.ndarray
    rho_rk: np.ndarray
    conditional: object
    rfs: object
    hrfs: object
    influence: np.ndarray
    assignment: tuple


def _sanitize(value):
    """NaN-free JSON payload: NaN becomes null."""
    if isinstance(value, float):
        return None if value != value else value
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    return value


def build_report(result: AnalysisResult, provenance: dict) -> dict:
    """The analyze JSON report; round-trips losslessly through json."""
    model = result.model
    return _sanitize(
        {
            "n": result.data.n,
            "p": result.data.p,
            "q": model.q,
            "column_names": list(result.data.column_names),
            "loadings": model.loadings.values.tolist(),
            "unique_variances": model.unique_variances.tolist(),
            "heywood_flags": sorted(list(pair) for pair in model.loadings.heywood_flags),
            "converged": model.converged,
            "iterations": model.iterations,
            "rho_r": result.rho_r.tolist(),
            "rho_rk": result.rho_rk.tolist(),
            "rho_tilde_rk": result.conditional.rho.tolist(),
            "chosen_predictor": list(result.conditional.chosen),
            "assignment": [list(group) for group in result.assignment],
            "heterogeneity": result.heterogeneity.to_dict(),
            "influence_delta_rho2": result.influence.tolist(),
            "hrfs_fallback_rows": list(result.hrfs.fallback_rows),
            "provenance": provenance,
        }
    )


def _analysis_pipeline(cfg: dict, stop_after_test: bool) -> AnalysisResult:
    data = load_csv(cfg["input"])
    q = cfg["factors"]
    sample_corr = correlation_from_data(data)
    workers = workers_from_env()

    model = paf_fit(sample_corr, q, PafOptions(), n_used=data.n)
    if not model.converged:
        raise ConvergenceError(
            f"total-sample fit did not converge in {model.iterations} iterations"
        )

    rotation = cfg["rotation"]
    if rotation == "varimax":
        model = rotate_model(model, varimax(model.loadings, VarimaxOptions()))
    elif rotation == "target":
        pattern = _read_pattern(cfg["target_pattern"], data.p, q)
        model = rotate_model(model, procrustes_target(model.loadings, LoadingMatrix(pattern)))
    elif rotation != "none":
        raise ConfigError(f"unknown rotation {rotation!r}")

    sweep = loo_loading_sweep(data, q, model, SweepOptions())
    null = null_reference_sd(
        model, sweep, data.n, n_d=cfg["null_draws"], seed=cfg["seed"], workers=workers
    )

    if cfg.get("assignment"):
        assignment = _read_assignment(cfg["assignment"], data, q)
    else:
        assignment = salient_assignment(model.loadings.values)
    if cfg.get("g_crit") is not None:
        crit = int(cfg["g_crit"])
        cutoffs = [
            (crit, float(_binomial_right_tail(len(group), crit))) for group in assignment
        ]
    else:
        cutoffs = [binomial_cutoff(len(group), cfg["alpha"]) for group in assignment]
    report = heterogeneity_test(sweep, null, assignment, alpha_max=cfg["alpha"], cutoffs=cutoffs)

    if stop_after_test:
        return AnalysisResult(
            data=data,
            model=model,
            heterogeneity=report,
            rho_r=np.empty(0),
            rho_rk=np.empty(0),
            conditional=None,
            rfs=None,
            hrfs=None,
            influence=np.empty((0, 0)),
            assignment=assignment,
        )

    rho_r = determinacy_sample(model, sample_corr).rho
    individual = accept_individual_loadings(data, model, sweep)
    rho_rk = hrfs_determinacy(individual, sample_corr).rho
    rfs = rfs_scores(model, data)
    hrfs = hrfs_scores(individual, model, data, sample_corr)
    conditional = conditional_predictor(report, rfs, hrfs, rho_r, rho_rk)

    loo_table = loo_determinacy_table(data, sweep)
    influence = rho_r[None, :] ** 2 - loo_table**2

    return AnalysisResult(
        data=data,
        model=model,
        heterogeneity=report,
        rho_r=rho_r,
        rho_rk=rho_rk,
        conditional=conditional,
        rfs=rfs,
        hrfs=hrfs,
        influence=influence,
        assignment=assignment,
    )


def _write_analysis_outputs(result: AnalysisResult, out_dir, provenance):
    os.makedirs(out_dir, exist_ok=True)
    model = result.model
    q = model.q

    _write_json(os.path.join(out_dir, "report.json"), build_report(result, provenance))

    score_fields = ["id"] + [f"factor_{j + 1}" for j in range(q)]
    score_rows = [
        {"id": k + 1, **{f"factor_{j + 1}": result.conditional.values[k, j] for j in range(q)}}
        for k in range(result.data.n)
    ]
    _write_csv(os.path.join(out_dir, "scores.csv"), score_fields, score_rows)

    loading_fields = ["variable"] + [f"factor_{j + 1}" for j in range(q)] + ["unique_variance"]
    loading_rows = []
    for i, name in enumerate(result.data.column_names):
        row = {"variable": name, "unique_variance": model.unique_variances[i]}
        for j in range(q):
            row[f"factor_{j + 1}"] = model.loadings.values[i, j]
        loading_rows.append(row)
    _write_csv(os.path.join(out_dir, "loadings.csv"), loading_fields, loading_rows)

    det_rows = []
    for j in range(q):
        for name, values in (
            ("rho_r", result.rho_r),
            ("rho_rk", result.rho_rk),
            ("rho_tilde_rk", result.conditional.rho),
        ):
            det_rows.append({"factor": j + 1, "estimator": name, "value": values[j]})
    _write_csv(os.path.join(out_dir, "determinacy.csv"), ["factor", "estimator", "value"], det_rows)


ANALYZE_DEFAULTS = {
    "rotation": "varimax",
    "alpha": 0.25,
    "null_draws": 50,
    "seed": 0,
    "g_crit": None,
    "target_pattern": None,
    "assignment": None,
}


def _resolve_analysis_config(config_path, **flags) -> dict:
    config = _load_config(config_path)
    cfg = {}
    cfg["input"] = _resolve(flags.get("input"), config, "input", None)
    cfg["factors"] = _resolve(flags.get("factors"), config, "factors", None)
    cfg["out"] = _resolve(flags.get("out"), config, "out", None)
    for key, default in ANALYZE_DEFAULTS.items():
        cfg[key] = _resolve(flags.get(key), config, key, default)
    if cfg["input"] is None:
        raise ConfigError("--input is required (flag or config file)")
    if cfg["factors"] is None:
        raise ConfigError("--factors is required (flag or config file)")
    if cfg["out"] is None:
        raise ConfigError("--out is required (flag or config file)")
    cfg["factors"] = int(cfg["factors"])
    cfg["seed"] = int(cfg["seed"])
    cfg["null_draws"] = int(cfg["null_draws"])
    cfg["alpha"] = float(cfg["alpha"])
    if not 0.0 < cfg["alpha"] < 1.0:
        raise ConfigError("alpha must be in (0, 1)")
    if cfg["null_draws"] < 1:
        raise ConfigError("null-draws must be at least 1")
    if cfg["factors"] < 1:
        raise ConfigError("factors must be at least 1")
    if cfg["rotation"] not in ROTATIONS:
        raise ConfigError(f"rotation must be one of {ROTATIONS}")
    if cfg["rotation"] == "target" and not cfg["target_pattern"]:
        raise ConfigError("rotation 'target' needs --target-pattern")
    return cfg


def _analysis_options(fn):
    fn = click.option("--config", type=click.Path(), default=None, help="TOML config mirroring the flags; flags win.")(fn)
    fn = click.option("--input", "input_", type=click.Path(), default=None, help="Input data CSV.")(fn)
    fn = click.option("--factors", type=int, default=None, help="Number of factors q.")(fn)
    fn = click.option("--rotation", type=click.Choice(ROTATIONS), default=None, help="Rotation of the total-sample solution.")(fn)
    fn = click.option("--target-pattern", type=click.Path(), default=None, help="Pattern CSV for target rotation.")(fn)
    fn = click.option("--alpha", type=float, default=None, help="Maximum exact level of the binomial test (default 0.25).")(fn)
    fn = click.option("--g-crit", type=int, default=None, help="Explicit critical count, overriding the binomial cutoff.")(fn)
    fn = click.option("--null-draws", type=int, default=None, help="Null-reference samples n_d (default 50).")(fn)
    fn = click.option("--seed", type=int, default=None, help="Master seed (default 0).")(fn)
    fn = click.option("--assignment", type=click.Path(), default=None, help="JSON file assigning variables to factors.")(fn)
    fn = click.option("--out", type=click.Path(), default=None, help="Output directory.")(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="hetfac")
def main():
    """Factor-loading heterogeneity testing and heterogeneity-based factor
    scores for orthogonal exploratory factor models."""


@main.command()
@_analysis_options
def analyze(config, input_, factors, rotation, target_pattern, alpha, g_crit, null_draws, seed, assignment, out):
    """Two-step analysis: binomial heterogeneity test, then conditional
    scoring (HRFS where heterogeneous, conventional RFS otherwise)."""
    try:
        cfg = _resolve_analysis_config(
            config,
            input=input_,
            factors=factors,
            rotation=rotation,
            target_pattern=target_pattern,
            alpha=alpha,
            g_crit=g_crit,
            null_draws=null_draws,
            seed=seed,
            assignment=assignment,
            out=out,
        )
        result = _analysis_pipeline(cfg, stop_after_test=False)
        provenance = _provenance(cfg, cfg["seed"])
        _write_analysis_outputs(result, cfg["out"], provenance)
    except HetfacError as exc:
        _fail(exc)
    click.echo(f"analysis written to {cfg['out']}")


@main.command()
@_analysis_options
def test(config, input_, factors, rotation, target_pattern, alpha, g_crit, null_draws, seed, assignment, out):
    """Heterogeneity test stage only; writes heterogeneity.json."""
    try:
        cfg = _resolve_analysis_config(
            config,
            input=input_,
            factors=factors,
            rotation=rotation,
            target_pattern=target_pattern,
            alpha=alpha,
            g_crit=g_crit,
            null_draws=null_draws,
            seed=seed,
            assignment=assignment,
            out=out,
        )
        result = _analysis_pipeline(cfg, stop_after_test=True)
        provenance = _provenance(cfg, cfg["seed"])
        os.makedirs(cfg["out"], exist_ok=True)
        payload = _sanitize(
            {
                "assignment": [list(group) for group in result.assignment],
                "heterogeneity": result.heterogeneity.to_dict(),
                "provenance": provenance,
            }
        )
        _write_json(os.path.join(cfg["out"], "heterogeneity.json"), payload)
    except HetfacError as exc:
        _fail(exc)
    click.echo(f"heterogeneity report written to {cfg['out']}")


def _parse_grid(path, full_scale: bool):
    raw = _load_config(path)
    conditions = raw.get("condition")
    if not conditions:
        raise ConfigError(f"{path}: no [[condition]] tables found")
    specs = []
    for i, cond in enumerate(conditions):
        try:
            specs.append(
                PopulationSpec(
                    q=int(cond["q"]),
                    p_per_factor=int(cond["p_per_factor"]),
                    mu_loading=float(cond["mu"]),
                    sigma_loading=float(cond["sigma"]),
                    n=int(cond["n"]),
                    cap=float(cond.get("cap", 0.98)),
                    rescale_scope=str(cond.get("rescale_scope", "individual")),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"{path}: condition {i + 1} is missing key {exc}") from None
        except InputError as exc:
            raise ConfigError(f"{path}: condition {i + 1}: {exc}") from None
    study = raw.get("study", {})
    if full_scale:
        study = dict(study)
        study["replications"] = 1000
        study["null_draws"] = 50
    return specs, study


@main.command()
@click.option("--grid", type=click.Path(), required=True, help="TOML grid of [[condition]] tables.")
@click.option("--replications", type=int, default=None, help="Replications per condition (default 100).")
@click.option("--null-draws", type=int, default=None, help="Null-reference samples per replication (default 10).")
@click.option("--seed", type=int, default=None, help="Master seed (default 7).")
@click.option("--g-crit", type=int, default=None, help="Explicit critical count (default: study policy by p).")
@click.option("--rotation", type=click.Choice(("target", "varimax")), default=None, help="Total-sample rotation (default target).")
@click.option("--full-scale", is_flag=True, help="Full study scale: 1000 replications, 50 null draws. Expect a very long run.")
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
def simulate(grid, replications, null_draws, seed, g_crit, rotation, full_scale, out):
    """Monte Carlo study over a condition grid; emits per-condition summary
    CSV/JSON and a figure-ready long-format CSV."""
    try:
        specs, study = _parse_grid(grid, full_scale)
        replications = int(_resolve(replications, study, "replications", 100))
        null_draws = int(_resolve(null_draws, study, "null_draws", 10))
        seed = int(_resolve(seed, study, "seed", 7))
        g_crit = _resolve(g_crit, study, "g_crit", None)
        rotation = _resolve(rotation, study, "rotation", "target")
        workers = workers_from_env()
        if full_scale:
            click.echo(
                "full-scale run: expect tens of millions of factor analyses "
                "(weeks of compute on a single core)",
                err=True,
            )
        opts = ReplicationOptions(
            n_d=null_draws,
            g_crit=None if g_crit is None else int(g_crit),
            rotation=rotation,
        )
        result = run_study(specs, replications, seed, opts, workers=workers)

        os.makedirs(out, exist_ok=True)
        cfg = {
            "grid": [spec.condition_key() for spec in specs],
            "replications": replications,
            "null_draws": null_draws,
            "seed": seed,
            "g_crit": g_crit,
            "rotation": rotation,
        }
        provenance = _provenance(cfg, seed)
        _write_json(
            os.path.join(out, "summary.json"),
            _sanitize(
                {
                    "summaries": [s.to_dict() for s in result.summaries],
                    "provenance": provenance,
                }
            ),
        )
        summary_rows = [row for s in result.summaries for row in s.rows()]
        summary_fields = (
            ["q", "p", "mu", "sigma", "n", "factor", "replications", "converged", "summarized"]
            + [f"mean_{e}" for e in ESTIMATORS]
            + [f"se_{e}" for e in ESTIMATORS]
            + ["rejection_rate"]
        )
        ordered = []
        for row in summary_rows:
            ordered.append({k: row[k] for k in summary_fields})
        _write_csv(os.path.join(out, "summary.csv"), summary_fields, ordered)

        long_fields = ["q", "p", "mu", "sigma", "n", "factor", "estimator", "mean", "se"]
        _write_csv(os.path.join(out, "estimates_long.csv"), long_fields, result.long_rows())
    except HetfacError as exc:
        _fail(exc)
    click.echo(f"study results written to {out}")


if __name__ == "__main__":
    main()
