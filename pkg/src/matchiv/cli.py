"""Batch command-line front end: simulate | describe | estimate | report.

Runs are reproducible: every command writes a manifest with the resolved
configuration, SHA-256 digests of its inputs, and the package version.
Options can come from a `key = value` config file; command-line flags win.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .design import describe_exposure, load_mask, write_mask
from .errors import (
    ConfigError,
    DataError,
    EmptySampleError,
    EstimationError,
    MatchIVError,
    SchemaError,
    ValidationError,
)
from .panel import load_match_rows, write_match_rows
from .pipeline import estimate_panel
from .report import (
    MarginalEffect,
    effects_to_csv,
    marginal_effects,
    priority_ranking,
    render_regression_table,
)
from .simulate import SimConfig, simulate

EXIT_CODES = {
    SchemaError: 2,
    ValidationError: 3,
    ConfigError: 4,
    DataError: 5,
    EstimationError: 6,
    EmptySampleError: 7,
}


def _fail(exc: MatchIVError) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_CODES.get(type(exc), 1))


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, inputs: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "input_digests": {name: _sha256(p) for name, p in inputs.items() if p},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _load_config_file(path):
    """Simple `key = value` lines; '#' comments; flags override these."""
    values = {}
    if path is None:
        return values
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _merge(ctx: click.Context, file_values: dict, **flags):
    """Config-file values fill in flags the user left at their defaults."""
    merged = dict(flags)
    for key, raw in file_values.items():
        if key not in merged:
            raise ConfigError(f"unknown config key {key!r}")
        src = ctx.get_parameter_source(key)
        if src is not None and src.name != "DEFAULT":
            continue  # explicit flag wins
        default = merged[key]
        if isinstance(default, bool):
            merged[key] = raw.strip().lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            merged[key] = int(raw)
        elif isinstance(default, float):
            merged[key] = float(raw)
        else:
            merged[key] = raw
    return merged


@click.group()
@click.version_option(version=__version__)
def main():
    """Peer-effect estimation for match telemetry via leave-one-out
    instruments, plus a ground-truth simulator."""


_MODE_FLAGS = {
    "engagement-confounded": "engagement_confounded",
    "propagation-reflection": "propagation_reflection",
    "two-player-reflection": "two_player_reflection",
}


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Config file with key = value lines; flags override.")
@click.option("--mode", type=click.Choice(sorted(_MODE_FLAGS)), default="engagement-confounded")
@click.option("--n-players", default=400, show_default=True)
@click.option("--n-matches", default=2000, show_default=True)
@click.option("--team-size", default=2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--beta", default=0.0, show_default=True,
              help="Reflection beta, or the opponents-context effect in engagement mode.")
@click.option("--sigma-match-shock", default=0.0, show_default=True)
@click.option("--toxicity-base-rate", default=0.15, show_default=True)
@click.option("--exposure-missing-rate", default=0.0, show_default=True)
@click.option("--party-prob", default=0.0, show_default=True)
@click.option("--out-dir", default="sim_out", show_default=True)
@click.pass_context
def simulate_cmd(ctx, config_path, **flags):
    """Generate a synthetic panel plus a ground-truth sidecar."""
    try:
        flags = _merge(ctx, _load_config_file(config_path), **flags)
        mode = _MODE_FLAGS[flags["mode"]]
        cfg = SimConfig(
            mode=mode,
            n_players=flags["n_players"],
            n_matches=flags["n_matches"],
            team_size=flags["team_size"],
            seed=flags["seed"],
            reflection_beta=flags["beta"] if mode != "engagement_confounded" else 0.5,
            beta_true={"opponents": flags["beta"]} if mode == "engagement_confounded" else {},
            sigma_match_shock=flags["sigma_match_shock"],
            toxicity_base_rate=flags["toxicity_base_rate"],
            exposure_missing_rate=flags["exposure_missing_rate"],
            party_prob=flags["party_prob"],
        )
        panel, truth = simulate(cfg)
        out = Path(flags["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        panel_path = out / "panel.csv"
        write_match_rows(panel, str(panel_path))
        (out / "truth.json").write_text(json.dumps(truth.to_dict(), indent=2) + "\n")
        if truth.mask is not None and (~truth.mask).any():
            write_mask(panel, truth.mask, str(out / "mask.csv"))
        _write_manifest(out, "simulate", flags, {"panel": str(panel_path)})
        click.echo(f"wrote {panel_path} ({panel.n_rows} rows, "
                   f"{panel.n_matches} matches, {panel.n_players} players)")
    except MatchIVError as exc:
        _fail(exc)


main.add_command(simulate_cmd, name="simulate")


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", type=click.Path(exists=True), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "text"]), default="text")
@click.option("--out-dir", default=None, help="Also write the table and a manifest here.")
def describe(input_path, mask_path, fmt, out_dir):
    """Exposure probability tables by context and match outcome."""
    try:
        panel = load_match_rows(input_path)
        mask = load_mask(mask_path, panel) if mask_path else None
        table = describe_exposure(panel, mask=mask)
        if fmt == "json":
            rendered = table.to_json(orient="records", indent=2) + "\n"
        elif fmt == "csv":
            rendered = table.to_csv(index=False)
        else:
            rendered = table.to_string(index=False) + "\n"
        click.echo(rendered, nl=False)
        if out_dir:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"exposure.{fmt if fmt != 'text' else 'txt'}").write_text(rendered)
            _write_manifest(out, "describe", {"input": input_path, "format": fmt},
                            {"panel": input_path, "mask": mask_path})
    except MatchIVError as exc:
        _fail(exc)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", type=click.Path(exists=True), default=None)
@click.option("--scheme", type=click.Choice(["opp-team", "party-split"]), default="opp-team")
@click.option("--outcome", type=click.Choice(["engagement", "propagation", "both"]),
              default="both", show_default=True)
@click.option("--vcov", type=click.Choice(["hc1", "classical", "cluster-player"]),
              default="hc1", show_default=True)
@click.option("--draws", type=click.Choice(["exclude", "as-loss"]), default="exclude",
              show_default=True)
@click.option("--threads", default=int(os.environ.get("MATCHIV_THREADS", "1")),
              show_default=True, help="Accepted for symmetry; results are identical "
              "for any value (deterministic reductions).")
@click.option("--out-dir", default="estimate_out", show_default=True)
@click.pass_context
def estimate(ctx, config_path, **flags):
    """Run ingest -> instruments -> restrictions -> demeaning -> OLS + 2SLS."""
    try:
        flags = _merge(ctx, _load_config_file(config_path), **flags)
        panel = load_match_rows(flags["input_path"])
        mask = load_mask(flags["mask_path"], panel) if flags["mask_path"] else None
        scheme = flags["scheme"].replace("-", "_")
        vcov = {"cluster-player": "cluster_by_player"}.get(flags["vcov"], flags["vcov"])
        outcomes = ["engagement", "propagation"] if flags["outcome"] == "both" \
            else [flags["outcome"]]

        out = Path(flags["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        result_doc = {}
        all_effects = []
        for outcome in outcomes:
            run = estimate_panel(
                panel,
                scheme=scheme,
                outcome=outcome,
                vcov_mode=vcov,
                draw_policy=flags["draws"].replace("-", "_"),
                mask=mask,
            )
            result_doc[outcome] = run.to_dict()
            effects = marginal_effects(run.tsls, outcome=outcome, units=run.units)
            all_effects.extend(effects)
            table = render_regression_table(
                {"ols": run.ols, "tsls": run.tsls}, fmt="text"
            )
            (out / f"table_{outcome}.txt").write_text(table)
            click.echo(table)
        (out / "result.json").write_text(json.dumps(result_doc, indent=2) + "\n")
        (out / "effects.csv").write_text(
            effects_to_csv(all_effects) if all_effects else ""
        )
        _write_manifest(out, "estimate", flags,
                        {"panel": flags["input_path"], "mask": flags["mask_path"]})
        click.echo(f"wrote {out / 'result.json'}")
    except MatchIVError as exc:
        _fail(exc)


@main.command(name="report")
@click.option("--result", "result_path", required=True, type=click.Path(exists=True),
              help="result.json produced by `estimate`.")
@click.option("--format", "fmt", type=click.Choice(["text", "json", "csv"]), default="text")
@click.option("--ranking", type=click.Choice(["engagement", "propagation", "none"]),
              default="none", show_default=True)
def report_cmd(result_path, fmt, ranking):
    """Re-render saved estimation results and priority rankings."""
    try:
        doc = json.loads(Path(result_path).read_text())
        effects = []
        for outcome, run in doc.items():
            ts = run["tsls"]
            names = ts["names"]
            beta = np.array(ts["beta"])
            vcov = np.array(ts["vcov"])
            from .estimation import EstimationResult  # local to avoid cycle at import

            res = EstimationResult(
                method="tsls",
                names=tuple(names),
                beta=beta,
                vcov=vcov,
                se=np.array(ts["se"]),
                t_stats=np.array(ts["t_stats"]),
                p_values=np.array(ts["p_values"]),
                n_obs=ts["n_obs"],
                n_players=ts["n_players"],
                df_resid=ts["df_resid"],
                vcov_mode=ts["vcov_mode"],
            )
            units = run.get("units", "hours")
            effects.extend(marginal_effects(res, outcome=outcome, units=units))
            click.echo(render_regression_table({f"tsls[{outcome}]": res}, fmt=fmt), nl=False)
        if ranking != "none":
            ranked = priority_ranking(effects, objective=ranking)
            click.echo(json.dumps(ranked, indent=2))
    except MatchIVError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
