"""Command line: boundary tables, batch simulation, fixtures, serving.

Artifacts carry the resolved configuration and master seed so any run
can be reproduced exactly from its outputs.
"""

from __future__ import annotations

import json
import math
from importlib import metadata
from pathlib import Path

import click

from .boundaries import (
    EfficacyTargets,
    PriorStrength,
    ToxicityTargets,
    boin_boundaries,
    boinet_boundaries,
    iboin_boundaries,
    iboin_hypothesis_prior,
    iboinet_boundaries,
    iboinet_hypothesis_prior,
)
from .runconfig import RunConfig
from .scenarios import RandomGenParams, fixed_scenarios, random_scenario
from .simulate import metrics_to_csv, metrics_to_json, replicate_stream, run_batch
from .svgchart import bar_chart


def _version() -> str:
    try:
        return metadata.version("midtrial")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@click.group()
@click.version_option(version=_version(), prog_name="midtrial")
def main():
    """Dose-finding designs with mid-trial dose insertion."""


def _tox_rows(targets, n_max, strength):
    rows = []
    for n in range(1, n_max + 1):
        if strength is None:
            b = boin_boundaries(targets)
        else:
            b = iboin_boundaries(
                iboin_hypothesis_prior(strength, targets), n, targets
            )
        esc = math.floor(b.lambda_e * n + 1e-12)
        de = math.ceil(b.lambda_d * n - 1e-12)
        rows.append((n, b.lambda_e, b.lambda_d, esc, de))
    return rows


def _et_rows(eff, targets, n_max, strength):
    rows = []
    for n in range(1, n_max + 1):
        if strength is None:
            b = boinet_boundaries(targets, eff)
        else:
            prior = iboinet_hypothesis_prior(strength, targets, eff)
            b = iboinet_boundaries(prior, n, targets, eff)
        esc = math.floor(b.lambda1 * n + 1e-12)
        de = math.ceil(b.lambda2 * n - 1e-12)
        rows.append((n, b.lambda1, b.lambda2, b.eta, esc, de))
    return rows


@main.command()
@click.option("--family", type=click.Choice(["boin", "boinet"]), default="boin")
@click.option("--phi1", type=float, default=0.30, show_default=True)
@click.option("--phi2", type=float, default=None, help="default 0.6*phi1 (boin) or 0.1*phi1 (boinet)")
@click.option("--phi3", type=float, default=None, help="default 1.4*phi1")
@click.option("--delta1", type=float, default=0.5, show_default=True)
@click.option("--delta2", type=float, default=None, help="default 0.6*delta1")
@click.option("--r", "r_", type=float, default=None, help="toxicity skeleton value at the inserted dose")
@click.option("--s", "s_", type=int, default=None, help="prior strength (pseudo-patients); 0 reduces to the plain table")
@click.option("--v", "v_", type=float, default=None, help="efficacy skeleton value (boinet)")
@click.option("--s-e", "s_e", type=int, default=None, help="efficacy prior strength (boinet)")
@click.option("--n-max", type=int, default=12, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
def boundaries(family, phi1, phi2, phi3, delta1, delta2, r_, s_, v_, s_e, n_max, csv_path):
    """Print decision-boundary tables over n = 1..N_MAX."""
    try:
        if phi2 is None:
            phi2 = (0.6 if family == "boin" else 0.1) * phi1
        if phi3 is None:
            phi3 = 1.4 * phi1
        targets = ToxicityTargets(phi1, phi2, phi3)
        strength = None
        if s_ is not None:
            # r is irrelevant at s=0 but the prior still needs a value
            strength = PriorStrength(
                s=s_,
                r=r_ if r_ is not None else 0.5,
                v=v_ if v_ is not None else (0.5 if family == "boinet" else None),
                s_eff=s_e,
            )
        elif r_ is not None:
            raise ValueError("--r needs --s")
        if family == "boin":
            rows = _tox_rows(targets, n_max, strength)
            header = ["n", "lambda_e", "lambda_d", "escalate_if_dlt<=", "deescalate_if_dlt>="]
            table = [
                [str(n), f"{le:.4f}", f"{ld:.4f}", str(esc), str(de)]
                for n, le, ld, esc, de in rows
            ]
        else:
            if delta2 is None:
                delta2 = 0.6 * delta1
            eff = EfficacyTargets(delta1=delta1, delta2=delta2)
            rows = _et_rows(eff, targets, n_max, strength)
            header = ["n", "lambda_1", "lambda_2", "eta", "escalate_if_dlt<=", "deescalate_if_dlt>="]
            table = [
                [str(n), f"{l1:.4f}", f"{l2:.4f}", f"{eta:.4f}", str(esc), str(de)]
                for n, l1, l2, eta, esc, de in rows
            ]
    except ValueError as err:
        raise click.ClickException(str(err))

    lines = [",".join(header)] + [",".join(row) for row in table]
    text = "\n".join(lines) + "\n"
    if csv_path:
        Path(csv_path).write_text(text)
        click.echo(f"wrote {csv_path}")
    else:
        widths = [max(len(h), max(len(row[i]) for row in table)) for i, h in enumerate(header)]
        click.echo("  ".join(h.ljust(w) for h, w in zip(header, widths)))
        for row in table:
            click.echo("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))


@main.command()
@click.option(
    "--config",
    "config_path",
    envvar="MIDTRIAL_CONFIG",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="run configuration (YAML or JSON); env MIDTRIAL_CONFIG",
)
@click.option("--replicates", type=int, default=None, help="override batch.replicates")
@click.option("--seed", type=int, default=None, help="override batch.master_seed")
@click.option("--workers", type=int, default=None, help="override batch.workers")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
def simulate(config_path, replicates, seed, workers, out_dir):
    """Run every batch in the configuration and write artifacts."""
    import dataclasses

    try:
        cfg = RunConfig.load(config_path)
    except (ValueError, TypeError) as err:
        raise click.ClickException(f"bad config: {err}")
    batch = cfg.batch
    if replicates is not None:
        batch = dataclasses.replace(batch, replicates=replicates)
    if seed is not None:
        batch = dataclasses.replace(batch, master_seed=seed)
    if workers is not None:
        batch = dataclasses.replace(batch, workers=workers)
    cfg = dataclasses.replace(cfg, batch=batch)

    specs = cfg.to_batchspecs()
    rows = []
    for i, spec in enumerate(specs):
        click.echo(
            f"[{i + 1}/{len(specs)}] {spec.scenario_name} {spec.variant} "
            f"c={spec.c:g} mode={spec.adaptive_mode} x{spec.replicates}",
            err=True,
        )
        rows.append(run_batch(spec, workers=cfg.batch.workers))

    # The echo describes the run itself; --out only moves the files, so it
    # stays out of the manifest to keep reruns byte-comparable.
    manifest = {
        "config": cfg.echo(),
        "master_seed": cfg.batch.master_seed,
        "code_version": _version(),
        "cells": len(rows),
    }
    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        base = out / cfg.output.basename
        written = []
        if "csv" in cfg.output.formats:
            text = metrics_to_csv(rows)
            text += f"# config {json.dumps(manifest, sort_keys=True)}\n"
            (base.with_suffix(".csv")).write_text(text)
            written.append(base.with_suffix(".csv"))
        if "json" in cfg.output.formats:
            (base.with_suffix(".json")).write_text(metrics_to_json(rows, manifest))
            written.append(base.with_suffix(".json"))
        if "svg" in cfg.output.formats:
            svg = bar_chart(rows, title="correct MTD selection (%)")
            svg += f"<!-- config {json.dumps(manifest, sort_keys=True)} -->\n"
            (base.with_suffix(".svg")).write_text(svg)
            written.append(base.with_suffix(".svg"))
        (out / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True)
        )
        written.append(out / "manifest.json")
    except OSError as err:
        raise click.ClickException(f"cannot write artifacts: {err}")
    for path in written:
        click.echo(str(path))


@main.command()
@click.option("--random", "random_mode", is_flag=True, help="draw random scenarios instead of the fixed table")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--count", type=int, default=1, show_default=True, help="number of random draws")
@click.option("--shape", type=click.Choice(["monotone", "unimodal"]), default="monotone")
@click.option("--phi", type=float, default=0.30, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
def scenarios(random_mode, seed, count, shape, phi, out_path):
    """Emit scenario truth fixtures as JSON."""
    if random_mode:
        params = RandomGenParams(phi=phi, shape=shape)
        items = [
            random_scenario(replicate_stream(seed, i), params).to_dict()
            for i in range(count)
        ]
    else:
        items = [s.to_dict() for s in fixed_scenarios(phi1=phi)]
    text = json.dumps(items, indent=2, sort_keys=True) + "\n"
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8008, show_default=True)
@click.option("--store", "store_dir", type=click.Path(file_okay=False), default="sessions", show_default=True)
@click.option("--token", default=None, help="operator token required on mutations")
@click.option("--ui-dir", type=click.Path(file_okay=False), default=None, help="static UI assets to mount at /ui")
def serve(host, port, store_dir, token, ui_dir):
    """Run the HTTP conduct service."""
    import uvicorn

    from .service import create_app
    from .sessions import SessionStore

    app = create_app(SessionStore(store_dir), operator_token=token, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command()
@click.option("--store", "store_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--trial", "trial_id", required=True)
def replay(store_dir, trial_id):
    """Re-execute a stored trial's cohort log and verify every decision."""
    from .engine import CohortOutcome, step
    from .sessions import SessionStore, config_from_dict, state_from_dict

    store = SessionStore(store_dir)
    try:
        events = store.events(trial_id)
    except KeyError:
        raise click.ClickException(f"unknown trial id: {trial_id}")
    cfg = config_from_dict(events[0]["config"])
    state = state_from_dict(events[0]["state"])
    mismatches = 0
    steps = 0
    for event in events[1:]:
        if event["event"] != "cohort":
            continue
        gave = event["input"]
        state, record = step(
            state,
            CohortOutcome(dlt=gave["dlt"], resp=gave["resp"]),
            cfg,
            d_star=gave.get("d_star"),
        )
        steps += 1
        if json.dumps(record, sort_keys=True) != json.dumps(
            event["record"], sort_keys=True
        ):
            mismatches += 1
            click.echo(f"step {steps}: MISMATCH", err=True)
    if mismatches:
        raise click.ClickException(
            f"{mismatches} of {steps} decision records diverged"
        )
    click.echo(f"replayed {steps} steps: identical")


if __name__ == "__main__":
    main()
