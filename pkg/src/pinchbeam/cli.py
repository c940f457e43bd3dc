"""Thin command-line client for the HTTP service.

Every subcommand builds a request document and posts it to the service; by
default an in-process application instance is used, so no server needs to be
running.  Pass --server to talk to a remote instance instead.
"""

from __future__ import annotations

import json
import sys

import click


def _post(server: str | None, path: str, payload: dict) -> dict:
    if server:
        import httpx
        resp = httpx.post(server.rstrip("/") + path, json=payload,
                          timeout=600.0)
    else:
        from fastapi.testclient import TestClient

        from .service import create_app
        with TestClient(create_app()) as client:
            resp = client.post(path, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise click.ClickException(f"{path} failed ({resp.status_code}): {detail}")
    return resp.json()


def _load_json(path: str, what: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read {what} file {path}: {exc}")


def _write_out(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text)


server_opt = click.option("--server", default=None,
                          help="Base URL of a running service; default runs in-process.")
scenario_opt = click.option("--scenario", "scenario_path", required=True,
                            type=click.Path(exists=True, dir_okay=False))
seed_opt = click.option("--seed", default=0, type=int, show_default=True)
out_opt = click.option("--out", default=None, type=click.Path(dir_okay=False))
format_opt = click.option("--format", "fmt",
                          type=click.Choice(["csv", "json"]), default="json",
                          show_default=True)


@click.group()
def main():
    """Pinching-antenna beamforming toolbox."""


@main.command()
@scenario_opt
@seed_opt
@click.option("--iterations", default=None, type=int,
              help="Outer optimization rounds (default: solver setting).")
@out_opt
@format_opt
@server_opt
def optimize(scenario_path, seed, iterations, out, fmt, server):
    """Run the alternating optimizer on one scenario, emit the trace."""
    doc = _load_json(scenario_path, "scenario")
    res = _post(server, "/optimize", {"scenario": doc, "seed": seed,
                                      "iterations": iterations})
    if fmt == "csv":
        _write_out(res["trace_csv"], out)
    else:
        res.pop("trace_csv", None)
        _write_out(json.dumps(res, indent=2), out)


@main.command()
@scenario_opt
@click.option("--weights", "weights_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@seed_opt
@out_opt
@server_opt
def infer(scenario_path, weights_path, seed, out, server):
    """One forward pass of the learned network, emit the solution."""
    doc = _load_json(scenario_path, "scenario")
    wdoc = _load_json(weights_path, "weights")
    res = _post(server, "/infer",
                {"scenario": doc, "weights": wdoc, "seed": seed})
    _write_out(json.dumps(res, indent=2), out)


@main.command()
@scenario_opt
@click.option("--weights", "weights_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@seed_opt
@click.option("--samples", default=10, type=int, show_default=True)
@click.option("--methods", default="ao,random,cmimo,zf", show_default=True,
              help="Comma-separated subset of ao,gnn,random,cmimo,zf.")
@out_opt
@format_opt
@server_opt
def bench(scenario_path, weights_path, seed, samples, methods, out, fmt,
          server):
    """Monte-Carlo comparison of methods on sampled placements."""
    doc = _load_json(scenario_path, "scenario")
    payload = {"scenario": doc, "seed": seed, "samples": samples,
               "methods": [m.strip() for m in methods.split(",") if m.strip()],
               "format": fmt}
    if weights_path:
        payload["weights"] = _load_json(weights_path, "weights")
    res = _post(server, "/bench", payload)
    if fmt == "csv":
        _write_out(res["report"], out)
    else:
        _write_out(json.dumps(res, indent=2), out)


@main.command()
@scenario_opt
@click.option("--weights", "weights_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@out_opt
@server_opt
def check(scenario_path, weights_path, out, server):
    """Run the quick invariant suite against a scenario (and weights)."""
    doc = _load_json(scenario_path, "scenario")
    payload = {"scenario": doc}
    if weights_path:
        payload["weights"] = _load_json(weights_path, "weights")
    res = _post(server, "/check", payload)
    _write_out(json.dumps(res, indent=2), out)
    if not res.get("ok", False):
        sys.exit(1)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, type=int, show_default=True)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
