"""Command-line client: every verb runs in-process by default, or POSTs
the same request to a running service when --server is given.

Exit codes: 0 success, 2 bad request/spec, 3 I/O or transport failure,
4 estimation did not converge (the report is still written).
"""

from __future__ import annotations

import json
import sys

import click
import httpx
from pydantic import ValidationError

from .service import ops
from .service.models import (BenchRequest, BenchResponse,
                             CalibrateInjectRequest, CalibrateInjectResponse,
                             DeploymentModel, EstimateRequest,
                             EstimateResponse, GridModel, LocateRequest,
                             LocateResponse, ResolverModel,
                             ResolvabilityRequest, ResolvabilityResponse,
                             ScenarioModel, SimulateRequest, SimulateResponse)
from .traceio import TraceFormatError

EXIT_SPEC = 2
EXIT_IO = 3
EXIT_NO_CONVERGENCE = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _dispatch(ctx, endpoint: str, handler, req, response_cls):
    server = ctx.obj["server"]
    if server is None:
        try:
            return handler(req)
        except (TraceFormatError, OSError) as e:
            _fail(EXIT_IO, str(e))
        except (ValidationError, ValueError) as e:
            _fail(EXIT_SPEC, str(e))
    url = f"{server.rstrip('/')}/{endpoint}"
    try:
        resp = httpx.post(url, json=req.model_dump(exclude_unset=True),
                          timeout=None)
    except httpx.HTTPError as e:
        _fail(EXIT_IO, f"{url}: {e}")
    if resp.status_code == 400:
        detail = resp.json().get("detail", {})
        kind = detail.get("kind") if isinstance(detail, dict) else None
        message = detail.get("message") if isinstance(detail, dict) else str(detail)
        _fail(EXIT_IO if kind == "io" else EXIT_SPEC, message or resp.text)
    if resp.status_code == 422:
        _fail(EXIT_SPEC, resp.text)
    if resp.status_code >= 400:
        _fail(EXIT_IO, f"{url}: HTTP {resp.status_code}: {resp.text}")
    return response_cls(**resp.json())


def _emit(model) -> None:
    click.echo(json.dumps(model.model_dump(), indent=2, sort_keys=True))


def _require_out(ctx, override: str | None = None) -> str:
    out = override or ctx.obj["out"]
    if out is None:
        _fail(EXIT_SPEC, "this command writes files; pass --out")
    return out


def _parse_grid_steps(text: str | None) -> GridModel:
    """AOA,AOD,TOF,DOPPLER steps in deg,deg,ns,Hz; empty fields keep defaults."""
    if not text:
        return GridModel()
    parts = text.split(",")
    if len(parts) != 4:
        raise click.UsageError("--grid-steps needs four comma-separated "
                               "fields: aoa,aod,tof,doppler")
    names = ("aoa_step_deg", "aod_step_deg", "tof_step_ns", "doppler_step_hz")
    kw = {n: float(p) for n, p in zip(names, parts) if p.strip()}
    return GridModel(**kw)


def _parse_floats(text: str, n: int | None = None, what: str = "value"
                  ) -> list[float]:
    values = [float(p) for p in text.split(",") if p.strip()]
    if n is not None and len(values) != n:
        raise click.UsageError(f"{what} needs {n} comma-separated numbers")
    return values


def _parse_snr(text: str | None) -> tuple[bool, float | None]:
    """(provided, value); the literal 'none' means noiseless."""
    if text is None:
        return False, None
    if text.lower() in ("none", "clean"):
        return True, None
    return True, float(text)


@click.group()
@click.option("--seed", type=int, default=0, show_default=True,
              help="Root seed; every output is a deterministic function of it.")
@click.option("--grid-steps", default=None, metavar="AOA,AOD,TOF,DOPPLER",
              help="Search steps in deg,deg,ns,Hz (empty fields keep defaults).")
@click.option("--dims", type=click.IntRange(1, 4), default=4, show_default=True,
              help="Estimator dimensionality: 1=tof, 2=+aoa, 3=+doppler, 4=+aod.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker processes for experiment sweeps.")
@click.option("--out", type=click.Path(), default=None,
              help="Output file or prefix (meaning depends on the verb).")
@click.option("--server", default=None, metavar="URL",
              help="POST to a running service instead of computing in-process.")
@click.pass_context
def main(ctx, seed, grid_steps, dims, threads, out, server):
    """Multipath path-parameter estimation toolkit."""
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, grid=_parse_grid_steps(grid_steps), dims=dims,
                   threads=threads, out=out, server=server)


@main.command()
@click.option("--kind", type=click.Choice(["single", "custom", "two-path-cell",
                                           "case-study", "ensemble",
                                           "cable-pair", "doppler",
                                           "reflector"]),
              default=None, help="Scenario family (default: single, or custom "
                                 "when --path is repeated).")
@click.option("--path", "path_specs", multiple=True,
              metavar="AOA,AOD,TOF,DOP[,RE[,IM]]",
              help="Explicit path (deg,deg,ns,Hz, optional complex atten); "
                   "repeat for multipath.")
@click.option("--n-paths", type=int, default=None, help="Ensemble path count.")
@click.option("--snr", default=None, metavar="DB|none",
              help="Per-element SNR in dB, or 'none' for a noiseless trace.")
@click.option("--n-tx", type=int, default=None)
@click.option("--n-rx", type=int, default=None)
@click.option("--n-time", type=int, default=None)
@click.option("--trials", type=int, default=1, show_default=True,
              help="Number of independently seeded traces to write.")
@click.option("--aoa-mult", type=float, default=None,
              help="two-path-cell AoA split in basic resolutions.")
@click.option("--tof-mult", type=float, default=None)
@click.option("--aod-mult", type=float, default=None)
@click.option("--doppler-mult", type=float, default=None)
@click.option("--rel-phase-deg", type=float, default=None,
              help="case-study weak-path phase.")
@click.option("--truth/--no-truth", default=True,
              help="Write the ground-truth sidecar next to each trace.")
@click.option("--out", "out_override", type=click.Path(), default=None)
@click.pass_context
def simulate(ctx, kind, path_specs, n_paths, snr, n_tx, n_rx, n_time, trials,
             aoa_mult, tof_mult, aod_mult, doppler_mult, rel_phase_deg, truth,
             out_override):
    """Synthesize channel traces (plus truth/profile/deployment sidecars)."""
    out = _require_out(ctx, out_override)
    scen_kw = {}
    if path_specs:
        paths = []
        for spec in path_specs:
            v = _parse_floats(spec, what="--path")
            if not 4 <= len(v) <= 6:
                raise click.UsageError("--path needs 4 to 6 numbers")
            v += [1.0, 0.0][len(v) - 4:]
            paths.append(dict(aoa_deg=v[0], aod_deg=v[1], tof_ns=v[2],
                              doppler_hz=v[3], atten_re=v[4], atten_im=v[5]))
        scen_kw["paths"] = paths
    scen_kw["kind"] = kind or ("custom" if len(path_specs) > 1 else "single")
    provided, snr_value = _parse_snr(snr)
    if provided:
        scen_kw["snr_db"] = snr_value
    for key, value in (("n_paths", n_paths), ("n_tx", n_tx), ("n_rx", n_rx),
                       ("n_time", n_time), ("aoa_mult", aoa_mult),
                       ("tof_mult", tof_mult), ("aod_mult", aod_mult),
                       ("doppler_mult", doppler_mult),
                       ("rel_phase_deg", rel_phase_deg)):
        if value is not None:
            scen_kw[key] = value
    try:
        req = SimulateRequest(scenario=ScenarioModel(**scen_kw), out=out,
                              n_trials=trials, seed=ctx.obj["seed"],
                              with_truth=truth)
    except ValidationError as e:
        _fail(EXIT_SPEC, str(e))
    _emit(_dispatch(ctx, "simulate", ops.cmd_simulate, req, SimulateResponse))


@main.command()
@click.argument("trace", type=click.Path())
@click.option("--calibration", type=click.Path(), default=None,
              help="Profile JSON to correct the trace with before estimating.")
@click.option("--anchor-tof", is_flag=True,
              help="Anchor absolute ToF to the profile's direct-path geometry.")
@click.option("--subtract-direct-doppler", is_flag=True,
              help="Subtract the direct path's Doppler from every path.")
@click.option("--max-paths", type=int, default=None)
@click.option("--stop-threshold", type=float, default=None,
              help="Residual-to-input power ratio at which cancellation stops.")
@click.option("--max-iterations", type=int, default=None)
@click.option("--initial", type=click.Choice(["seeded", "grid"]), default=None)
@click.option("--tof-max-ns", type=float, default=None)
@click.option("--doppler-max-hz", type=float, default=None)
@click.option("--out", "out_override", type=click.Path(), default=None)
@click.pass_context
def estimate(ctx, trace, calibration, anchor_tof, subtract_direct_doppler,
             max_paths, stop_threshold, max_iterations, initial, tof_max_ns,
             doppler_max_hz, out_override):
    """Resolve a trace into path parameters; exit 4 on non-convergence."""
    resolver_kw = {}
    for key, value in (("max_paths", max_paths),
                       ("power_stop_threshold", stop_threshold),
                       ("max_iterations", max_iterations),
                       ("initial", initial)):
        if value is not None:
            resolver_kw[key] = value
    grid = ctx.obj["grid"]
    if tof_max_ns is not None or doppler_max_hz is not None:
        grid = grid.model_copy(update={
            k: v for k, v in (("tof_max_ns", tof_max_ns),
                              ("doppler_max_hz", doppler_max_hz))
            if v is not None})
    try:
        req = EstimateRequest(trace=trace, dims=ctx.obj["dims"], grid=grid,
                              resolver=ResolverModel(**resolver_kw),
                              calibration=calibration, anchor_tof=anchor_tof,
                              subtract_direct_doppler=subtract_direct_doppler,
                              out=out_override or ctx.obj["out"])
    except ValidationError as e:
        _fail(EXIT_SPEC, str(e))
    resp = _dispatch(ctx, "estimate", ops.cmd_estimate, req, EstimateResponse)
    _emit(resp)
    if not resp.converged:
        sys.exit(EXIT_NO_CONVERGENCE)


@main.command()
@click.option("--multiples", default=None, metavar="M1,M2,...",
              help="Separation multiples of the basic resolution "
                   "(default 0.1..1.0).")
@click.option("--trials", type=int, default=100, show_default=True)
@click.option("--snr", type=float, default=20.0, show_default=True)
@click.option("--methods", default="music,2d,3d,4d", show_default=True)
@click.option("--doppler-diff", type=float, default=1.0, show_default=True,
              help="Held Doppler split, in basic resolutions.")
@click.option("--aod-diff", type=float, default=1.0, show_default=True)
@click.option("--out", "out_override", type=click.Path(), default=None)
@click.pass_context
def resolvability(ctx, multiples, trials, snr, methods, doppler_diff,
                  aod_diff, out_override):
    """Two-path resolvability surfaces per estimator dimensionality."""
    out = _require_out(ctx, out_override)
    try:
        req = ResolvabilityRequest(
            multiples=_parse_floats(multiples) if multiples else None,
            n_trials=trials, snr_db=snr,
            methods=[m.strip() for m in methods.split(",") if m.strip()],
            doppler_diff=doppler_diff, aod_diff=aod_diff,
            seed=ctx.obj["seed"], threads=ctx.obj["threads"], out=out)
    except ValidationError as e:
        _fail(EXIT_SPEC, str(e))
    _emit(_dispatch(ctx, "resolvability", ops.cmd_resolvability, req,
                    ResolvabilityResponse))


@main.command()
@click.option("--trials", type=int, default=200, show_default=True)
@click.option("--path-counts", default="3,10", show_default=True)
@click.option("--snr", type=float, default=20.0, show_default=True)
@click.option("--out", "out_override", type=click.Path(), default=None)
@click.pass_context
def bench(ctx, trials, path_counts, snr, out_override):
    """Convergence statistics and search-cost comparison."""
    out = _require_out(ctx, out_override)
    try:
        req = BenchRequest(
            path_counts=[int(v) for v in path_counts.split(",") if v.strip()],
            n_trials=trials, snr_db=snr, seed=ctx.obj["seed"],
            dims=ctx.obj["dims"], threads=ctx.obj["threads"], out=out)
    except (ValidationError, ValueError) as e:
        _fail(EXIT_SPEC, str(e))
    _emit(_dispatch(ctx, "bench", ops.cmd_bench, req, BenchResponse))


@main.command()
@click.argument("report", type=click.Path())
@click.option("--deployment", "deployment_file", type=click.Path(),
              default=None, help="Deployment JSON (tx/rx geometry).")
@click.option("--tx-pos", default=None, metavar="X,Y")
@click.option("--rx-pos", default=None, metavar="X,Y")
@click.option("--array-axis", default="1,0", show_default=True, metavar="X,Y")
@click.option("--half-plane", type=click.Choice(["1", "-1"]), default="1",
              show_default=True,
              help="Which side of the array axis targets lie on.")
@click.option("--doppler-floor", type=float, default=0.5, show_default=True,
              help="Hz above which a path is classified as mobile.")
@click.option("--tof-window-ns", type=float, default=1.0, show_default=True)
@click.option("--out", "out_override", type=click.Path(), default=None)
@click.pass_context
def locate(ctx, report, deployment_file, tx_pos, rx_pos, array_axis,
           half_plane, doppler_floor, tof_window_ns, out_override):
    """Turn a report's reflected paths into target positions."""
    deployment = None
    if deployment_file is None:
        if tx_pos is None or rx_pos is None:
            raise click.UsageError("pass --deployment FILE, or --tx-pos and "
                                   "--rx-pos")
        deployment = DeploymentModel(
            tx_pos=_parse_floats(tx_pos, 2, "--tx-pos"),
            rx_pos=_parse_floats(rx_pos, 2, "--rx-pos"),
            rx_array_axis=_parse_floats(array_axis, 2, "--array-axis"),
            half_plane=int(half_plane))
    try:
        req = LocateRequest(report=report, deployment=deployment,
                            deployment_file=deployment_file,
                            doppler_floor_hz=doppler_floor,
                            tof_window_ns=tof_window_ns,
                            out=out_override or ctx.obj["out"])
    except ValidationError as e:
        _fail(EXIT_SPEC, str(e))
    _emit(_dispatch(ctx, "locate", ops.cmd_locate, req, LocateResponse))


@main.command("calibrate-inject")
@click.argument("trace", type=click.Path())
@click.option("--profile", type=click.Path(), default=None,
              help="Profile JSON to inject (default: draw one from --seed).")
@click.option("--profile-out", type=click.Path(), default=None,
              help="Where to save a drawn profile.")
@click.option("--cfo", type=float, default=0.0, show_default=True,
              help="Extra carrier offset (Hz) the profile does not know about.")
@click.option("--out", "out_override", type=click.Path(), default=None)
@click.pass_context
def calibrate_inject(ctx, trace, profile, profile_out, cfo, out_override):
    """Apply radio-error effects (phases, delays, CFO) to a clean trace."""
    out = _require_out(ctx, out_override)
    req = CalibrateInjectRequest(trace=trace, out=out, profile=profile,
                                 profile_out=profile_out,
                                 seed=ctx.obj["seed"], cfo_hz=cfo)
    _emit(_dispatch(ctx, "calibrate/inject", ops.cmd_calibrate_inject, req,
                    CalibrateInjectResponse))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
