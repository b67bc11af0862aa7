"""Operation handlers behind the service endpoints and the CLI verbs.

Each handler is a pure function of its request model (plus the filesystem
paths the request names) returning a response model, so the in-process CLI
and the HTTP service run exactly the same code.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from ..calibration import (CalibrationProfile, anchor_relative_tof, inject_cfo,
                           subtract_direct_doppler)
from ..estimator import SearchGrid
from ..experiments import (BenchSpec, ResolvabilitySpec, Scenario,
                           case_study_scenario, cable_pair_scenario,
                           doppler_scenario, random_ensemble,
                           reflector_scenario, run_bench, run_resolvability,
                           two_path_scenario)
from ..localization import Deployment, locate_all
from ..resolver import ResolverConfig, resolve
from ..signal_model import (ArrayGeometry, PathParams, SamplingGrid,
                            TrainingField)
from .. import traceio
from ..traceio import path_from_dict, path_to_dict, read_trace, write_trace
from .models import (BenchRequest, BenchResponse, CalibrateInjectRequest,
                     CalibrateInjectResponse, EstimateRequest,
                     EstimateResponse, FixModel, LocateRequest,
                     LocateResponse, PathModel, ResolvabilityRequest,
                     ResolvabilityResponse, ScenarioModel, SimulateRequest,
                     SimulateResponse, SkipModel)


def _grid_from(dims: int, gm) -> SearchGrid:
    kw = {}
    if gm.aoa_step_deg is not None:
        kw["aoa_step"] = float(np.deg2rad(gm.aoa_step_deg))
    if gm.aod_step_deg is not None:
        kw["aod_step"] = float(np.deg2rad(gm.aod_step_deg))
    if gm.tof_step_ns is not None:
        kw["tof_step"] = gm.tof_step_ns * 1e-9
    if gm.doppler_step_hz is not None:
        kw["doppler_step"] = gm.doppler_step_hz
    if gm.tof_max_ns is not None:
        kw["tof_range"] = (0.0, gm.tof_max_ns * 1e-9)
    if gm.doppler_max_hz is not None:
        kw["doppler_range"] = (-gm.doppler_max_hz, gm.doppler_max_hz)
    return SearchGrid.for_dims(dims, **kw)


def _path_model(p: PathParams) -> PathModel:
    return PathModel(**path_to_dict(p))


def _build_scene(model: ScenarioModel, seed: int, trial: int
                 ) -> tuple["Scenario", dict]:
    """One trial's scenario plus any extra artifacts (profile, deployment).

    The per-trial rng is keyed on (seed, trial), so trial files are
    reproducible independently of how many trials a run asks for.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, trial)))
    snr_explicit = "snr_db" in model.model_fields_set
    extras: dict = {"rng": rng}

    if model.kind in ("single", "custom"):
        paths = tuple(path_from_dict(pm.model_dump())
                      for pm in (model.paths or [PathModel()]))
        grid = SamplingGrid.wifi_20mhz(n_time=model.n_time or 1)
        geom = ArrayGeometry.half_wavelength(model.n_tx or 1, model.n_rx or 8)
        tf = TrainingField.wifi(grid, geom.n_tx)
        return Scenario(paths=paths, geom=geom, tf=tf, grid=grid,
                        snr_db=model.snr_db), extras

    if model.kind == "two-path-cell":
        scen = two_path_scenario(
            model.aoa_mult, model.tof_mult, aod_mult=model.aod_mult,
            doppler_mult=model.doppler_mult, snr_db=model.snr_db,
            n_tx=model.n_tx or 2, n_rx=model.n_rx or 8,
            n_time=model.n_time or 40)
        ph1, ph2 = np.exp(2j * np.pi * rng.uniform(size=2))
        lo, hi = scen.paths
        return Scenario(paths=(lo.replace(atten=ph1), hi.replace(atten=ph2)),
                        geom=scen.geom, tf=scen.tf, grid=scen.grid,
                        snr_db=scen.snr_db), extras

    if model.kind == "case-study":
        snr = model.snr_db if snr_explicit else None
        return case_study_scenario(n_rx=model.n_rx or 8,
                                   rel_phase_deg=model.rel_phase_deg,
                                   snr_db=snr), extras

    if model.kind == "ensemble":
        return random_ensemble(model.n_paths, seed=int(rng.integers(2 ** 31)),
                               n_tx=model.n_tx or 2, n_rx=model.n_rx or 8,
                               n_time=model.n_time or 16,
                               snr_db=model.snr_db), extras

    if model.kind == "cable-pair":
        scen, profile = cable_pair_scenario(seed=int(rng.integers(2 ** 31)),
                                            snr_db=model.snr_db)
        extras["profile"] = profile
        return scen, extras

    if model.kind == "doppler":
        scen, true_cfo, coarse_cfo, _ = doppler_scenario(snr_db=model.snr_db)
        extras["cfo"] = true_cfo
        extras["profile"] = CalibrationProfile(coarse_cfo=coarse_cfo)
        return scen, extras

    scen, dep, targets = reflector_scenario(snr_db=model.snr_db)
    extras["deployment"] = dep
    extras["targets"] = targets
    return scen, extras


def _trial_path(out: str, trial: int, n_trials: int) -> Path:
    p = Path(out)
    if p.is_dir() or str(out).endswith(os.sep):
        p = p / "trace.trace"
    if n_trials == 1:
        return p
    return p.with_name(f"{p.stem}_{trial:04d}{p.suffix}")


def cmd_simulate(req: SimulateRequest) -> SimulateResponse:
    traces: list[str] = []
    truths: list[str] = []
    named: dict[str, str] = {}
    n_paths = 0
    for trial in range(req.n_trials):
        scen, extras = _build_scene(req.scenario, req.seed, trial)
        tensor = scen.observe(rng=extras["rng"])
        if "profile" in extras:
            tensor = extras["profile"].inject(tensor)
        if "cfo" in extras:
            tensor = inject_cfo(tensor, extras["cfo"])
        path = _trial_path(req.out, trial, req.n_trials)
        write_trace(path, tensor, scen.geom)
        traces.append(str(path))
        n_paths = len(scen.paths)
        if req.with_truth:
            tp = traceio.truth_path(path)
            traceio.write_truth(tp, list(scen.paths))
            truths.append(str(tp))
        if "profile" in extras:
            pp = f"{path}.profile.json"
            extras["profile"].save(pp)
            named.setdefault("profile", pp)
        if "deployment" in extras:
            dp = f"{path}.deployment.json"
            extras["deployment"].save(dp)
            named.setdefault("deployment", dp)
        if "targets" in extras:
            gp = f"{path}.targets.json"
            traceio.write_json(gp, {"targets_m": extras["targets"].tolist()})
            named.setdefault("targets", gp)
    return SimulateResponse(traces=traces, truths=truths, extras=named,
                            n_paths=n_paths)


def cmd_estimate(req: EstimateRequest) -> EstimateResponse:
    tensor, geom = read_trace(req.trace)
    grid = _grid_from(req.dims, req.grid)
    tf = TrainingField.wifi(tensor.grid, tensor.n_tx)
    profile = None
    if req.calibration is not None:
        profile = CalibrationProfile.load(req.calibration)
        tensor = profile.correct(tensor)
    cfg = ResolverConfig(**req.resolver.model_dump())
    report = resolve(tensor, tf, geom, grid, cfg)
    if req.subtract_direct_doppler:
        report = subtract_direct_doppler(report)
    if req.anchor_tof:
        truth_tof = profile.direct_truth_tof()
        if truth_tof is None:
            raise ValueError("calibration profile has no tx/rx positions; "
                             "cannot anchor absolute ToF")
        report = anchor_relative_tof(report, truth_tof)
    if req.out is not None:
        traceio.write_report(req.out, report)
    return EstimateResponse(
        paths=[_path_model(p) for p in report.paths],
        initial_paths=[_path_model(p) for p in report.initial_paths],
        iterations_used=report.iterations_used,
        converged=report.converged,
        residual_power=report.residual_power(),
        elapsed_s={k: float(v) for k, v in report.elapsed.items()},
        report_path=req.out,
    )


def _out_prefix(out: str, default_name: str) -> str:
    p = Path(out)
    if p.is_dir() or str(out).endswith(os.sep):
        return str(p / default_name)
    return str(p)


def cmd_resolvability(req: ResolvabilityRequest) -> ResolvabilityResponse:
    kw = dict(n_trials=req.n_trials, snr_db=req.snr_db, seed=req.seed,
              methods=tuple(req.methods), doppler_diff=req.doppler_diff,
              aod_diff=req.aod_diff)
    if req.multiples is not None:
        kw["multiples"] = tuple(req.multiples)
    spec = ResolvabilitySpec(**kw)
    res = run_resolvability(spec, threads=req.threads)
    prefix = _out_prefix(req.out, "resolvability")
    csv_paths = {}
    for method, surface in res.surfaces.items():
        path = f"{prefix}_{method}.csv"
        traceio.write_matrix_csv(path, surface, spec.multiples, spec.multiples,
                                 corner="aoa_mult\\tof_mult")
        csv_paths[method] = path
    meta_path = f"{prefix}_meta.json"
    traceio.write_json(meta_path, res.to_dict())
    return ResolvabilityResponse(csv_paths=csv_paths, meta_path=meta_path,
                                 thresholds=res.thresholds,
                                 elapsed_s=res.elapsed)


def cmd_bench(req: BenchRequest) -> BenchResponse:
    spec = BenchSpec(path_counts=tuple(req.path_counts), n_trials=req.n_trials,
                     snr_db=req.snr_db, seed=req.seed, dims=req.dims)
    res = run_bench(spec, threads=req.threads)
    prefix = _out_prefix(req.out, "bench")
    csv_path = f"{prefix}_iterations.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_paths", "trial", "iterations", "converged"])
        for n in spec.path_counts:
            for t in range(req.n_trials):
                writer.writerow([n, t, int(res.iterations[n][t]),
                                 int(res.converged[n][t])])
    meta_path = f"{prefix}_meta.json"
    traceio.write_json(meta_path, res.to_dict())
    return BenchResponse(
        frac_within_budget={str(k): v for k, v in res.frac_within_budget.items()},
        budgets={str(k): v for k, v in res.budgets.items()},
        cd_grid_speedup=res.cd_grid_speedup,
        stage_seconds=res.stage_seconds,
        csv_path=csv_path, meta_path=meta_path, elapsed_s=res.elapsed)


def cmd_locate(req: LocateRequest) -> LocateResponse:
    doc = traceio.read_report(req.report)
    paths = traceio.report_paths(doc)
    if req.deployment_file is not None:
        dep = Deployment.load(req.deployment_file)
    else:
        d = req.deployment
        dep = Deployment(tx_pos=d.tx_pos, rx_pos=d.rx_pos,
                         rx_array_axis=d.rx_array_axis,
                         half_plane=d.half_plane, c=d.c_m_per_s)
    result = locate_all(paths, dep, doppler_floor=req.doppler_floor_hz,
                        tof_window=req.tof_window_ns * 1e-9)
    fixes = [FixModel(**f.to_dict()) for f in result.fixes]
    skipped = [SkipModel(path_index=i, reason=r) for i, r in result.skipped]
    if req.out is not None:
        traceio.write_json(req.out, {
            "fixes": [f.model_dump() for f in fixes],
            "skipped": [s.model_dump() for s in skipped],
        })
    return LocateResponse(fixes=fixes, skipped=skipped, out_path=req.out)


def _random_profile(seed: int, n_tx: int, n_rx: int, n_time: int
                    ) -> CalibrationProfile:
    """Plausible radio-error profile: chain phases, cyclic delays, a CFO,
    a common delay, and per-snapshot timing slopes."""
    rng = np.random.default_rng(seed)
    tx = np.concatenate([[0.0], rng.uniform(-3.1, 3.1, n_tx - 1)])
    rx = np.concatenate([[0.0], rng.uniform(-3.1, 3.1, n_rx - 1)])
    csd = np.concatenate([[0.0], rng.uniform(0.0, 3e-9, n_tx - 1)])
    slopes = rng.uniform(-0.05, 0.05, n_time) if n_time > 1 else None
    return CalibrationProfile(
        tx_phase=tx, rx_phase=rx, csd=csd,
        coarse_cfo=float(rng.uniform(-300.0, 300.0)) if n_time > 1 else 0.0,
        common_delay=float(rng.uniform(5e-9, 40e-9)),
        snapshot_slopes=slopes)


def cmd_calibrate_inject(req: CalibrateInjectRequest) -> CalibrateInjectResponse:
    tensor, geom = read_trace(req.trace)
    if req.profile is not None:
        profile = CalibrationProfile.load(req.profile)
        profile_path = req.profile
    else:
        profile = _random_profile(req.seed, tensor.n_tx, tensor.n_rx,
                                  tensor.n_time)
        profile_path = req.profile_out or f"{req.out}.profile.json"
        profile.save(profile_path)
    dirty = profile.inject(tensor)
    if req.cfo_hz:
        dirty = inject_cfo(dirty, req.cfo_hz)
    write_trace(req.out, dirty, geom)
    return CalibrateInjectResponse(out_path=req.out, profile_path=profile_path)
