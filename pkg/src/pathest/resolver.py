"""Multipath decomposition: successive cancellation plus iterative refinement.

sic_initialize peels paths off the tensor strongest-first until the residual
drops below a dynamic-range threshold. refine then loops over the paths,
re-estimating each against its own reconstruction plus the current residual,
so energy that earlier rounds misattributed between overlapping paths is
progressively handed back. The decomposition identity

    input == sum(reconstructed paths) + noise_estimate

holds exactly after every stage; the residual doubles as the noise estimate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .estimator import (SearchGrid, estimate_alpha, estimate_cd,
                        estimate_grid, estimate_sequential)
from .signal_model import (ArrayGeometry, ChannelTensor, PathParams,
                           SamplingGrid, TrainingField, superpose,
                           synthesize_path)


@dataclass(frozen=True)
class ResolverConfig:
    """Knobs for the cancellation / refinement loop.

    power_stop_threshold is the residual-to-input power ratio at which
    cancellation stops (and, reused, the per-element power floor below which
    a refined path is discarded as phantom). initial selects how each new
    path is first estimated: "seeded" runs the sequential pipeline on a
    coarsened grid and polishes with coordinate descent, "grid" uses the
    exhaustive argmax.
    """

    power_stop_threshold: float = 0.01
    max_paths: int = 16
    max_iterations: int = 25
    initial: str = "seeded"
    seed_coarsen: float = 4.0

    def __post_init__(self):
        if not 0 < self.power_stop_threshold < 1:
            raise ValueError("power_stop_threshold must lie in (0, 1)")
        if self.max_paths < 1 or self.max_iterations < 0:
            raise ValueError("max_paths >= 1 and max_iterations >= 0 required")
        if self.initial not in ("seeded", "grid"):
            raise ValueError("initial must be 'seeded' or 'grid'")


@dataclass
class EstimateReport:
    """Resolved paths (strongest first) plus everything needed to audit them.

    trajectories[0] holds the cancellation-stage estimates; trajectories[r]
    the path list after refinement round r. initial_paths is trajectories[0]
    kept under a stable name.
    """

    paths: list[PathParams]
    noise_estimate: ChannelTensor
    iterations_used: int
    converged: bool
    initial_paths: list[PathParams] = field(default_factory=list)
    trajectories: list[list[PathParams]] = field(default_factory=list)
    elapsed: dict[str, float] = field(default_factory=dict)

    def residual_power(self) -> float:
        return self.noise_estimate.occupied_power()

    @property
    def n_paths(self) -> int:
        return len(self.paths)


def reconstruct(paths: list[PathParams], geom: ArrayGeometry, tf: TrainingField,
                grid: SamplingGrid) -> ChannelTensor:
    """Noiseless tensor of the given paths (superposition, no noise term)."""
    return superpose(paths, geom, tf, grid)


def _estimate_single(tensor: ChannelTensor, tf: TrainingField,
                     geom: ArrayGeometry, grid: SearchGrid,
                     cfg: ResolverConfig) -> PathParams:
    if cfg.initial == "grid":
        return estimate_grid(tensor, tf, geom, grid)
    seed = estimate_sequential(tensor, tf, geom, grid.coarsened(cfg.seed_coarsen))
    return estimate_cd(tensor, tf, geom, grid, init=seed)


def _sorted_strongest(paths: list[PathParams]) -> list[PathParams]:
    return sorted(paths, key=lambda p: -abs(p.atten))


def sic_initialize(tensor: ChannelTensor, tf: TrainingField, geom: ArrayGeometry,
                   grid: SearchGrid, cfg: ResolverConfig = ResolverConfig()
                   ) -> EstimateReport:
    """Successive interference cancellation over the tensor.

    Estimate the strongest remaining path, subtract its reconstruction,
    repeat until the residual falls below power_stop_threshold times the
    input power or max_paths is reached. The final residual is the noise
    estimate, so paths + residual reproduce the input exactly.
    """
    t0 = time.perf_counter()
    input_power = tensor.occupied_power()
    residual = tensor.copy()
    paths: list[PathParams] = []
    while input_power > 0 and len(paths) < cfg.max_paths:
        if residual.occupied_power() < cfg.power_stop_threshold * input_power:
            break
        est = _estimate_single(residual, tf, geom, grid, cfg)
        if abs(est.atten) == 0.0:
            break
        residual = residual - synthesize_path(est, geom, tf, tensor.grid)
        paths.append(est)
    paths = _sorted_strongest(paths)
    return EstimateReport(paths=paths, noise_estimate=residual,
                          iterations_used=0, converged=False,
                          initial_paths=list(paths), trajectories=[list(paths)],
                          elapsed={"sic": time.perf_counter() - t0})


def refine(tensor: ChannelTensor, report: EstimateReport, tf: TrainingField,
           geom: ArrayGeometry, grid: SearchGrid,
           cfg: ResolverConfig = ResolverConfig(),
           round_hook: Callable[[int, list[PathParams], ChannelTensor], None] | None = None
           ) -> EstimateReport:
    """Iteratively re-estimate every path against (own reconstruction + residual).

    Rounds visit paths strongest-first. A round re-estimates path l on
    y_l = s(v_l) + W, replaces it, and moves the reconstruction delta into
    W, so later paths in the same round already see the update. A path whose
    refined per-element power falls below the dynamic-range floor is dropped.
    Converged when a full round moves every parameter of every path by less
    than one grid step (with no path dropped that round).
    """
    t0 = time.perf_counter()
    paths = _sorted_strongest(report.paths)
    trajectories = [list(t) for t in report.trajectories] or [list(paths)]
    if not paths:
        return EstimateReport(paths=[], noise_estimate=tensor.copy(),
                              iterations_used=0, converged=True,
                              initial_paths=list(report.initial_paths),
                              trajectories=trajectories,
                              elapsed={**report.elapsed, "refine": 0.0})
    recons = [synthesize_path(p, geom, tf, tensor.grid) for p in paths]
    noise = tensor.copy()
    for r in recons:
        noise = noise - r
    floor_power = cfg.power_stop_threshold * tensor.occupied_power()
    converged = False
    iterations = 0
    for _ in range(cfg.max_iterations):
        iterations += 1
        order = np.argsort([-abs(p.atten) for p in paths])
        paths = [paths[i] for i in order]
        recons = [recons[i] for i in order]
        prev = list(paths)
        for l in range(len(paths)):
            y_l = recons[l] + noise
            new = estimate_cd(y_l, tf, geom, grid, init=paths[l])
            new_recon = synthesize_path(new, geom, tf, tensor.grid)
            noise = (noise + recons[l]) - new_recon
            paths[l], recons[l] = new, new_recon
        alive = [abs(p.atten) ** 2 >= floor_power for p in paths]
        dropped = not all(alive)
        paths = [p for p, a in zip(paths, alive) if a]
        recons = [r for r, a in zip(recons, alive) if a]
        # Recompute the residual from scratch: same identity, no drift.
        noise = tensor.copy()
        for r in recons:
            noise = noise - r
        trajectories.append(list(paths))
        if round_hook is not None:
            round_hook(iterations, list(paths), noise)
        if not dropped and all(grid.converged(a, b) for a, b in zip(prev, paths)):
            converged = True
            break
        if not paths:
            converged = True
            break
    paths = _sorted_strongest(paths)
    elapsed = {**report.elapsed, "refine": time.perf_counter() - t0}
    return EstimateReport(paths=paths, noise_estimate=noise,
                          iterations_used=iterations, converged=converged,
                          initial_paths=list(report.initial_paths),
                          trajectories=trajectories, elapsed=elapsed)


def resolve(tensor: ChannelTensor, tf: TrainingField, geom: ArrayGeometry,
            grid: SearchGrid, cfg: ResolverConfig = ResolverConfig(),
            round_hook: Callable[[int, list[PathParams], ChannelTensor], None] | None = None
            ) -> EstimateReport:
    """Full decomposition: cancellation followed by refinement."""
    report = sic_initialize(tensor, tf, geom, grid, cfg)
    return refine(tensor, report, tf, geom, grid, cfg, round_hook=round_hook)
