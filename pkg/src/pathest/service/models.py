"""Request/response schemas shared by the HTTP service and the CLI.

All angles are degrees, delays nanoseconds, Doppler Hz, positions meters;
the library's radian/second conventions stay internal.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

ScenarioKind = Literal["single", "custom", "two-path-cell", "case-study",
                       "ensemble", "cable-pair", "doppler", "reflector"]
METHOD_NAMES = ("music", "2d", "3d", "4d")


class PathModel(BaseModel):
    aoa_deg: float = 90.0
    aod_deg: float = 90.0
    tof_ns: float = 30.0
    doppler_hz: float = 0.0
    atten_re: float = 1.0
    atten_im: float = 0.0


class GridModel(BaseModel):
    """Search-grid overrides; unset fields keep the library defaults."""

    aoa_step_deg: Optional[float] = Field(None, gt=0)
    aod_step_deg: Optional[float] = Field(None, gt=0)
    tof_step_ns: Optional[float] = Field(None, gt=0)
    doppler_step_hz: Optional[float] = Field(None, gt=0)
    tof_max_ns: Optional[float] = Field(None, gt=0)
    doppler_max_hz: Optional[float] = Field(None, gt=0)


class ResolverModel(BaseModel):
    power_stop_threshold: float = Field(0.01, gt=0, lt=1)
    max_paths: int = Field(16, ge=1)
    max_iterations: int = Field(25, ge=0)
    initial: Literal["seeded", "grid"] = "seeded"


class ScenarioModel(BaseModel):
    """What cmd_simulate synthesizes.

    "single"/"custom" take explicit paths (single falls back to one default
    path); "two-path-cell" splits two unit-power paths by multiples of the
    basic resolution; the remaining kinds are the named experiment scenes.
    """

    kind: ScenarioKind = "single"
    paths: Optional[list[PathModel]] = None
    n_paths: int = Field(3, ge=1)
    snr_db: Optional[float] = 20.0
    n_tx: Optional[int] = Field(None, ge=1)
    n_rx: Optional[int] = Field(None, ge=1)
    n_time: Optional[int] = Field(None, ge=1)
    aoa_mult: float = 1.0
    tof_mult: float = 1.0
    aod_mult: float = 1.0
    doppler_mult: float = 1.0
    rel_phase_deg: float = -75.0

    @model_validator(mode="after")
    def _paths_match_kind(self):
        if self.kind == "custom" and not self.paths:
            raise ValueError("kind 'custom' requires at least one path")
        if self.paths and self.kind not in ("single", "custom"):
            raise ValueError(f"kind {self.kind!r} does not take explicit paths")
        if self.kind == "single" and self.paths and len(self.paths) != 1:
            raise ValueError("kind 'single' takes exactly one path")
        return self


class SimulateRequest(BaseModel):
    scenario: ScenarioModel = ScenarioModel()
    out: str
    n_trials: int = Field(1, ge=1)
    seed: int = 0
    with_truth: bool = True


class SimulateResponse(BaseModel):
    traces: list[str]
    truths: list[str]
    extras: dict[str, str] = {}
    n_paths: int


class EstimateRequest(BaseModel):
    trace: str
    dims: int = Field(4, ge=1, le=4)
    grid: GridModel = GridModel()
    resolver: ResolverModel = ResolverModel()
    calibration: Optional[str] = None
    anchor_tof: bool = False
    subtract_direct_doppler: bool = False
    out: Optional[str] = None

    @model_validator(mode="after")
    def _calibration_flags(self):
        if (self.anchor_tof or self.subtract_direct_doppler) \
                and self.calibration is None:
            raise ValueError("anchor_tof and subtract_direct_doppler require "
                             "a calibration profile")
        return self


class EstimateResponse(BaseModel):
    paths: list[PathModel]
    initial_paths: list[PathModel]
    iterations_used: int
    converged: bool
    residual_power: float
    elapsed_s: dict[str, float]
    report_path: Optional[str] = None


class ResolvabilityRequest(BaseModel):
    multiples: Optional[list[float]] = None
    n_trials: int = Field(100, ge=1)
    snr_db: float = 20.0
    seed: int = 0
    methods: list[str] = list(METHOD_NAMES)
    doppler_diff: float = 1.0
    aod_diff: float = 1.0
    threads: int = Field(1, ge=1)
    out: str

    @model_validator(mode="after")
    def _known_methods(self):
        unknown = set(self.methods) - set(METHOD_NAMES)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; "
                             f"choose from {METHOD_NAMES}")
        if self.multiples is not None:
            if not self.multiples or any(m <= 0 for m in self.multiples):
                raise ValueError("multiples must be positive")
        return self


class ResolvabilityResponse(BaseModel):
    csv_paths: dict[str, str]
    meta_path: str
    thresholds: dict[str, float]
    elapsed_s: float


class BenchRequest(BaseModel):
    path_counts: list[int] = [3, 10]
    n_trials: int = Field(200, ge=1)
    snr_db: float = 20.0
    seed: int = 0
    dims: int = Field(4, ge=1, le=4)
    threads: int = Field(1, ge=1)
    out: str


class BenchResponse(BaseModel):
    frac_within_budget: dict[str, float]
    budgets: dict[str, int]
    cd_grid_speedup: dict[str, float]
    stage_seconds: dict[str, float]
    csv_path: str
    meta_path: str
    elapsed_s: float


class DeploymentModel(BaseModel):
    tx_pos: list[float]
    rx_pos: list[float]
    rx_array_axis: list[float] = [1.0, 0.0]
    half_plane: int = 1
    c_m_per_s: float = 299792458.0


class LocateRequest(BaseModel):
    report: str
    deployment: Optional[DeploymentModel] = None
    deployment_file: Optional[str] = None
    doppler_floor_hz: float = 0.5
    tof_window_ns: float = 1.0
    out: Optional[str] = None

    @model_validator(mode="after")
    def _one_deployment(self):
        if (self.deployment is None) == (self.deployment_file is None):
            raise ValueError("provide exactly one of deployment / "
                             "deployment_file")
        return self


class FixModel(BaseModel):
    position_m: list[float]
    path_index: int
    mobility: str
    aoa_deg: float
    tof_ns: float
    doppler_hz: float


class SkipModel(BaseModel):
    path_index: int
    reason: str


class LocateResponse(BaseModel):
    fixes: list[FixModel]
    skipped: list[SkipModel]
    out_path: Optional[str] = None


class CalibrateInjectRequest(BaseModel):
    trace: str
    out: str
    profile: Optional[str] = None
    profile_out: Optional[str] = None
    seed: int = 0
    cfo_hz: float = 0.0


class CalibrateInjectResponse(BaseModel):
    out_path: str
    profile_path: str


class HealthResponse(BaseModel):
    status: str
    version: str
