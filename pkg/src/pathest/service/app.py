"""HTTP face of the toolkit: one POST endpoint per operation.

Error contract: every handled failure is a 400 whose detail carries
``kind`` ("spec" for bad requests, "io" for unreadable or malformed
files) and ``message``, so clients can map them to exit codes without
string matching.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..traceio import TraceFormatError
from . import ops
from .models import (BenchRequest, BenchResponse, CalibrateInjectRequest,
                     CalibrateInjectResponse, EstimateRequest,
                     EstimateResponse, HealthResponse, LocateRequest,
                     LocateResponse, ResolvabilityRequest,
                     ResolvabilityResponse, SimulateRequest, SimulateResponse)


def _run(handler, req):
    try:
        return handler(req)
    except (TraceFormatError, OSError) as e:
        raise HTTPException(400, {"kind": "io", "message": str(e)})
    except ValueError as e:
        raise HTTPException(400, {"kind": "spec", "message": str(e)})


def create_app() -> FastAPI:
    app = FastAPI(title="pathest", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest) -> SimulateResponse:
        return _run(ops.cmd_simulate, req)

    @app.post("/estimate", response_model=EstimateResponse)
    def estimate(req: EstimateRequest) -> EstimateResponse:
        return _run(ops.cmd_estimate, req)

    @app.post("/resolvability", response_model=ResolvabilityResponse)
    def resolvability(req: ResolvabilityRequest) -> ResolvabilityResponse:
        return _run(ops.cmd_resolvability, req)

    @app.post("/bench", response_model=BenchResponse)
    def bench(req: BenchRequest) -> BenchResponse:
        return _run(ops.cmd_bench, req)

    @app.post("/locate", response_model=LocateResponse)
    def locate(req: LocateRequest) -> LocateResponse:
        return _run(ops.cmd_locate, req)

    @app.post("/calibrate/inject", response_model=CalibrateInjectResponse)
    def calibrate_inject(req: CalibrateInjectRequest) -> CalibrateInjectResponse:
        return _run(ops.cmd_calibrate_inject, req)

    return app
