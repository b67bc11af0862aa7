"""File formats: channel-tensor traces, truth sidecars, reports, tables.

Trace container layout (all integers little-endian):

    bytes 0..3    magic ``b"PETR"``
    bytes 4..7    uint32 format version (currently 1)
    bytes 8..11   uint32 header length H
    bytes 12..12+H UTF-8 JSON header: axis extents, subcarrier spacing and
                  mask, center frequency, snapshot interval, array element
                  spacing and wavelength
    bytes 12+H..  channel samples as interleaved re/im float64 pairs
                  (i.e. complex128) in [tx][rx][subcarrier][snapshot] C order

Malformed files raise TraceFormatError naming the byte offset at which
parsing failed. Ground truth, estimate reports, and experiment outputs are
plain JSON (plus CSV for matrix-shaped results) with unit-suffixed keys, so
they diff cleanly and feed plotting tools without custom readers.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .resolver import EstimateReport
from .signal_model import ArrayGeometry, ChannelTensor, PathParams, SamplingGrid

TRACE_MAGIC = b"PETR"
TRACE_VERSION = 1
_PREAMBLE = 12  # magic + version + header length

_HEADER_KEYS = ("n_tx", "n_rx", "n_sub", "n_time", "subcarrier_spacing_hz",
                "center_freq_hz", "sample_interval_s", "element_spacing_m",
                "wavelength_m", "subcarrier_mask")


class TraceFormatError(ValueError):
    """Raised when a trace file cannot be parsed; remembers where."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def write_trace(path, tensor: ChannelTensor, geom: ArrayGeometry) -> None:
    header = {
        "axis_order": "tx,rx,subcarrier,snapshot",
        "n_tx": tensor.n_tx,
        "n_rx": tensor.n_rx,
        "n_sub": tensor.n_sub,
        "n_time": tensor.n_time,
        "subcarrier_spacing_hz": tensor.grid.subcarrier_spacing,
        "center_freq_hz": tensor.grid.center_freq,
        "sample_interval_s": tensor.grid.sample_interval,
        "element_spacing_m": geom.spacing,
        "wavelength_m": geom.wavelength,
        "subcarrier_mask": tensor.grid.subcarrier_mask.astype(int).tolist(),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(struct.pack("<II", TRACE_VERSION, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(tensor.data).astype("<c16").tobytes())


def read_trace(path) -> tuple[ChannelTensor, ArrayGeometry]:
    raw = Path(path).read_bytes()
    if len(raw) < _PREAMBLE:
        raise TraceFormatError(len(raw), "truncated preamble")
    if raw[:4] != TRACE_MAGIC:
        raise TraceFormatError(0, f"bad magic {raw[:4]!r}")
    version = int(np.frombuffer(raw, dtype="<u4", count=1, offset=4)[0])
    if version != TRACE_VERSION:
        raise TraceFormatError(4, f"unsupported version {version}")
    hlen = int(np.frombuffer(raw, dtype="<u4", count=1, offset=8)[0])
    body_start = _PREAMBLE + hlen
    if len(raw) < body_start:
        raise TraceFormatError(len(raw), "truncated header")
    try:
        header = json.loads(raw[_PREAMBLE:body_start].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        pos = getattr(e, "pos", 0)
        raise TraceFormatError(_PREAMBLE + pos, "header is not valid JSON")
    for key in _HEADER_KEYS:
        if key not in header:
            raise TraceFormatError(_PREAMBLE, f"header missing {key!r}")

    shape = tuple(int(header[k]) for k in ("n_tx", "n_rx", "n_sub", "n_time"))
    expected = int(np.prod(shape)) * 16
    if len(raw) - body_start != expected:
        raise TraceFormatError(
            body_start,
            f"payload holds {len(raw) - body_start} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<c16", count=int(np.prod(shape)),
                         offset=body_start).astype(np.complex128).reshape(shape)
    grid = SamplingGrid(
        n_sub=shape[2],
        subcarrier_spacing=float(header["subcarrier_spacing_hz"]),
        center_freq=float(header["center_freq_hz"]),
        n_time=shape[3],
        sample_interval=float(header["sample_interval_s"]),
        subcarrier_mask=np.asarray(header["subcarrier_mask"], dtype=bool),
    )
    geom = ArrayGeometry(n_tx=shape[0], n_rx=shape[1],
                         spacing=float(header["element_spacing_m"]),
                         wavelength=float(header["wavelength_m"]))
    return ChannelTensor(data, grid), geom


def truth_path(trace_path) -> Path:
    """Sidecar filename convention: the trace path plus ``.truth.json``."""
    return Path(f"{trace_path}.truth.json")


def path_to_dict(path: PathParams) -> dict:
    return {
        "aoa_deg": float(np.rad2deg(path.aoa)),
        "aod_deg": float(np.rad2deg(path.aod)),
        "tof_ns": path.tof * 1e9,
        "doppler_hz": path.doppler,
        "atten_re": float(np.real(path.atten)),
        "atten_im": float(np.imag(path.atten)),
    }


def path_from_dict(d: dict) -> PathParams:
    return PathParams(
        aoa=float(np.deg2rad(d["aoa_deg"])),
        aod=float(np.deg2rad(d["aod_deg"])),
        tof=float(d["tof_ns"]) * 1e-9,
        doppler=float(d["doppler_hz"]),
        atten=complex(d["atten_re"], d["atten_im"]),
    )


def write_truth(path, paths: list[PathParams]) -> None:
    write_json(path, {"paths": [path_to_dict(p) for p in paths]})


def read_truth(path) -> list[PathParams]:
    with open(path) as fh:
        doc = json.load(fh)
    return [path_from_dict(d) for d in doc["paths"]]


def report_to_dict(report: EstimateReport) -> dict:
    return {
        "paths": [path_to_dict(p) for p in report.paths],
        "initial_paths": [path_to_dict(p) for p in report.initial_paths],
        "trajectories": [[path_to_dict(p) for p in round_paths]
                         for round_paths in report.trajectories],
        "iterations_used": report.iterations_used,
        "converged": report.converged,
        "residual_power": report.residual_power(),
        "elapsed_s": {k: float(v) for k, v in report.elapsed.items()},
    }


def write_report(path, report: EstimateReport) -> None:
    write_json(path, report_to_dict(report))


def read_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def report_paths(doc: dict) -> list[PathParams]:
    return [path_from_dict(d) for d in doc["paths"]]


def write_json(path, obj) -> None:
    # sorted keys and no timestamps keep equal runs byte-identical
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_matrix_csv(path, matrix: np.ndarray, row_values, col_values,
                     corner: str = "row\\col") -> None:
    """Matrix with labeled rows/cols, one header row and one label column."""
    matrix = np.asarray(matrix)
    if matrix.shape != (len(row_values), len(col_values)):
        raise ValueError(f"matrix shape {matrix.shape} does not match "
                         f"{len(row_values)} row and {len(col_values)} col labels")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([corner] + [_fmt(v) for v in col_values])
        for label, row in zip(row_values, matrix):
            writer.writerow([_fmt(label)] + [_fmt(v) for v in row])


def read_matrix_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of write_matrix_csv: (matrix, row_values, col_values)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    cols = np.array([float(v) for v in rows[0][1:]])
    labels = np.array([float(r[0]) for r in rows[1:]])
    matrix = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return matrix, labels, cols


def _fmt(value) -> str:
    return format(float(value), ".10g")
