"""Passive bistatic localization on a 2-D floor plan.

Each reflected path pins the target to an ellipse with the transmitter and
receiver at the foci (total flight length = c * tof) and to a ray leaving
the receive array at the estimated AoA. Intersecting the two gives a closed
form for the range from the receiver:

    r = (s^2 - d^2) / (2 (s - d cos(theta)))

with s the path length, d the tx-rx baseline, and theta the angle between
the AoA ray and the baseline direction at the receiver. A linear array
cannot tell the two sides of its axis apart, so the deployment declares
which half-plane targets live in.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .resolver import EstimateReport
from .signal_model import SPEED_OF_LIGHT, PathParams
from .calibration import direct_path_index

MOBILE = "mobile"
STATIC = "static"

DOPPLER_FLOOR = 0.5  # Hz, below this a path counts as static


class GeometryError(ValueError):
    """Raised when a path's parameters admit no consistent target position."""


def _unit(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (2,):
        raise ValueError(f"{name} must be a 2-vector")
    n = float(np.hypot(v[0], v[1]))
    if n == 0:
        raise ValueError(f"{name} must be nonzero")
    return v / n


@dataclass(frozen=True)
class Deployment:
    """Fixed geometry of one tx/rx pair.

    rx_array_axis is the direction of increasing element index; an AoA of
    90 degrees points broadside. half_plane selects which side of the axis
    the broadside ray leaves on (+1: 90 degrees counterclockwise from the
    axis, -1: clockwise).
    """

    tx_pos: np.ndarray
    rx_pos: np.ndarray
    rx_array_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    half_plane: int = 1
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        object.__setattr__(self, "tx_pos",
                           np.asarray(self.tx_pos, dtype=np.float64).reshape(2))
        object.__setattr__(self, "rx_pos",
                           np.asarray(self.rx_pos, dtype=np.float64).reshape(2))
        object.__setattr__(self, "rx_array_axis",
                           _unit(self.rx_array_axis, "rx_array_axis"))
        if self.half_plane not in (1, -1):
            raise ValueError("half_plane must be +1 or -1")
        if self.c <= 0:
            raise ValueError("c must be positive")

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.tx_pos - self.rx_pos))

    @property
    def direct_tof(self) -> float:
        return self.baseline / self.c

    def _perp(self) -> np.ndarray:
        a = self.rx_array_axis
        return self.half_plane * np.array([-a[1], a[0]])

    def ray(self, aoa: float) -> np.ndarray:
        """Unit direction leaving the rx array for a given arrival angle."""
        return math.cos(aoa) * self.rx_array_axis + math.sin(aoa) * self._perp()

    def to_dict(self) -> dict:
        return {
            "tx_pos_m": [float(x) for x in self.tx_pos],
            "rx_pos_m": [float(x) for x in self.rx_pos],
            "rx_array_axis": [float(x) for x in self.rx_array_axis],
            "half_plane": int(self.half_plane),
            "c_m_per_s": float(self.c),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Deployment":
        return cls(
            tx_pos=np.asarray(d["tx_pos_m"], dtype=np.float64),
            rx_pos=np.asarray(d["rx_pos_m"], dtype=np.float64),
            rx_array_axis=np.asarray(d.get("rx_array_axis", [1.0, 0.0]),
                                     dtype=np.float64),
            half_plane=int(d.get("half_plane", 1)),
            c=float(d.get("c_m_per_s", SPEED_OF_LIGHT)),
        )

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path: str) -> "Deployment":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def forward_path(position: np.ndarray, dep: Deployment) -> tuple[float, float]:
    """Ground-truth (aoa, tof) for a reflector at a known position.

    Used to build synthetic scenes consistent with a deployment. The target
    must lie strictly inside the declared half-plane.
    """
    position = np.asarray(position, dtype=np.float64).reshape(2)
    v = position - dep.rx_pos
    r = float(np.linalg.norm(v))
    if r == 0:
        raise GeometryError("target coincides with the receiver")
    u = v / r
    along = float(u @ dep.rx_array_axis)
    across = float(u @ dep._perp())
    if across <= 0:
        raise GeometryError("target is outside the declared half-plane")
    aoa = math.atan2(across, along)
    tof = (float(np.linalg.norm(position - dep.tx_pos)) + r) / dep.c
    return aoa, tof


@dataclass(frozen=True)
class TargetFix:
    position: np.ndarray
    source_path: PathParams
    mobility: str
    path_index: int = -1

    def to_dict(self) -> dict:
        return {
            "position_m": [float(x) for x in self.position],
            "path_index": int(self.path_index),
            "mobility": self.mobility,
            "aoa_deg": float(np.degrees(self.source_path.aoa)),
            "tof_ns": float(self.source_path.tof * 1e9),
            "doppler_hz": float(self.source_path.doppler),
        }


def locate_reflector(path: PathParams, dep: Deployment,
                     doppler_floor: float = DOPPLER_FLOOR,
                     path_index: int = -1) -> TargetFix:
    """Closed-form ellipse/ray intersection for one reflected path."""
    s = dep.c * path.tof
    d = dep.baseline
    if s <= d * (1 + 1e-12):
        raise GeometryError(
            f"path length {s:.3f} m does not exceed the {d:.3f} m baseline; "
            "the ellipse is degenerate (direct or unphysical path)")
    u = dep.ray(path.aoa)
    cos_rel = float(u @ (dep.tx_pos - dep.rx_pos)) / d if d > 0 else 0.0
    r = (s * s - d * d) / (2.0 * (s - d * cos_rel))
    if r <= 0:
        raise GeometryError("no intersection on the declared half-plane")
    mobility = MOBILE if abs(path.doppler) > doppler_floor else STATIC
    return TargetFix(position=dep.rx_pos + r * u, source_path=path,
                     mobility=mobility, path_index=path_index)


def classify_mobility(report, doppler_floor: float = DOPPLER_FLOOR) -> list[str]:
    """MOBILE for any path whose Doppler magnitude clears the floor.

    Accepts an EstimateReport or a plain path list; flags align with the
    paths in order. Run subtract_direct_doppler first so residual carrier
    offset does not masquerade as motion.
    """
    paths = report.paths if isinstance(report, EstimateReport) else report
    return [MOBILE if abs(p.doppler) > doppler_floor else STATIC for p in paths]


@dataclass(frozen=True)
class LocateResult:
    fixes: list[TargetFix]
    skipped: list[tuple[int, str]]

    def to_dict(self) -> dict:
        return {
            "fixes": [f.to_dict() for f in self.fixes],
            "skipped": [{"path_index": i, "reason": r} for i, r in self.skipped],
        }


def locate_all(report, dep: Deployment,
               doppler_floor: float = DOPPLER_FLOOR,
               tof_window: float = 1e-9) -> LocateResult:
    """Locate every reflected path in a report (or plain path list).

    The direct path (identified by the earliest-arrival rule) is skipped,
    as are paths whose geometry is inconsistent; each skip carries a reason.
    """
    paths = report.paths if isinstance(report, EstimateReport) else list(report)
    fixes: list[TargetFix] = []
    skipped: list[tuple[int, str]] = []
    if not paths:
        return LocateResult(fixes=fixes, skipped=skipped)
    direct = direct_path_index(paths, tof_window)
    for i, path in enumerate(paths):
        if i == direct:
            skipped.append((i, "direct path"))
            continue
        try:
            fixes.append(locate_reflector(path, dep, doppler_floor, path_index=i))
        except GeometryError as e:
            skipped.append((i, str(e)))
    return LocateResult(fixes=fixes, skipped=skipped)
