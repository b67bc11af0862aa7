"""Measurement-error handling: hardware phase offsets, per-snapshot timing
slopes (SFO/STO), carrier frequency offset, and reference-path corrections.

Timing errors add a per-subcarrier phase slope that is indistinguishable from
a genuine delay, so absolute ToF is not recoverable from one radio pair.
align_sfo_sto therefore only equalizes the slope across snapshots (making
ToF estimates stable), and anchor_relative_tof shifts the whole ToF axis so
the direct path matches its geometry-derived truth. The same logic applies
to frequency: remove_cfo takes out the coarse carrier offset, and
subtract_direct_doppler removes the common residual using the direct path
as the static reference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .resolver import EstimateReport
from .signal_model import (ChannelTensor, PathParams, apply_cyclic_delay,
                           remove_cyclic_delay)


@dataclass(frozen=True)
class PhaseOffsets:
    """Constant per-chain phase rotations in radians.

    Chain 0 of each array is the reference and must carry offset 0; only
    offsets relative to it are observable.
    """

    tx: np.ndarray
    rx: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tx", np.asarray(self.tx, dtype=np.float64))
        object.__setattr__(self, "rx", np.asarray(self.rx, dtype=np.float64))
        for name, arr in (("tx", self.tx), ("rx", self.rx)):
            if arr.ndim != 1:
                raise ValueError(f"{name} offsets must be a 1-D array")
            if arr.size and arr[0] != 0.0:
                raise ValueError(f"{name} reference chain must have offset 0")
            if np.any(arr <= -np.pi) or np.any(arr > np.pi):
                raise ValueError(f"{name} offsets must lie in (-pi, pi]")


@dataclass(frozen=True)
class CfoEstimate:
    """Coarse carrier offset in Hz plus a bound on what remains after removal."""

    coarse: float
    residual_bound: float = 0.0

    def __post_init__(self):
        if self.residual_bound < 0:
            raise ValueError("residual_bound must be >= 0")


def apply_phase_offsets(tensor: ChannelTensor, po: PhaseOffsets,
                        invert: bool = False) -> ChannelTensor:
    """Rotate chain (i, j) by exp(+-j (tx_i + rx_j)); invert undoes apply exactly."""
    if po.tx.shape[0] != tensor.n_tx or po.rx.shape[0] != tensor.n_rx:
        raise ValueError("offset lengths do not match tensor antennas")
    sign = -1.0 if invert else 1.0
    factor = np.exp(sign * 1j * np.add.outer(po.tx, po.rx))
    return ChannelTensor(tensor.data * factor[:, :, None, None], tensor.grid)


def inject_sfo_sto(tensor: ChannelTensor, slopes: np.ndarray) -> ChannelTensor:
    """Add a timing-error phase slope (radians per signed subcarrier index)
    to each snapshot; a common delay is the special case of equal slopes."""
    slopes = np.asarray(slopes, dtype=np.float64)
    if slopes.shape != (tensor.n_time,):
        raise ValueError("one slope per snapshot required")
    k = tensor.grid.signed_indices()
    factor = np.exp(1j * np.outer(k, slopes))
    return ChannelTensor(tensor.data * factor[None, None, :, :], tensor.grid)


def fit_snapshot_slopes(tensor: ChannelTensor) -> np.ndarray:
    """Per-snapshot phase slope relative to snapshot 0, radians per index.

    The per-bin phase difference is combined across antenna pairs, unwrapped
    along ascending subcarrier index, and fit by least squares. Unwrapping
    bounds the measurable slope: the phase step across the widest occupied-bin
    gap must stay below pi.
    """
    k = tensor.grid.signed_indices()
    occ = tensor.subcarrier_mask
    order = np.argsort(k[occ])
    ks = k[occ][order]
    ref = tensor.data[:, :, occ, 0]
    slopes = np.zeros(tensor.n_time)
    for t in range(1, tensor.n_time):
        cross = np.sum(tensor.data[:, :, occ, t] * np.conj(ref), axis=(0, 1))
        phase = np.unwrap(np.angle(cross[order]))
        slopes[t] = np.polyfit(ks, phase, 1)[0]
    return slopes


def align_sfo_sto(tensor: ChannelTensor) -> ChannelTensor:
    """Equalize timing-error slopes across snapshots (reference: snapshot 0).

    Only the per-subcarrier slope is removed; constant per-snapshot phases
    pass through untouched, so genuine Doppler rotations survive alignment.
    The reference snapshot's own slope also survives, which is why absolute
    ToF stays biased and downstream code works with relative ToF.
    """
    if tensor.n_time < 2:
        raise ValueError("alignment needs at least 2 snapshots")
    return inject_sfo_sto(tensor, -fit_snapshot_slopes(tensor))


def inject_cfo(tensor: ChannelTensor, cfo_hz: float) -> ChannelTensor:
    """Rotate snapshot t by exp(+j 2 pi cfo t t_s), as an offset oscillator would."""
    rot = np.exp(2j * np.pi * cfo_hz * tensor.grid.snapshot_times())
    return ChannelTensor(tensor.data * rot[None, None, None, :], tensor.grid)


def remove_cfo(tensor: ChannelTensor, cfo: CfoEstimate | float) -> ChannelTensor:
    """Take out the coarse carrier offset; exact inverse of inject_cfo.

    Offsets beyond the +-1/(2 t_s) ambiguity fold back exactly in the sampled
    snapshot domain, so removing a 300 Hz estimate of a 300.4 Hz offset leaves
    a clean 0.4 Hz residual. A CfoEstimate whose declared residual bound
    exceeds the ambiguity limit is rejected.
    """
    if isinstance(cfo, CfoEstimate):
        limit = 0.5 / tensor.grid.sample_interval
        if cfo.residual_bound > limit:
            raise ValueError(f"residual bound {cfo.residual_bound} Hz exceeds "
                             f"the +-{limit:.3f} Hz ambiguity of this sampling")
        hz = cfo.coarse
    else:
        hz = float(cfo)
    return inject_cfo(tensor, -hz)


def direct_path_index(paths: list[PathParams], tof_window: float = 1e-9) -> int:
    """Strongest path among those within tof_window of the earliest arrival."""
    if not paths:
        raise ValueError("no paths to search")
    min_tof = min(p.tof for p in paths)
    best = max((i for i, p in enumerate(paths) if p.tof <= min_tof + tof_window),
               key=lambda i: abs(paths[i].atten))
    return best


def anchor_relative_tof(report: EstimateReport, direct_truth_tof: float,
                        tof_window: float = 1e-9) -> EstimateReport:
    """Shift every ToF so the direct path lands on its geometry-derived truth.

    Pairwise ToF differences are preserved exactly; only report.paths is
    rewritten (diagnostic history keeps the raw values).
    """
    idx = direct_path_index(report.paths, tof_window)
    delta = direct_truth_tof - report.paths[idx].tof
    paths = [p.replace(tof=p.tof + delta) for p in report.paths]
    return replace(report, paths=paths)


def subtract_direct_doppler(report: EstimateReport,
                            tof_window: float = 1e-9) -> EstimateReport:
    """Remove the common residual frequency using the direct (static) path."""
    idx = direct_path_index(report.paths, tof_window)
    delta = report.paths[idx].doppler
    paths = [p.replace(doppler=p.doppler - delta) for p in report.paths]
    return replace(report, paths=paths)


@dataclass
class CalibrationProfile:
    """Everything cmd calibrate-inject corrupts and cmd estimate corrects.

    inject() applies, in order: per-chain phase offsets, per-tx cyclic
    delays, carrier offset, a common timing delay, and per-snapshot timing
    slopes. correct() is the receiver-side counterpart: it inverts what is
    invertible (offsets, cyclic delay, coarse CFO) and aligns what is not
    (timing slopes), so a common delay deliberately survives as an absolute
    ToF bias.
    """

    tx_phase: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rx_phase: np.ndarray = field(default_factory=lambda: np.zeros(0))
    csd: np.ndarray = field(default_factory=lambda: np.zeros(0))
    coarse_cfo: float = 0.0
    common_delay: float = 0.0
    snapshot_slopes: np.ndarray | None = None
    # tx/rx coordinates (meters) give the truth ToF of the direct path so
    # reports can be anchored after correction; None disables anchoring.
    tx_pos: np.ndarray | None = None
    rx_pos: np.ndarray | None = None

    def direct_truth_tof(self, c: float = 299792458.0) -> float | None:
        if self.tx_pos is None or self.rx_pos is None:
            return None
        tx = np.asarray(self.tx_pos, dtype=np.float64)
        rx = np.asarray(self.rx_pos, dtype=np.float64)
        return float(np.linalg.norm(tx - rx)) / c

    def _offsets(self, tensor: ChannelTensor) -> PhaseOffsets:
        tx = self.tx_phase if self.tx_phase.size else np.zeros(tensor.n_tx)
        rx = self.rx_phase if self.rx_phase.size else np.zeros(tensor.n_rx)
        return PhaseOffsets(tx=tx, rx=rx)

    def inject(self, tensor: ChannelTensor) -> ChannelTensor:
        out = apply_phase_offsets(tensor, self._offsets(tensor))
        if self.csd.size:
            out = ChannelTensor(apply_cyclic_delay(out.data, self.csd, out.grid),
                                out.grid)
        if self.coarse_cfo:
            out = inject_cfo(out, self.coarse_cfo)
        slopes = np.zeros(tensor.n_time)
        if self.common_delay:
            # delay tau <-> slope -2 pi df tau per signed index
            slopes += -2 * np.pi * tensor.grid.subcarrier_spacing * self.common_delay
        if self.snapshot_slopes is not None:
            slopes += np.asarray(self.snapshot_slopes, dtype=np.float64)
        if np.any(slopes):
            out = inject_sfo_sto(out, slopes)
        return out

    def correct(self, tensor: ChannelTensor) -> ChannelTensor:
        out = apply_phase_offsets(tensor, self._offsets(tensor), invert=True)
        if self.csd.size:
            out = ChannelTensor(remove_cyclic_delay(out.data, self.csd, out.grid),
                                out.grid)
        if self.coarse_cfo:
            out = remove_cfo(out, self.coarse_cfo)
        if out.n_time > 1:
            out = align_sfo_sto(out)
        return out

    def to_dict(self) -> dict:
        return {
            "tx_phase_rad": list(map(float, self.tx_phase)),
            "rx_phase_rad": list(map(float, self.rx_phase)),
            "csd_ns": [float(v * 1e9) for v in self.csd],
            "coarse_cfo_hz": float(self.coarse_cfo),
            "common_delay_ns": float(self.common_delay * 1e9),
            "snapshot_slopes_rad": (None if self.snapshot_slopes is None
                                    else list(map(float, self.snapshot_slopes))),
            "tx_pos_m": (None if self.tx_pos is None
                         else [float(x) for x in np.asarray(self.tx_pos)]),
            "rx_pos_m": (None if self.rx_pos is None
                         else [float(x) for x in np.asarray(self.rx_pos)]),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationProfile":
        return cls(
            tx_phase=np.asarray(d.get("tx_phase_rad", []), dtype=np.float64),
            rx_phase=np.asarray(d.get("rx_phase_rad", []), dtype=np.float64),
            csd=np.asarray(d.get("csd_ns", []), dtype=np.float64) * 1e-9,
            coarse_cfo=float(d.get("coarse_cfo_hz", 0.0)),
            common_delay=float(d.get("common_delay_ns", 0.0)) * 1e-9,
            snapshot_slopes=(None if d.get("snapshot_slopes_rad") is None
                             else np.asarray(d["snapshot_slopes_rad"],
                                             dtype=np.float64)),
            tx_pos=(None if d.get("tx_pos_m") is None
                    else np.asarray(d["tx_pos_m"], dtype=np.float64)),
            rx_pos=(None if d.get("rx_pos_m") is None
                    else np.asarray(d["rx_pos_m"], dtype=np.float64)),
        )

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path: str) -> "CalibrationProfile":
        with open(path) as f:
            return cls.from_dict(json.load(f))
