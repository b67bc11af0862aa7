"""Comparison estimators: classic 1-D subspace search and a joint-grid
2-D pass without refinement.

These exist to be compared against, not to be the best available: the 1-D
method sees only one parameter axis at a time, so closely spaced paths that
differ mostly in the other axes stay merged for it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.signal

from .estimator import SearchGrid
from .resolver import ResolverConfig, sic_initialize
from .signal_model import ArrayGeometry, ChannelTensor, PathParams, TrainingField

MUSIC_DIMS = ("aoa", "tof")


@dataclass(frozen=True)
class MusicResult:
    dim: str
    axis: np.ndarray
    spectrum: np.ndarray
    peaks: np.ndarray
    peak_heights: np.ndarray
    n_sources: int
    smoothing: int | None

    @property
    def resolved(self) -> bool:
        return self.peaks.size >= self.n_sources


def _smooth_subarrays(X: np.ndarray, runs: list[np.ndarray], w: int) -> np.ndarray:
    """Average subarray covariances of window w within each contiguous run,
    forward-backward averaged; X is (dim, n_snapshots)."""
    blocks = []
    for run in runs:
        if run.size < w:
            continue
        for s in range(run.size - w + 1):
            blocks.append(X[run[s:s + w]])
    if not blocks:
        raise ValueError(f"smoothing window {w} exceeds every contiguous span")
    acc = np.zeros((w, w), dtype=np.complex128)
    for b in blocks:
        acc += b @ b.conj().T
    acc /= len(blocks) * X.shape[1]
    J = np.eye(w)[::-1]
    return 0.5 * (acc + J @ acc.conj() @ J)


def baseline_music_1d(tensor: ChannelTensor, dim: str,
                      geom: ArrayGeometry | None = None,
                      grid: SearchGrid | None = None,
                      n_sources: int = 2,
                      smoothing: int | None = None) -> MusicResult:
    """Single-dimension subspace spectrum with peak picking.

    dim "aoa" treats receive antennas as the probed vector (everything else
    is a snapshot); dim "tof" probes across occupied subcarriers. Peaks are
    returned sorted by spectrum height. A covariance whose numerical rank is
    below n_sources means the paths are coherent across the available
    snapshots; that raises an error suggesting a smoothing window, which
    trades aperture for decorrelation.
    """
    if dim not in MUSIC_DIMS:
        raise ValueError(f"dim must be one of {MUSIC_DIMS}")
    if grid is None:
        grid = SearchGrid.for_dims(2)
    occ = tensor.subcarrier_mask
    if dim == "aoa":
        if geom is None:
            raise ValueError("aoa spectrum needs the array geometry")
        # (M, n_tx * F_occ * T) snapshot matrix
        X = np.transpose(tensor.data[:, :, occ, :], (1, 0, 2, 3))
        X = X.reshape(tensor.n_rx, -1)
        runs = [np.arange(tensor.n_rx)]
        axis = grid.axis("aoa")
        m = np.arange(tensor.n_rx if smoothing is None else smoothing)
        ratio = geom.spacing / geom.wavelength
        steer = np.exp(-2j * np.pi * ratio * np.outer(m, np.cos(axis)))
    else:
        freqs = tensor.grid.baseband_freqs()[occ]
        signed = tensor.grid.signed_indices()[occ]
        order = np.argsort(signed)
        X = tensor.data[:, :, occ, :][:, :, order, :]
        X = np.transpose(X, (2, 0, 1, 3)).reshape(order.size, -1)
        freqs = freqs[order]
        signed = signed[order]
        # contiguous spans of the occupied indices (smoothing must not
        # straddle the DC gap, where spacing is non-uniform)
        breaks = np.flatnonzero(np.diff(signed) != 1)
        runs = np.split(np.arange(signed.size), breaks + 1)
        axis = grid.axis("tof")
        f = freqs if smoothing is None else freqs[:smoothing]
        steer = np.exp(-2j * np.pi * np.outer(f, axis))

    if smoothing is None:
        R = X @ X.conj().T / X.shape[1]
    else:
        if not (1 < smoothing <= X.shape[0]):
            raise ValueError("smoothing window must be in (1, vector length]")
        R = _smooth_subarrays(X, runs, smoothing)

    evals, evecs = scipy.linalg.eigh(R)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    tol = max(evals[0], 0.0) * 1e-10
    rank = int(np.sum(evals > tol))
    if rank < n_sources and smoothing is None:
        raise ValueError(
            f"covariance rank {rank} < {n_sources} sources: paths are "
            "coherent across the available snapshots; pass smoothing=<window> "
            "to decorrelate by subarray averaging")
    noise = evecs[:, n_sources:]
    denom = np.sum(np.abs(noise.conj().T @ steer) ** 2, axis=0)
    spectrum = 1.0 / np.maximum(denom, 1e-18)

    idx, _ = scipy.signal.find_peaks(spectrum)
    if idx.size == 0:
        idx = np.array([int(np.argmax(spectrum))])
    order = np.argsort(spectrum[idx])[::-1]
    idx = idx[order]
    return MusicResult(dim=dim, axis=axis, spectrum=spectrum,
                       peaks=axis[idx], peak_heights=spectrum[idx],
                       n_sources=n_sources, smoothing=smoothing)


def baseline_joint_2d(tensor: ChannelTensor, tf: TrainingField,
                      geom: ArrayGeometry, grid: SearchGrid | None = None,
                      max_paths: int = 4) -> list[PathParams]:
    """Joint AoA/ToF grid peeling without the refinement stage.

    This is the cancellation-only pass, reported separately from the full
    pipeline so the refinement stage's contribution stays visible.
    """
    if grid is None:
        grid = SearchGrid.for_dims(2)
    cfg = ResolverConfig(initial="grid", max_paths=max_paths)
    return sic_initialize(tensor, tf, geom, grid, cfg).paths
