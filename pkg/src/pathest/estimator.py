"""Single-path parameter estimation on a channel tensor.

The central quantity is the correlation

    z(aoa, aod, tof, doppler) =
        sum_{k,t} |ltf_k|^2 e^{+j 2 pi f_k tof} e^{-j 2 pi doppler t t_s}
                  sum_{i,j} g_i*(aod) c_j*(aoa) h[i,j,k,t]

whose magnitude peaks at the true parameters and whose peak value, divided
by the total coherent gain, recovers the complex attenuation. Estimators
maximize |z| either by exhaustive grid search (estimate_grid), by
per-dimension coordinate descent (estimate_cd), or by the sequential
power-then-correlation pipeline (estimate_sequential) used to seed the
descent cheaply.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .signal_model import (ArrayGeometry, ChannelTensor, PathParams,
                           TrainingField)

ZValue = complex

DIM_ORDER = ("aoa", "aod", "tof", "doppler")

_INACTIVE_DEFAULTS = {"aoa": np.pi / 2, "aod": np.pi / 2, "tof": 0.0, "doppler": 0.0}


@dataclass(frozen=True)
class SearchGrid:
    """Uniform search axes per dimension plus the set of active dimensions.

    Angle axes cover the open interval (lo, hi) in steps from lo + step;
    tof and doppler axes include both endpoints. Inactive dimensions are
    pinned at broadside (pi/2) for angles and 0 for tof/doppler.
    """

    aoa_step: float = 0.02
    aod_step: float = 0.02
    tof_step: float = 0.5e-9
    doppler_step: float = 0.1
    aoa_range: tuple[float, float] = (0.0, np.pi)
    aod_range: tuple[float, float] = (0.0, np.pi)
    tof_range: tuple[float, float] = (0.0, 200e-9)
    doppler_range: tuple[float, float] = (-20.0, 20.0)
    active_dims: frozenset[str] = frozenset(DIM_ORDER)

    def __post_init__(self):
        object.__setattr__(self, "active_dims", frozenset(self.active_dims))
        unknown = self.active_dims - set(DIM_ORDER)
        if unknown:
            raise ValueError(f"unknown dimensions {sorted(unknown)}")
        if not self.active_dims:
            raise ValueError("at least one dimension must be active")
        for dim in DIM_ORDER:
            if self.step(dim) <= 0:
                raise ValueError(f"{dim} step must be positive")
            lo, hi = self.range(dim)
            if not lo < hi:
                raise ValueError(f"{dim} range must be increasing")
            if dim in self.active_dims and self.axis(dim).size == 0:
                raise ValueError(f"{dim} range contains no grid point")

    @classmethod
    def for_dims(cls, n_dims: int, **kw) -> "SearchGrid":
        """1 -> tof; 2 -> aoa+tof; 3 -> +doppler; 4 -> +aod."""
        dims_by_count = {1: {"tof"}, 2: {"aoa", "tof"},
                         3: {"aoa", "tof", "doppler"},
                         4: {"aoa", "aod", "tof", "doppler"}}
        if n_dims not in dims_by_count:
            raise ValueError("n_dims must be 1..4")
        return cls(active_dims=frozenset(dims_by_count[n_dims]), **kw)

    def step(self, dim: str) -> float:
        return getattr(self, f"{dim}_step")

    def range(self, dim: str) -> tuple[float, float]:
        return getattr(self, f"{dim}_range")

    def axis(self, dim: str) -> np.ndarray:
        """Grid values along one dimension (a single pinned value if inactive)."""
        if dim not in self.active_dims:
            return np.array([_INACTIVE_DEFAULTS[dim]])
        lo, hi = self.range(dim)
        step = self.step(dim)
        if dim in ("aoa", "aod"):
            return np.arange(lo + step, hi, step)
        return np.arange(lo, hi + step / 2, step)

    def coarsened(self, factor: float) -> "SearchGrid":
        if factor <= 0:
            raise ValueError("coarsening factor must be positive")
        return replace(self, aoa_step=self.aoa_step * factor,
                       aod_step=self.aod_step * factor,
                       tof_step=self.tof_step * factor,
                       doppler_step=self.doppler_step * factor)

    def snap(self, params: PathParams) -> PathParams:
        """Nearest grid point; inactive dimensions go to their pinned values."""
        values = {}
        for dim in DIM_ORDER:
            axis = self.axis(dim)
            idx = int(np.argmin(np.abs(axis - getattr(params, dim))))
            values[dim] = float(axis[idx])
        return PathParams(atten=params.atten, **values)

    def converged(self, old: PathParams, new: PathParams) -> bool:
        """True when every active dimension moved by less than one step."""
        return all(abs(getattr(new, d) - getattr(old, d)) < self.step(d)
                   for d in self.active_dims)


def default_hypothesis() -> PathParams:
    return PathParams(aoa=np.pi / 2, aod=np.pi / 2, tof=0.0, doppler=0.0)


def _check_inputs(tensor: ChannelTensor, tf: TrainingField, geom: ArrayGeometry):
    if tensor.n_tx != geom.n_tx or tensor.n_rx != geom.n_rx:
        raise ValueError(f"tensor antennas ({tensor.n_tx}x{tensor.n_rx}) do not "
                         f"match geometry ({geom.n_tx}x{geom.n_rx})")
    if tf.ltf.shape[0] != tensor.n_sub:
        raise ValueError("training field length does not match tensor.n_sub")


def _steering_bank_conj(n_elem: int, spacing_over_lambda: float,
                        angles: np.ndarray) -> np.ndarray:
    """Conjugate steering vectors stacked per angle, shape (n_angles, n_elem)."""
    phase = 2j * np.pi * spacing_over_lambda * np.outer(np.cos(angles), np.arange(n_elem))
    return np.exp(phase)


def _ltf_weights(tensor: ChannelTensor, tf: TrainingField) -> np.ndarray:
    w = np.abs(tf.ltf) ** 2
    w[~tensor.subcarrier_mask] = 0.0
    return w


def _tof_bank(freqs: np.ndarray, tofs: np.ndarray) -> np.ndarray:
    """exp(+j 2 pi f_k tof) per hypothesis, shape (n_tof, n_sub)."""
    return np.exp(2j * np.pi * np.outer(tofs, freqs))


def _doppler_bank(times: np.ndarray, dops: np.ndarray) -> np.ndarray:
    """exp(-j 2 pi doppler t) per hypothesis, shape (n_dop, n_time)."""
    return np.exp(-2j * np.pi * np.outer(dops, times))


def coherent_gain(tensor: ChannelTensor, tf: TrainingField,
                  geom: ArrayGeometry) -> float:
    """Normalization turning a peak z into an attenuation estimate."""
    return geom.n_tx * geom.n_rx * tensor.n_time * tf.occupied_energy(tensor.grid)


def z_function(tensor: ChannelTensor, tf: TrainingField, geom: ArrayGeometry,
               hyp: PathParams) -> ZValue:
    """Coherent correlation of the tensor against one parameter hypothesis."""
    _check_inputs(tensor, tf, geom)
    cs = _steering_bank_conj(geom.n_rx, geom.spacing / geom.wavelength,
                             np.array([hyp.aoa]))[0]
    gs = _steering_bank_conj(geom.n_tx, geom.spacing / geom.wavelength,
                             np.array([hyp.aod]))[0]
    x = np.einsum("i,j,ijkt->kt", gs, cs, tensor.data)
    wtau = _ltf_weights(tensor, tf) * np.exp(
        2j * np.pi * tensor.grid.baseband_freqs() * hyp.tof)
    wgam = np.exp(-2j * np.pi * hyp.doppler * tensor.grid.snapshot_times())
    return complex(wtau @ x @ wgam)


def estimate_alpha(tensor: ChannelTensor, tf: TrainingField, geom: ArrayGeometry,
                   hyp: PathParams) -> complex:
    """Complex attenuation: z at the hypothesis over the total coherent gain."""
    return z_function(tensor, tf, geom, hyp) / coherent_gain(tensor, tf, geom)


def sweep_z(tensor: ChannelTensor, tf: TrainingField, geom: ArrayGeometry,
            grid: SearchGrid, dim: str, at: PathParams) -> tuple[np.ndarray, np.ndarray]:
    """z along one dimension's full axis with the other parameters held at ``at``.

    Returns (axis values, complex z values). Cost is one pass over the tensor
    plus a small matrix product against the per-dimension phase bank.
    """
    _check_inputs(tensor, tf, geom)
    if dim not in DIM_ORDER:
        raise ValueError(f"unknown dimension {dim!r}")
    axis = grid.axis(dim)
    ratio = geom.spacing / geom.wavelength
    cs = _steering_bank_conj(geom.n_rx, ratio, np.array([at.aoa]))[0]
    gs = _steering_bank_conj(geom.n_tx, ratio, np.array([at.aod]))[0]
    wtau = _ltf_weights(tensor, tf) * np.exp(
        2j * np.pi * tensor.grid.baseband_freqs() * at.tof)
    wgam = np.exp(-2j * np.pi * at.doppler * tensor.grid.snapshot_times())
    h = tensor.data
    if dim == "aoa":
        per_rx = np.einsum("i,ijkt,k,t->j", gs, h, wtau, wgam)
        bank = _steering_bank_conj(geom.n_rx, ratio, axis)
        return axis, bank @ per_rx
    if dim == "aod":
        per_tx = np.einsum("j,ijkt,k,t->i", cs, h, wtau, wgam)
        bank = _steering_bank_conj(geom.n_tx, ratio, axis)
        return axis, bank @ per_tx
    x = np.einsum("i,j,ijkt->kt", gs, cs, h)
    if dim == "tof":
        per_sub = _ltf_weights(tensor, tf) * (x @ wgam)
        bank = _tof_bank(tensor.grid.baseband_freqs(), axis)
        return axis, bank @ per_sub
    per_time = wtau @ x
    bank = _doppler_bank(tensor.grid.snapshot_times(), axis)
    return axis, bank @ per_time


def estimate_grid(tensor: ChannelTensor, tf: TrainingField, geom: ArrayGeometry,
                  grid: SearchGrid, max_chunk: int = 4_000_000) -> PathParams:
    """Exhaustive argmax of |z| over the Cartesian grid.

    Ties break toward the smallest tof, then the smallest aoa (then aod,
    then doppler), which the evaluation order makes automatic. The angle
    product is evaluated in chunks to bound memory.
    """
    _check_inputs(tensor, tf, geom)
    aoas, aods = grid.axis("aoa"), grid.axis("aod")
    tofs, dops = grid.axis("tof"), grid.axis("doppler")
    ratio = geom.spacing / geom.wavelength
    gbank = _steering_bank_conj(geom.n_tx, ratio, aods)
    wk = _ltf_weights(tensor, tf)
    etof = _tof_bank(tensor.grid.baseband_freqs(), tofs) * wk
    edop = _doppler_bank(tensor.grid.snapshot_times(), dops)

    n_kt = tensor.n_sub * tensor.n_time
    chunk = max(1, int(max_chunk // max(1, aods.size * n_kt)))
    best = None  # (-|z|, tof_i, aoa_i, aod_i, dop_i)
    best_at = None
    for a0 in range(0, aoas.size, chunk):
        cbank = _steering_bank_conj(geom.n_rx, ratio, aoas[a0:a0 + chunk])
        x = np.einsum("bi,aj,ijkt->abkt", gbank, cbank, tensor.data)
        zt = np.tensordot(x, edop, axes=([3], [1]))        # (a, b, k, d)
        z = np.tensordot(etof, zt, axes=([1], [2]))        # (c, a, b, d)
        mag = np.abs(z)
        flat = int(np.argmax(mag))
        ci, ai, bi, di = np.unravel_index(flat, mag.shape)
        key = (-mag[ci, ai, bi, di], int(ci), a0 + int(ai), int(bi), int(di))
        if best is None or key < best:
            best = key
            best_at = z[ci, ai, bi, di]
    ci, ai, bi, di = best[1], best[2], best[3], best[4]
    hyp = PathParams(aoa=float(aoas[ai]), aod=float(aods[bi]),
                     tof=float(tofs[ci]), doppler=float(dops[di]))
    alpha = complex(best_at) / coherent_gain(tensor, tf, geom)
    return hyp.replace(atten=alpha)


def estimate_cd(tensor: ChannelTensor, tf: TrainingField, geom: ArrayGeometry,
                grid: SearchGrid, init: PathParams,
                max_cycles: int = 50) -> PathParams:
    """Cyclic per-dimension refinement of |z| starting from ``init``.

    Each cycle sweeps aoa, aod, tof, doppler (active dimensions only) over
    their full axes with the remaining parameters held fixed; the incumbent
    value is always among the candidates, so the peak magnitude never
    decreases. Stops when a full cycle moves no parameter.
    """
    params, _ = _cd_traced(tensor, tf, geom, grid, init, max_cycles)
    return params


def estimate_cd_traced(tensor: ChannelTensor, tf: TrainingField,
                       geom: ArrayGeometry, grid: SearchGrid, init: PathParams,
                       max_cycles: int = 50) -> tuple[PathParams, list[float]]:
    """estimate_cd plus the |z| value accepted after every sweep."""
    return _cd_traced(tensor, tf, geom, grid, init, max_cycles)


def _cd_traced(tensor, tf, geom, grid, init, max_cycles):
    _check_inputs(tensor, tf, geom)
    current = grid.snap(init)
    trace: list[float] = []
    sweep_dims = [d for d in DIM_ORDER if d in grid.active_dims]
    for _ in range(max_cycles):
        moved = False
        for dim in sweep_dims:
            axis, zvals = sweep_z(tensor, tf, geom, grid, dim, current)
            idx = int(np.argmax(np.abs(zvals)))
            trace.append(float(np.abs(zvals[idx])))
            new_value = float(axis[idx])
            if new_value != getattr(current, dim):
                current = current.replace(**{dim: new_value})
                moved = True
        if not moved:
            break
    alpha = estimate_alpha(tensor, tf, geom, current)
    return current.replace(atten=alpha), trace


def estimate_sequential(tensor: ChannelTensor, tf: TrainingField,
                        geom: ArrayGeometry, grid: SearchGrid) -> PathParams:
    """One pass of the sequential pipeline: angles by combined power, then a
    joint tof/doppler correlation peak.

    Angle stages maximize the summed per-subcarrier power after combining,
    so they need no tof or doppler hypothesis; the final stage correlates
    the combined scalar channel against the tof/doppler phase banks. Used
    to seed estimate_cd (typically on a coarsened grid).
    """
    _check_inputs(tensor, tf, geom)
    ratio = geom.spacing / geom.wavelength
    occ = tensor.subcarrier_mask
    h = tensor.data

    if "aoa" in grid.active_dims:
        axis = grid.axis("aoa")
        bank = _steering_bank_conj(geom.n_rx, ratio, axis)
        combined = np.tensordot(bank, h[:, :, occ, :], axes=([1], [1]))
        power = np.sum(np.abs(combined) ** 2, axis=(1, 2, 3))
        aoa = float(axis[int(np.argmax(power))])
    else:
        aoa = _INACTIVE_DEFAULTS["aoa"]
    cs = _steering_bank_conj(geom.n_rx, ratio, np.array([aoa]))[0]

    if "aod" in grid.active_dims:
        axis = grid.axis("aod")
        bank = _steering_bank_conj(geom.n_tx, ratio, axis)
        per_tx = np.einsum("j,ijkt->ikt", cs, h[:, :, occ, :])
        power = np.sum(np.abs(np.tensordot(bank, per_tx, axes=([1], [0]))) ** 2,
                       axis=(1, 2))
        aod = float(axis[int(np.argmax(power))])
    else:
        aod = _INACTIVE_DEFAULTS["aod"]
    gs = _steering_bank_conj(geom.n_tx, ratio, np.array([aod]))[0]

    x = np.einsum("i,j,ijkt->kt", gs, cs, h)
    tofs, dops = grid.axis("tof"), grid.axis("doppler")
    etof = _tof_bank(tensor.grid.baseband_freqs(), tofs) * _ltf_weights(tensor, tf)
    edop = _doppler_bank(tensor.grid.snapshot_times(), dops)
    zmap = np.abs(etof @ x @ edop.T)
    ci, di = np.unravel_index(int(np.argmax(zmap)), zmap.shape)
    hyp = PathParams(aoa=aoa, aod=aod, tof=float(tofs[ci]), doppler=float(dops[di]))
    return hyp.replace(atten=estimate_alpha(tensor, tf, geom, hyp))
