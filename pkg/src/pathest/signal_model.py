"""Multipath channel model: path parameters, array geometry, sampling grids,
steering vectors, and frequency-domain channel tensor synthesis.

Conventions used throughout the package:

* Angles are measured from the linear array axis and live in the open
  interval (0, pi); broadside is pi/2 and gives an all-ones steering vector.
* The channel is kept in the frequency domain. Subcarrier k carries baseband
  frequency f_k in FFT order (numpy.fft.fftfreq), so a time of flight tau
  appears as the ramp exp(-j 2 pi f_k tau) across subcarriers.
* Doppler gamma rotates successive snapshots by exp(j 2 pi gamma t_s) where
  t_s is the snapshot interval.
* A channel tensor is indexed [tx][rx][subcarrier][snapshot].
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import hadamard

SPEED_OF_LIGHT = 299792458.0

# Legacy long training symbols on the 52 used subcarriers, DC-centered order
# (-26..-1, then +1..+26). The 56-bin variant extends the low edge with
# [1, 1] and the high edge with [-1, -1].
_LTF_LEFT = [1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1,
             1, 1, -1, 1, -1, 1, 1, 1, 1]
_LTF_RIGHT = [1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1,
              -1, -1, 1, -1, 1, -1, 1, 1, 1, 1]


@dataclass(frozen=True)
class PathParams:
    """One propagation path: angles in radians, tof in seconds, doppler in Hz.

    ``atten`` is the complex gain; estimators always emit paths with
    ``abs(atten) > 0`` and ``tof >= 0``.
    """

    aoa: float
    aod: float
    tof: float
    doppler: float
    atten: complex = 1.0 + 0.0j

    def __post_init__(self):
        if not (0.0 < self.aoa < np.pi):
            raise ValueError(f"aoa must lie in (0, pi), got {self.aoa}")
        if not (0.0 < self.aod < np.pi):
            raise ValueError(f"aod must lie in (0, pi), got {self.aod}")
        if not np.isfinite(self.tof) or self.tof < 0.0:
            raise ValueError(f"tof must be finite and >= 0, got {self.tof}")
        if not np.isfinite(self.doppler):
            raise ValueError("doppler must be finite")

    def replace(self, **kw) -> "PathParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear arrays at both ends, element spacing in meters."""

    n_tx: int
    n_rx: int
    spacing: float
    wavelength: float

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.spacing <= 0 or self.wavelength <= 0:
            raise ValueError("spacing and wavelength must be positive")

    @classmethod
    def half_wavelength(cls, n_tx: int, n_rx: int,
                        center_freq: float = 2.412e9,
                        c: float = SPEED_OF_LIGHT) -> "ArrayGeometry":
        lam = c / center_freq
        return cls(n_tx=n_tx, n_rx=n_rx, spacing=lam / 2.0, wavelength=lam)


def _signed_indices(n_sub: int) -> np.ndarray:
    # FFT bin ordering: 0, 1, .., n/2-1, -n/2, .., -1
    return ((np.arange(n_sub) + n_sub // 2) % n_sub) - n_sub // 2


def _occupancy_mask(n_sub: int, max_abs_index: int, min_abs_index: int = 1) -> np.ndarray:
    signed = _signed_indices(n_sub)
    return (np.abs(signed) >= min_abs_index) & (np.abs(signed) <= max_abs_index)


@dataclass(frozen=True, eq=False)
class SamplingGrid:
    """Sampling metadata of a channel tensor.

    ``subcarrier_mask`` marks occupied bins; everything synthesized or
    estimated stays exactly zero on masked bins.
    """

    n_sub: int
    subcarrier_spacing: float
    center_freq: float
    n_time: int
    sample_interval: float
    subcarrier_mask: np.ndarray

    def __post_init__(self):
        if self.n_sub < 1 or self.n_time < 1:
            raise ValueError("n_sub and n_time must be >= 1")
        mask = np.asarray(self.subcarrier_mask, dtype=bool)
        if mask.shape != (self.n_sub,):
            raise ValueError("subcarrier_mask length must equal n_sub")
        if not mask.any():
            raise ValueError("subcarrier_mask must keep at least one bin")
        object.__setattr__(self, "subcarrier_mask", mask)

    @property
    def n_occupied(self) -> int:
        return int(self.subcarrier_mask.sum())

    @property
    def bandwidth(self) -> float:
        return self.n_sub * self.subcarrier_spacing

    def baseband_freqs(self) -> np.ndarray:
        """Per-bin baseband frequency in Hz, FFT order."""
        return np.fft.fftfreq(self.n_sub, d=1.0 / (self.n_sub * self.subcarrier_spacing))

    def signed_indices(self) -> np.ndarray:
        return _signed_indices(self.n_sub)

    def snapshot_times(self) -> np.ndarray:
        return np.arange(self.n_time) * self.sample_interval

    @classmethod
    def wifi_20mhz(cls, n_time: int = 1, sample_interval: float = 25e-3,
                   center_freq: float = 2.412e9) -> "SamplingGrid":
        """64 bins at 312.5 kHz, 56 occupied (indices +-1..28, DC null)."""
        return cls(n_sub=64, subcarrier_spacing=312.5e3, center_freq=center_freq,
                   n_time=n_time, sample_interval=sample_interval,
                   subcarrier_mask=_occupancy_mask(64, 28))

    @classmethod
    def wifi_40mhz(cls, n_time: int = 1, sample_interval: float = 25e-3,
                   center_freq: float = 2.412e9) -> "SamplingGrid":
        """128 bins at 312.5 kHz, occupied indices +-2..58."""
        return cls(n_sub=128, subcarrier_spacing=312.5e3, center_freq=center_freq,
                   n_time=n_time, sample_interval=sample_interval,
                   subcarrier_mask=_occupancy_mask(128, 58, min_abs_index=2))


def _wifi_ltf_symbols(grid: SamplingGrid) -> np.ndarray:
    """Unit-modulus training symbols on the occupied bins, FFT order."""
    signed = grid.signed_indices()
    ltf = np.zeros(grid.n_sub, dtype=np.complex128)
    if grid.n_sub == 64:
        centered = np.concatenate(([1, 1], _LTF_LEFT, [0], _LTF_RIGHT, [-1, -1]))
        for value, k in zip(centered, range(-28, 29)):
            ltf[signed == k] = value
    else:
        # No standard sequence is reproduced for other widths; tile the
        # 56-symbol pattern over the occupied bins (known at both ends,
        # which is all the estimator requires).
        base = np.concatenate(([1, 1], _LTF_LEFT, _LTF_RIGHT, [-1, -1]))
        occ = np.flatnonzero(grid.subcarrier_mask[np.argsort(signed)])
        order = np.argsort(signed)
        occupied_bins = order[occ]
        reps = int(np.ceil(occupied_bins.size / base.size))
        ltf[occupied_bins] = np.tile(base, reps)[:occupied_bins.size]
    ltf[~grid.subcarrier_mask] = 0.0
    return ltf


def _tx_mapping(n_tx: int) -> np.ndarray:
    """Orthogonal +-1 slot mapping spreading tx streams over training slots."""
    if n_tx == 1:
        return np.array([[1.0]], dtype=np.complex128)
    if n_tx == 2:
        return np.array([[1, -1], [1, 1]], dtype=np.complex128)
    if n_tx == 4:
        return np.array([[1, -1, 1, 1],
                         [1, 1, -1, 1],
                         [1, 1, 1, -1],
                         [-1, 1, 1, 1]], dtype=np.complex128)
    if n_tx & (n_tx - 1) == 0:
        return hadamard(n_tx).astype(np.complex128)
    raise ValueError(f"no orthogonal training mapping for n_tx={n_tx}")


@dataclass(frozen=True, eq=False)
class TrainingField:
    """Known training symbols plus the per-slot tx mapping matrix."""

    ltf: np.ndarray
    mapping: np.ndarray

    def __post_init__(self):
        ltf = np.asarray(self.ltf, dtype=np.complex128)
        mapping = np.asarray(self.mapping, dtype=np.complex128)
        if mapping.ndim != 2:
            raise ValueError("mapping must be a 2-D (n_tx, n_slots) matrix")
        gram = mapping @ mapping.conj().T
        scale = gram[0, 0].real
        if scale <= 0 or not np.allclose(gram, scale * np.eye(mapping.shape[0]),
                                         atol=1e-9 * max(scale, 1.0)):
            raise ValueError("mapping rows must be orthogonal with equal norm")
        object.__setattr__(self, "ltf", ltf)
        object.__setattr__(self, "mapping", mapping)

    @property
    def n_tx(self) -> int:
        return self.mapping.shape[0]

    @property
    def n_slots(self) -> int:
        return self.mapping.shape[1]

    @property
    def mapping_scale(self) -> float:
        """Row norm squared of the mapping (2 for the 2x2 case)."""
        return float((self.mapping @ self.mapping.conj().T)[0, 0].real)

    def occupied_energy(self, grid: SamplingGrid) -> float:
        """Sum of |ltf_k|^2 over occupied bins; the per-bin correlation gain."""
        return float(np.sum(np.abs(self.ltf[grid.subcarrier_mask]) ** 2))

    @classmethod
    def wifi(cls, grid: SamplingGrid, n_tx: int) -> "TrainingField":
        return cls(ltf=_wifi_ltf_symbols(grid), mapping=_tx_mapping(n_tx))


@dataclass(eq=False)
class ChannelTensor:
    """Frequency-domain channel indexed [tx][rx][subcarrier][snapshot]."""

    data: np.ndarray
    grid: SamplingGrid

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim != 4:
            raise ValueError("tensor must have axes (tx, rx, subcarrier, snapshot)")
        if self.data.shape[2] != self.grid.n_sub or self.data.shape[3] != self.grid.n_time:
            raise ValueError(f"data shape {self.data.shape} inconsistent with grid "
                             f"(n_sub={self.grid.n_sub}, n_time={self.grid.n_time})")

    @property
    def n_tx(self) -> int:
        return self.data.shape[0]

    @property
    def n_rx(self) -> int:
        return self.data.shape[1]

    @property
    def n_sub(self) -> int:
        return self.data.shape[2]

    @property
    def n_time(self) -> int:
        return self.data.shape[3]

    @property
    def subcarrier_mask(self) -> np.ndarray:
        return self.grid.subcarrier_mask

    def copy(self) -> "ChannelTensor":
        return ChannelTensor(self.data.copy(), self.grid)

    def occupied_power(self) -> float:
        """Mean |h|^2 per occupied element."""
        return float(np.mean(np.abs(self.data[:, :, self.subcarrier_mask, :]) ** 2))

    def total_energy(self) -> float:
        return float(np.sum(np.abs(self.data) ** 2))

    def select(self, tx: int | None = None, time: int | None = None) -> "ChannelTensor":
        """Reduce to one tx antenna and/or one snapshot, keeping all four axes."""
        data = self.data
        grid = self.grid
        if tx is not None:
            data = data[tx:tx + 1]
        if time is not None:
            data = data[..., time:time + 1]
            grid = replace(grid, n_time=1)
        return ChannelTensor(data.copy(), grid)

    def __add__(self, other: "ChannelTensor") -> "ChannelTensor":
        return ChannelTensor(self.data + other.data, self.grid)

    def __sub__(self, other: "ChannelTensor") -> "ChannelTensor":
        return ChannelTensor(self.data - other.data, self.grid)

    def __mul__(self, scalar: complex) -> "ChannelTensor":
        return ChannelTensor(self.data * scalar, self.grid)

    __rmul__ = __mul__


@dataclass(frozen=True)
class NoiseSpec:
    """Circular complex white noise of the given per-sample power (variance)."""

    power: float
    seed: int | None = None

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("noise power must be >= 0")

    @classmethod
    def for_snr(cls, signal: ChannelTensor, snr_db: float,
                seed: int | None = None) -> "NoiseSpec":
        """Power chosen so occupied-element SNR equals snr_db."""
        return cls(power=signal.occupied_power() / 10.0 ** (snr_db / 10.0), seed=seed)

    def sample(self, grid: SamplingGrid, n_tx: int, n_rx: int,
               rng: np.random.Generator | None = None) -> np.ndarray:
        """Draw (n_tx, n_rx, n_sub, n_time) noise, zero on masked bins."""
        if rng is None:
            rng = np.random.default_rng(self.seed)
        shape = (n_tx, n_rx, grid.n_sub, grid.n_time)
        w = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        w *= np.sqrt(self.power / 2.0)
        w[:, :, ~grid.subcarrier_mask, :] = 0.0
        return w


def steering_rx(geom: ArrayGeometry, aoa: float) -> np.ndarray:
    """Receive steering vector; element m carries exp(-j 2 pi (d/lambda) m cos(aoa))."""
    if not (0.0 < aoa < np.pi):
        raise ValueError(f"aoa must lie in (0, pi), got {aoa}")
    m = np.arange(geom.n_rx)
    return np.exp(-2j * np.pi * (geom.spacing / geom.wavelength) * m * np.cos(aoa))


def steering_tx(geom: ArrayGeometry, aod: float) -> np.ndarray:
    """Transmit steering vector, same convention as steering_rx."""
    if not (0.0 < aod < np.pi):
        raise ValueError(f"aod must lie in (0, pi), got {aod}")
    n = np.arange(geom.n_tx)
    return np.exp(-2j * np.pi * (geom.spacing / geom.wavelength) * n * np.cos(aod))


def synthesize_path(path: PathParams, geom: ArrayGeometry, tf: TrainingField,
                    grid: SamplingGrid) -> ChannelTensor:
    """Noiseless channel tensor of a single path.

    Entry [i][j][k][t] equals
    atten * exp(j 2 pi doppler t t_s) * c_j(aoa) * g_i(aod) * exp(-j 2 pi f_k tof)
    and is exactly zero on masked subcarriers.
    """
    if tf.ltf.shape[0] != grid.n_sub:
        raise ValueError("training field length does not match grid.n_sub")
    if tf.n_tx != geom.n_tx:
        raise ValueError("training mapping rows do not match geom.n_tx")
    c = steering_rx(geom, path.aoa)
    g = steering_tx(geom, path.aod)
    ramp = np.exp(-2j * np.pi * grid.baseband_freqs() * path.tof)
    ramp[~grid.subcarrier_mask] = 0.0
    rot = np.exp(2j * np.pi * path.doppler * grid.snapshot_times())
    data = path.atten * np.einsum("i,j,k,t->ijkt", g, c, ramp, rot)
    return ChannelTensor(data, grid)


def superpose(paths: list[PathParams], geom: ArrayGeometry, tf: TrainingField,
              grid: SamplingGrid, noise: NoiseSpec | None = None) -> ChannelTensor:
    """Linear superposition of path tensors plus optional white noise."""
    data = np.zeros((geom.n_tx, geom.n_rx, grid.n_sub, grid.n_time),
                    dtype=np.complex128)
    for p in paths:
        data += synthesize_path(p, geom, tf, grid).data
    if noise is not None and noise.power > 0:
        data += noise.sample(grid, geom.n_tx, geom.n_rx)
    return ChannelTensor(data, grid)


def apply_htltf_mapping(channel: np.ndarray, tf: TrainingField) -> np.ndarray:
    """Forward training model: per-subcarrier channel -> received symbols.

    channel has shape (n_tx, n_rx, n_sub); the result (n_slots, n_rx, n_sub)
    holds what each rx antenna sees in each training slot.
    """
    channel = np.asarray(channel, dtype=np.complex128)
    if channel.ndim != 3 or channel.shape[0] != tf.n_tx:
        raise ValueError("channel must have shape (n_tx, n_rx, n_sub)")
    return np.einsum("is,ijk,k->sjk", tf.mapping, channel, tf.ltf)


def estimate_channel_htltf(rx_symbols: np.ndarray, tf: TrainingField,
                           grid: SamplingGrid) -> np.ndarray:
    """Invert the slot mapping: received training symbols -> channel matrices.

    Multiplying by the conjugate mapping separates tx streams because the
    mapping rows are orthogonal; the row-norm scale and the known training
    symbols are divided out. Masked bins come back exactly zero.
    """
    rx_symbols = np.asarray(rx_symbols, dtype=np.complex128)
    if rx_symbols.ndim != 3 or rx_symbols.shape[0] != tf.n_slots:
        raise ValueError("rx_symbols must have shape (n_slots, n_rx, n_sub)")
    if tf.ltf.shape[0] != grid.n_sub or rx_symbols.shape[2] != grid.n_sub:
        raise ValueError("subcarrier count mismatch")
    est = np.einsum("is,sjk->ijk", tf.mapping.conj(), rx_symbols) / tf.mapping_scale
    out = np.zeros_like(est)
    occ = grid.subcarrier_mask
    out[:, :, occ] = est[:, :, occ] / tf.ltf[occ]
    return out


def _csd_factor(grid: SamplingGrid, csd: np.ndarray, sign: float) -> np.ndarray:
    csd = np.asarray(csd, dtype=np.float64)
    return np.exp(sign * 2j * np.pi * np.outer(csd, grid.baseband_freqs()))


def apply_cyclic_delay(channel: np.ndarray, csd: np.ndarray,
                       grid: SamplingGrid) -> np.ndarray:
    """Shift tx chain i by its cyclic delay csd[i] seconds (per-bin phase ramp)."""
    channel = np.asarray(channel, dtype=np.complex128)
    factor = _csd_factor(grid, csd, -1.0)[:, None, :]
    if channel.ndim == 4:
        factor = factor[..., None]
    return channel * factor


def remove_cyclic_delay(channel: np.ndarray, csd: np.ndarray,
                        grid: SamplingGrid) -> np.ndarray:
    """Exact inverse of apply_cyclic_delay; csd=0 is the identity."""
    channel = np.asarray(channel, dtype=np.complex128)
    factor = _csd_factor(grid, csd, +1.0)[:, None, :]
    if channel.ndim == 4:
        factor = factor[..., None]
    return channel * factor
