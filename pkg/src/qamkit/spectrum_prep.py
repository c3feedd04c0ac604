"""Normalized-spectrum extraction, Cadzow denoising and model-order choice.

The usable band is resolved on the reference magnitude spectrum: the
largest contiguous run of bins around the peak that stay within
``threshold_db`` of it. Inside that band the measurement/reference ratio
is a sum of damped complex exponentials plus (bin-dependent) noise.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .signal_forward import RFTrace, fft_length


@dataclass(frozen=True)
class BandSelection:
    """Band threshold relative to the reference spectral peak, in dB."""

    threshold_db: float = -12.0

    def __post_init__(self):
        if not -30.0 <= self.threshold_db < 0.0:
            raise ValueError("band threshold must lie in [-30, 0) dB")


@dataclass(frozen=True)
class NormalizedSpectrum:
    """Measurement/reference spectral ratio on the resolved band.

    ``values[n]`` sits at absolute bin index ``k_min + n`` of the padded
    FFT grid; the bin spacing is ``fs / (2M)`` and the model exponent
    grid is ``kappa_n = k_n / (2M)``.
    """

    values: np.ndarray
    k_min: int
    k_max: int
    M: float
    fs: float

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.complex128)
        object.__setattr__(self, "values", values)
        if self.k_min < 1:
            raise ValueError("k_min must be >= 1")
        n = self.k_max - self.k_min + 1
        if values.size != n or n < 3 or n % 2 == 0:
            raise ValueError("band must hold an odd number (2N+1 >= 3) of bins")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum values must be finite")
        if not (self.M > 0 and self.fs > 0):
            raise ValueError("M and fs must be positive")

    @property
    def N(self) -> int:
        return (self.values.size - 1) // 2

    @property
    def k_indices(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_max + 1)

    @property
    def kappa(self) -> np.ndarray:
        return self.k_indices / (2.0 * self.M)

    def with_values(self, values: np.ndarray) -> "NormalizedSpectrum":
        return NormalizedSpectrum(values=values, k_min=self.k_min, k_max=self.k_max,
                                  M=self.M, fs=self.fs)


def resolve_band(h0: RFTrace, band: BandSelection) -> tuple[int, int]:
    """Locate the contiguous bin interval within threshold of the reference peak.

    The interval is trimmed at the high-frequency edge to an even bin
    span (odd bin count).
    """
    L = fft_length(h0.n_samples)
    mag = np.abs(np.fft.fft(h0.samples, L)[:L // 2 + 1])
    k_peak = int(np.argmax(mag[1:])) + 1
    thr = mag[k_peak] * 10.0 ** (band.threshold_db / 20.0)
    k_min = k_peak
    while k_min - 1 >= 1 and mag[k_min - 1] >= thr:
        k_min -= 1
    k_max = k_peak
    while k_max + 1 <= L // 2 and mag[k_max + 1] >= thr:
        k_max += 1
    if (k_max - k_min) % 2 == 1:
        k_max -= 1
    if k_max - k_min < 2:
        raise ValueError("resolved band is too narrow (fewer than 3 bins)")
    return k_min, k_max


def normalized_spectrum(h: RFTrace, h0: RFTrace, band: BandSelection) -> NormalizedSpectrum:
    """Ratio of measurement to reference spectra on the resolved band."""
    if h.n_samples != h0.n_samples:
        raise ValueError("measurement and reference must have equal length")
    if h.fs != h0.fs:
        raise ValueError("measurement and reference must share the sampling rate")
    L = fft_length(h0.n_samples)
    k_min, k_max = resolve_band(h0, band)
    H = np.fft.fft(h.samples, L)[k_min:k_max + 1]
    H0 = np.fft.fft(h0.samples, L)[k_min:k_max + 1]
    if np.any(H0 == 0):
        raise ValueError("reference spectrum vanishes inside the band")
    return NormalizedSpectrum(values=H / H0, k_min=k_min, k_max=k_max,
                              M=h0.n_samples, fs=h0.fs)


def cadzow(x: NormalizedSpectrum, P: int, n_iters: int = 5) -> NormalizedSpectrum:
    """Cadzow denoising: alternate rank-P truncation and Hankel averaging."""
    if P < 1:
        raise ValueError("model order must be >= 1")
    if P >= x.N + 1:
        raise ValueError(f"rank truncation is vacuous: P={P} with Hankel size {x.N + 1}")
    if n_iters < 0:
        raise ValueError("iteration count must be nonnegative")
    if n_iters == 0:
        return x.with_values(x.values.copy())
    out = _kernels.cadzow_loop(x.values.copy(), P, n_iters)
    return x.with_values(out)


def select_model_order(x: NormalizedSpectrum, P_min: int = 2,
                       energy_frac: float = 0.10) -> int:
    """Number of Hankel singular values holding more than ``energy_frac`` of the energy.

    Energy means squared singular values (Frobenius energy); the result
    is floored at ``P_min``.
    """
    if not 0.0 < energy_frac < 1.0:
        raise ValueError("energy fraction must lie in (0, 1)")
    if P_min < 2:
        raise ValueError("P_min must be >= 2")
    n = x.N + 1
    i = np.arange(n)
    H = x.values[i[:, None] + i[None, :]]
    s = np.linalg.svd(H, compute_uv=False)
    energy = s ** 2
    significant = int(np.sum(energy > energy_frac * energy.sum()))
    return max(P_min, significant)
