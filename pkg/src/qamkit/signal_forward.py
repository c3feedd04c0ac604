"""Forward model for QAM RF traces.

A measurement trace contains two echoes (coupling-fluid/sample and
sample/substrate interfaces), each a delayed, attenuated copy of the
reference echo recorded on the bare substrate. In the frequency domain
the ratio of measurement to reference spectra is a sum of damped complex
exponentials in the bin index; this module synthesizes the reference
pulse, maps acoustic ground truth to the exponential parameterization
and simulates noisy traces from it.

Spectral bookkeeping: a trace of ``n`` samples is analyzed on an FFT
grid of length ``2n`` (bin spacing ``fs / (2M)`` with ``M = n``), and a
component with damping ``gamma`` and frequency ``nu`` contributes
``z**k`` at bin ``k`` with ``z = exp(2*pi*(gamma + 1j*nu) / (2M))``.
``nu`` is the echo advance relative to the reference in samples
(``nu = -dt * fs``), so ``|nu| < M`` is required to keep phases
unambiguous.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import gausspulse, hilbert

from .units import M_PER_UM, attenuation_db_to_natural, attenuation_natural_to_db


@dataclass(frozen=True)
class RFTrace:
    """A sampled real-valued RF signal."""

    samples: np.ndarray
    fs: float
    label: str = "measurement"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("trace needs at least 2 samples")
        if not np.all(np.isfinite(samples)):
            raise ValueError("trace samples must be finite")
        if not self.fs > 0:
            raise ValueError("sampling rate must be positive")
        if self.label not in ("reference", "measurement"):
            raise ValueError(f"unknown trace label {self.label!r}")

    @property
    def n_samples(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class GroundTruth:
    """Acoustic sample parameters (I/O units)."""

    c: float = 1600.0      # speed of sound, m/s
    Z: float = 1.63        # acoustic impedance, MRayl
    alpha: float = 10.0    # attenuation, dB/MHz/cm
    d: float = 4.0         # thickness, um

    def __post_init__(self):
        for name in ("c", "Z", "alpha", "d"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"GroundTruth.{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class MediumConstants:
    """Known properties of the coupling water and the glass substrate."""

    c_w: float = 1480.0    # m/s
    Z_w: float = 1.48      # MRayl
    R_wg: float = 0.80     # water-glass pressure reflection coefficient

    def __post_init__(self):
        if not self.c_w > 0:
            raise ValueError("c_w must be positive")
        if not self.Z_w > 0:
            raise ValueError("Z_w must be positive")
        if not 0 < self.R_wg < 1:
            raise ValueError("R_wg must lie in (0, 1)")


@dataclass(frozen=True)
class ExponentialModel:
    """Damped complex exponential components of the normalized spectrum.

    Component p contributes ``a_p * z_p**k`` at bin k, with
    ``a_p = A_p * exp(1j*b_p)`` and ``z_p = exp(2*pi*(gamma_p + 1j*nu_p)/(2M))``.
    ``sigma2`` is the complex noise variance on the band (real and
    imaginary parts carry sigma2/2 each).
    """

    A: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    nu: np.ndarray
    sigma2: float = 0.0

    def __post_init__(self):
        for name in ("A", "b", "gamma", "nu"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            object.__setattr__(self, name, arr)
        shapes = {getattr(self, n).shape for n in ("A", "b", "gamma", "nu")}
        if len(shapes) != 1 or self.A.size < 1:
            raise ValueError("A, b, gamma, nu must share a nonempty shape")
        if not np.all(np.isfinite(self.A)):
            raise ValueError("amplitudes must be finite")
        if not self.sigma2 >= 0:
            raise ValueError("sigma2 must be nonnegative")

    @property
    def P(self) -> int:
        return self.A.size

    @property
    def amplitudes(self) -> np.ndarray:
        """Complex amplitudes a_p."""
        return self.A * np.exp(1j * self.b)


def fft_length(n_samples: int) -> int:
    """FFT grid length for an n-sample trace (2M with M = n_samples)."""
    return 2 * n_samples


def envelope_peak(trace: RFTrace) -> float:
    """Maximum of the Hilbert-transform envelope."""
    return float(np.max(np.abs(hilbert(trace.samples))))


def synth_reference(fc: float = 500e6, frac_bw: float = 0.45, fs: float = 10e9,
                    n_samples: int = 300, t_center: float = 15e-9) -> RFTrace:
    """Synthesize the substrate-echo reference pulse.

    A Gaussian-modulated cosine burst centered at ``t_center`` with
    -6 dB fractional bandwidth ``frac_bw`` around ``fc``.
    """
    if not 0 < fc < fs / 2:
        raise ValueError(f"center frequency {fc:g} Hz violates Nyquist for fs={fs:g} Hz")
    if not 0 < frac_bw < 2:
        raise ValueError("fractional bandwidth must lie in (0, 2)")
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    t = np.arange(n_samples) / fs
    pulse = gausspulse(t - t_center, fc=fc, bw=frac_bw)
    return RFTrace(samples=pulse, fs=fs, label="reference")


def damping_from_attenuation(alpha_db: float, c_w: float, nu1: float) -> float:
    """Second-echo damping gamma_2 from attenuation in dB/MHz/cm.

    The model attenuates component p by exp(2*pi*gamma_p*f/fs), i.e. by
    2*pi*|gamma_p|*f/fs nepers at frequency f; with c_w*nu1/fs equal to
    the round-trip path 2d, matching a physical attenuation of
    alpha_nat*f*2d nepers gives gamma_2 = -alpha_nat*c_w*nu1/(2*pi).
    """
    return -attenuation_db_to_natural(alpha_db) * c_w * nu1 / (2.0 * np.pi)


def attenuation_from_damping(gamma2: float, c_w: float, nu1: float) -> float:
    """Inverse of :func:`damping_from_attenuation`, in dB/MHz/cm."""
    return attenuation_natural_to_db(-2.0 * np.pi * gamma2 / (c_w * nu1))


def acoustic_to_spectral(gt: GroundTruth, mc: MediumConstants, fs: float) -> ExponentialModel:
    """Map acoustic ground truth to the two-component exponential model.

    nu_1 = 2*d*fs/c_w (the first echo arrives earlier than the reference
    by the round trip through the sample thickness at water speed) and
    nu_2 = nu_1*(1 - c_w/c); gamma_2 encodes the round-trip attenuation
    slope; A_1 follows the impedance relation used for inversion, A_2
    the two-interface transmission model.
    """
    d_m = gt.d * M_PER_UM
    nu1 = 2.0 * d_m * fs / mc.c_w
    nu2 = nu1 * (1.0 - mc.c_w / gt.c)
    gamma2 = damping_from_attenuation(gt.alpha, mc.c_w, nu1)
    R1 = (gt.Z - mc.Z_w) / (gt.Z + mc.Z_w)
    A1 = mc.R_wg * R1
    Z_g = mc.Z_w * (1.0 + mc.R_wg) / (1.0 - mc.R_wg)
    R2 = (Z_g - gt.Z) / (Z_g + gt.Z)
    A2 = (1.0 - R1 ** 2) * R2 / mc.R_wg
    return ExponentialModel(A=np.array([A1, A2]), b=np.zeros(2),
                            gamma=np.array([0.0, gamma2]), nu=np.array([nu1, nu2]))


def model_spectrum(model: ExponentialModel, k: np.ndarray, two_m: float) -> np.ndarray:
    """Evaluate sum_p a_p z_p**k on bin indices k for grid length 2M."""
    a = model.amplitudes
    expo = 2.0 * np.pi * (model.gamma + 1j * model.nu) / two_m
    return np.exp(np.outer(k, expo)) @ a


def noise_sigma(h0: RFTrace, snr_db: float) -> float:
    """Time-domain noise std for a requested SNR against the reference envelope peak."""
    return envelope_peak(h0) * 10.0 ** (-snr_db / 20.0)


def simulate_trace(model: ExponentialModel, h0: RFTrace, snr_db: float,
                   rng_seed: int) -> RFTrace:
    """Simulate a noisy measurement trace from the exponential model.

    The reference spectrum is multiplied bin-wise by the model on the
    padded FFT grid, conjugate symmetry is enforced, and the inverse
    transform is truncated back to the trace length. Gaussian noise of
    std ``noise_sigma(h0, snr_db)`` is added unless ``snr_db`` is +inf.
    """
    if np.isnan(snr_db):
        raise ValueError("snr_db must not be NaN")
    n = h0.n_samples
    L = fft_length(n)
    if np.any(np.abs(model.nu) >= L / 2):
        raise ValueError("time-of-flight alias: |nu| must stay below M = n_samples")
    H0 = np.fft.fft(h0.samples, L)
    half = L // 2
    S_half = model_spectrum(model, np.arange(half + 1), float(L))
    S = np.empty(L, dtype=np.complex128)
    S[:half + 1] = S_half
    S[half + 1:] = np.conj(S_half[1:half][::-1])
    S[0] = S_half[0].real
    S[half] = S_half[half].real
    h_full = np.fft.ifft(H0 * S)
    peak = np.max(np.abs(h_full.real))
    if peak > 0 and np.max(np.abs(h_full.imag)) > 1e-9 * peak:
        raise RuntimeError("conjugate symmetry violated in forward synthesis")
    h = h_full.real[:n].copy()
    if not np.isinf(snr_db):
        rng = np.random.default_rng(rng_seed)
        h = h + rng.normal(0.0, noise_sigma(h0, snr_db), size=n)
    return RFTrace(samples=h, fs=h0.fs, label="measurement")
