"""Cramér-Rao bounds for the spectral and acoustic parameters.

The Fisher information of the damped-exponential band model follows the
Slepian-Bang form F = (2/sigma^2) Re(J^H J), with J the Jacobian of the
noiseless spectrum with respect to the real parameter vector
theta = (A_1..A_P, b_1..b_P, gamma_1..gamma_P, nu_1..nu_P). Bounds for
the acoustic parameters come from the functional-invariance sandwich
G^T F^{-1} G with G the Jacobian of the acoustic maps, expressed here in
output units (m/s, um, dB/MHz/cm, MRayl) so the square roots compare
directly with RMSE values.

Every analytic gradient in this module is pinned by finite-difference
tests; where printed forms elsewhere disagree in sign or grouping, the
finite-difference-validated form is used.
"""

from dataclasses import dataclass

import numpy as np

from .signal_forward import (ExponentialModel, MediumConstants, RFTrace,
                             attenuation_from_damping, model_spectrum,
                             simulate_trace)
from .spectrum_prep import BandSelection, NormalizedSpectrum, normalized_spectrum, resolve_band
from .units import UM_PER_M, attenuation_natural_to_db

FIM_CONDITION_LIMIT = 1e14


@dataclass(frozen=True)
class ThetaVector:
    """Real 4P-parameter vector plus its band grid and noise level."""

    A: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray   # kappa_n = k_n / (2M), equally spaced
    sigma2: float

    def __post_init__(self):
        for name in ("A", "b", "gamma", "nu", "kappa"):
            object.__setattr__(self, name,
                               np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)))
        if not (self.A.shape == self.b.shape == self.gamma.shape == self.nu.shape):
            raise ValueError("parameter blocks must share one shape")
        if self.kappa.size < 4 * self.A.size:
            raise ValueError("band too short for identifiability: need 2N+1 >= 4P")
        steps = np.diff(self.kappa)
        if steps.size and not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("kappa grid must be equally spaced")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive for bound evaluation")
        if np.any(self.A <= 0):
            raise ValueError("amplitudes must be strictly positive")

    @property
    def P(self) -> int:
        return self.A.size

    @classmethod
    def from_model(cls, model: ExponentialModel, x: NormalizedSpectrum,
                   sigma2: float) -> "ThetaVector":
        return cls(A=model.A.copy(), b=model.b.copy(), gamma=model.gamma.copy(),
                   nu=model.nu.copy(), kappa=x.kappa, sigma2=sigma2)


@dataclass
class CRBReport:
    crb_theta: np.ndarray
    crb_c: float
    crb_d: float
    crb_alpha: float
    crb_Z: float
    fim_condition: float

    def sqrt_bounds(self) -> dict[str, float]:
        return {"c": float(np.sqrt(self.crb_c)), "Z": float(np.sqrt(self.crb_Z)),
                "alpha": float(np.sqrt(self.crb_alpha)), "d": float(np.sqrt(self.crb_d))}


def _basis(theta: ThetaVector) -> np.ndarray:
    """lambda_p^kappa evaluated as exp(2*pi*(gamma_p + i*nu_p)*kappa_n)."""
    expo = 2.0 * np.pi * (theta.gamma + 1j * theta.nu)
    return np.exp(np.outer(theta.kappa, expo))


def model_values(theta: ThetaVector) -> np.ndarray:
    """Noiseless band spectrum g(theta)."""
    return _basis(theta) @ (theta.A * np.exp(1j * theta.b))


def jacobian_g(theta: ThetaVector) -> np.ndarray:
    """(2N+1) x 4P complex Jacobian of g with respect to theta.

    Columns per block: dg/dA_p = e^{ib_p} lam^k, dg/db_p = i a_p lam^k,
    dg/dgamma_p = 2 pi kappa a_p lam^k, dg/dnu_p = i 2 pi kappa a_p lam^k.
    """
    lamk = _basis(theta)
    phase = np.exp(1j * theta.b)
    a = theta.A * phase
    kap = theta.kappa[:, None]
    J_A = lamk * phase[None, :]
    J_b = 1j * lamk * a[None, :]
    J_gamma = 2.0 * np.pi * kap * lamk * a[None, :]
    J_nu = 1j * 2.0 * np.pi * kap * lamk * a[None, :]
    return np.concatenate([J_A, J_b, J_gamma, J_nu], axis=1)


def fim(theta: ThetaVector) -> np.ndarray:
    """Fisher information matrix (2/sigma^2) Re(J^H J)."""
    J = jacobian_g(theta)
    F = (2.0 / theta.sigma2) * np.real(J.conj().T @ J)
    cond = np.linalg.cond(F)
    if not np.isfinite(cond) or cond > FIM_CONDITION_LIMIT:
        raise np.linalg.LinAlgError(
            f"singular Fisher information matrix (condition {cond:.3e})")
    return F


def fim_inverse_factored(theta: ThetaVector) -> np.ndarray:
    """F^{-1} via the factored form (sigma^2/2) P^{-1} Re(Q^H Q)^{-1} P^{-1}.

    Q = [E B, i E B, 2 pi Et B, i 2 pi Et B] with Et the kappa-scaled
    exponential basis and P = diag[I, A, A, A].
    """
    lamk = _basis(theta)
    B = np.exp(1j * theta.b)
    EB = lamk * B[None, :]
    EtB = theta.kappa[:, None] * EB
    Q = np.concatenate([EB, 1j * EB, 2.0 * np.pi * EtB, 1j * 2.0 * np.pi * EtB], axis=1)
    P = theta.P
    p_diag = np.concatenate([np.ones(P), theta.A, theta.A, theta.A])
    core = np.linalg.inv(np.real(Q.conj().T @ Q))
    return (theta.sigma2 / 2.0) * core / np.outer(p_diag, p_diag)


def crb_spectral(theta: ThetaVector) -> np.ndarray:
    """Diagonal of the inverse FIM: per-parameter variance bounds."""
    F = fim(theta)
    return np.diag(np.linalg.inv(F)).copy()


def acoustic_parameters(theta: ThetaVector, mc: MediumConstants,
                        fs: float) -> np.ndarray:
    """Closed-form acoustic maps (c m/s, d um, alpha dB/MHz/cm, Z MRayl) from theta."""
    nu1, nu2 = theta.nu[0], theta.nu[1]
    gamma2 = theta.gamma[1]
    A1 = theta.A[0] * np.cos(theta.b[0])
    c = mc.c_w * nu1 / (nu1 - nu2)
    d_um = 0.5 * mc.c_w * nu1 / fs * UM_PER_M
    alpha = attenuation_from_damping(gamma2, mc.c_w, nu1)
    Z = mc.Z_w * (1.0 + A1 / mc.R_wg) / (1.0 - A1 / mc.R_wg)
    return np.array([c, d_um, alpha, Z])


def acoustic_jacobian(theta: ThetaVector, mc: MediumConstants, fs: float) -> np.ndarray:
    """4P x 4 Jacobian of the acoustic maps with respect to theta.

    Output units match :func:`acoustic_parameters`. Rows are indexed by
    theta ordering (A block, b block, gamma block, nu block).
    """
    P = theta.P
    if P < 2:
        raise ValueError("acoustic transforms need at least two components")
    nu1, nu2 = theta.nu[0], theta.nu[1]
    gamma2 = theta.gamma[1]
    A1 = theta.A[0]
    if nu1 == nu2:
        raise ValueError("singular transformation: nu_1 equals nu_2")
    if nu1 == 0.0:
        raise ValueError("singular transformation: nu_1 vanishes")
    if A1 >= mc.R_wg:
        raise ValueError("impedance pole: A_1 must stay below R_wg")
    G = np.zeros((4 * P, 4))
    i_A1 = 0
    i_g2 = 2 * P + 1
    i_n1 = 3 * P
    i_n2 = 3 * P + 1
    # c = c_w nu1 / (nu1 - nu2)
    G[i_n1, 0] = -mc.c_w * nu2 / (nu1 - nu2) ** 2
    G[i_n2, 0] = mc.c_w * nu1 / (nu1 - nu2) ** 2
    # d = (c_w / 2) (nu1 / fs), reported in um
    G[i_n1, 1] = 0.5 * mc.c_w / fs * UM_PER_M
    # alpha = S * (-gamma2) / (c_w nu1), S converting Np/(Hz m) per radian to dB/MHz/cm
    S = attenuation_natural_to_db(2.0 * np.pi)
    G[i_g2, 2] = -S / (mc.c_w * nu1)
    G[i_n1, 2] = S * gamma2 / (mc.c_w * nu1 ** 2)
    # Z = Z_w (1 + A1/R_wg) / (1 - A1/R_wg)
    G[i_A1, 3] = 2.0 * mc.Z_w / (mc.R_wg * (1.0 - A1 / mc.R_wg) ** 2)
    return G


def crb_acoustic(theta: ThetaVector, mc: MediumConstants, fs: float) -> CRBReport:
    """Variance bounds for (c, d, alpha, Z) by functional invariance."""
    F = fim(theta)
    F_inv = np.linalg.inv(F)
    G = acoustic_jacobian(theta, mc, fs)
    bounds = np.diag(G.T @ F_inv @ G)
    return CRBReport(crb_theta=np.diag(F_inv).copy(),
                     crb_c=float(bounds[0]), crb_d=float(bounds[1]),
                     crb_alpha=float(bounds[2]), crb_Z=float(bounds[3]),
                     fim_condition=float(np.linalg.cond(F)))


def approx_sigma2(model: ExponentialModel, h0: RFTrace, snr_db: float,
                  band: BandSelection, n_signals: int, seed: int) -> float:
    """Monte-Carlo noise variance of the truncated normalized spectrum.

    Time-domain noise turns non-identically distributed after the
    spectral normalization; this estimates the matched iid power by
    averaging, over simulated signals, the sample variance of the
    band residuals against the known noiseless spectrum.
    """
    if n_signals < 1:
        raise ValueError("need at least one simulated signal")
    if np.isinf(snr_db):
        return 0.0
    k_min, k_max = resolve_band(h0, band)
    two_m = 2.0 * h0.n_samples
    clean = model_spectrum(model, np.arange(k_min, k_max + 1), two_m)
    seeds = np.random.SeedSequence(seed).generate_state(n_signals, dtype=np.uint64)
    total = 0.0
    for i in range(n_signals):
        trace = simulate_trace(model, h0, snr_db, int(seeds[i]))
        x = normalized_spectrum(trace, h0, band)
        resid = x.values - clean
        total += float(np.mean(np.abs(resid - resid.mean()) ** 2))
    return total / n_signals
