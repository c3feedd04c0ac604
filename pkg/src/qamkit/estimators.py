"""Spectral parameter estimators and pulse ranking.

Every estimator returns per-bin pole ratios z_p and complex amplitudes
a_p such that the band spectrum is approximately sum_p a_p * z_p**k at
absolute bin k. Damping/frequency follow from z via
``gamma = (2M / 2pi) * ln|z|`` and ``nu = (2M / 2pi) * arg(z)``.

Estimation failures (rank-deficient subspaces, coincident poles,
ill-conditioned amplitude systems) are reported through the ``failure``
field of the returned estimate, never as exceptions: a failed pixel is
an outlier, not a crashed map job.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import hilbert

from . import hankel_admm
from .hankel_admm import ADMMConfig
from .signal_forward import RFTrace, fft_length
from .spectrum_prep import NormalizedSpectrum

COND_LIMIT = 1e12
Z_GAP_LIMIT = 1e-10


class EstimationError(RuntimeError):
    """Internal signal for unusable intermediate results."""


@dataclass(frozen=True)
class ReweightConfig:
    """Tukey bisquare reweighting knobs for the robust Hankel estimator."""

    tukey_c: float = 4.685
    outer_iters: int = 3
    mad_scale: float = 1.4826

    def __post_init__(self):
        if not self.tukey_c > 0:
            raise ValueError("tukey_c must be positive")
        if self.outer_iters < 1:
            raise ValueError("need at least one outer iteration")


@dataclass(frozen=True)
class SpectralEstimate:
    """Estimated components plus band bookkeeping copied from the input."""

    z: np.ndarray
    a: np.ndarray
    method: str
    k_min: int
    k_max: int
    M: float
    fs: float
    failure: str | None = None
    warning: str | None = None
    weights: np.ndarray | None = None

    @property
    def P(self) -> int:
        return self.z.size

    @property
    def gamma(self) -> np.ndarray:
        return (2.0 * self.M / (2.0 * np.pi)) * np.log(np.abs(self.z))

    @property
    def nu(self) -> np.ndarray:
        return (2.0 * self.M / (2.0 * np.pi)) * np.angle(self.z)

    @property
    def ok(self) -> bool:
        return self.failure is None


def damping_frequency(z: np.ndarray, M: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-component (gamma, nu) from per-bin pole ratios."""
    scale = 2.0 * M / (2.0 * np.pi)
    return scale * np.log(np.abs(z)), scale * np.angle(z)


def extract_frequencies(x_approx: np.ndarray, P: int) -> np.ndarray:
    """Pole ratios via shift invariance of the Hankel signal subspace.

    SVD of Hankel(x_approx); with U the leading P left singular vectors,
    the eigenvalues of pinv(U minus last row) @ (U minus first row) are
    the per-bin ratios z_p.
    """
    x_approx = np.asarray(x_approx)
    n2 = x_approx.size
    if n2 < 2 * P + 1:
        raise EstimationError(f"band too short for order {P}: {n2} < {2 * P + 1}")
    n = (n2 + 1) // 2
    i = np.arange(n)
    H = x_approx[i[:, None] + i[None, :]]
    U = np.linalg.svd(H, full_matrices=False)[0][:, :P]
    U_first_dropped = U[1:, :]
    U_last_dropped = U[:-1, :]
    if np.linalg.cond(U_last_dropped) > COND_LIMIT:
        raise EstimationError("rank-deficient signal subspace")
    return np.linalg.eigvals(np.linalg.pinv(U_last_dropped) @ U_first_dropped)


def ls_amplitudes(x: NormalizedSpectrum, z: np.ndarray,
                  weights: np.ndarray | None = None) -> np.ndarray:
    """Least-squares amplitudes against the band samples.

    Solves the conjugate-transpose normal equations of the Vandermonde
    system E a = x with E_{np} = z_p**k_n on absolute bin indices. With
    ``weights`` the fit minimizes the same weighted norm as the Hankel
    solver's data term.
    """
    z = np.asarray(z)
    if np.any(z == 0) or not np.all(np.isfinite(z)):
        raise EstimationError("invalid pole ratio (zero or non-finite)")
    scale = np.max(np.abs(z))
    for i in range(z.size):
        for j in range(i + 1, z.size):
            if np.abs(z[i] - z[j]) <= Z_GAP_LIMIT * scale:
                raise EstimationError("coincident pole ratios")
    E = z[None, :] ** x.k_indices[:, None]
    if not np.all(np.isfinite(E)):
        raise EstimationError("pole powers overflow on the band")
    if np.linalg.cond(E) > COND_LIMIT:
        raise EstimationError("ill-conditioned amplitude system")
    Ew = E if weights is None else E * weights[:, None]
    G = E.conj().T @ Ew
    if not np.all(np.isfinite(G)) or np.linalg.cond(G) > COND_LIMIT ** 2:
        raise EstimationError("ill-conditioned amplitude system")
    return np.linalg.solve(G, Ew.conj().T @ x.values)


def tukey_weight(e: complex, delta: float, c: float) -> float:
    """Tukey bisquare weight: (1 - (|e|/(c*delta))**2)**2, zero beyond the cutoff."""
    r = abs(e)
    cut = c * delta
    if r > cut:
        return 0.0
    return (1.0 - (r / cut) ** 2) ** 2


def _mad_scale(e: np.ndarray, mad_scale: float) -> float:
    # complex residuals: center by the component-wise median, then take moduli
    center = np.median(e.real) + 1j * np.median(e.imag)
    return mad_scale * float(np.median(np.abs(e - center)))


def _tukey_loss(e: np.ndarray, cut: float) -> float:
    # the M-estimation objective whose IRLS weights are the bisquare ones
    u2 = np.minimum(np.abs(e) / cut, 1.0) ** 2
    return float(np.sum(1.0 - (1.0 - u2) ** 3))


def _failed(x: NormalizedSpectrum, method: str, reason: str) -> SpectralEstimate:
    return SpectralEstimate(z=np.empty(0, dtype=complex), a=np.empty(0, dtype=complex),
                            method=method, k_min=x.k_min, k_max=x.k_max, M=x.M,
                            fs=x.fs, failure=reason)


def _estimate(x: NormalizedSpectrum, P: int, z: np.ndarray, method: str,
              weights: np.ndarray | None = None) -> SpectralEstimate:
    a = ls_amplitudes(x, z, weights)
    return SpectralEstimate(z=z, a=a, method=method, k_min=x.k_min, k_max=x.k_max,
                            M=x.M, fs=x.fs)


def _hankel_pass(x: NormalizedSpectrum, P: int, cfg: ADMMConfig,
                 weights: np.ndarray | None, method: str) -> SpectralEstimate:
    run_cfg = ADMMConfig(rho=cfg.rho, n_iters=cfg.n_iters, weights=weights)
    sol = hankel_admm.solve(x, P, run_cfg)
    z = extract_frequencies(sol.x_approx, P)
    est = _estimate(x, P, z, method, weights)
    return replace(est, weights=weights)


def _residuals(x: NormalizedSpectrum, est: SpectralEstimate) -> np.ndarray:
    return x.values - (est.z[None, :] ** x.k_indices[:, None]) @ est.a


def estimate_hk(x: NormalizedSpectrum, P: int,
                admm_cfg: ADMMConfig | None = None) -> SpectralEstimate:
    """Unweighted Hankel estimator (the robust variant's initialization)."""
    cfg = admm_cfg or ADMMConfig()
    try:
        return _hankel_pass(x, P, cfg, None, "hk")
    except (EstimationError, hankel_admm.SolverError) as exc:
        return _failed(x, "hk", str(exc))


def estimate_rhk(x: NormalizedSpectrum, P: int, admm_cfg: ADMMConfig | None = None,
                 rw: ReweightConfig | None = None) -> SpectralEstimate:
    """Iteratively reweighted Hankel estimator.

    Each outer pass solves the weighted problem, re-extracts poles and
    amplitudes (both under the current weights), then refreshes Tukey
    bisquare weights from the MAD-scaled reconstruction residuals.
    Weights start at one, so a single outer iteration reproduces
    :func:`estimate_hk` exactly. Because the bisquare loss is
    redescending, plain IRLS is not guaranteed to descend; a pass is
    accepted only if it does not increase the robust loss measured at
    the initial residual scale.
    """
    cfg = admm_cfg or ADMMConfig()
    rw = rw or ReweightConfig()
    try:
        est = _hankel_pass(x, P, cfg, None, "rhk")
    except (EstimationError, hankel_admm.SolverError) as exc:
        return _failed(x, "rhk", str(exc))
    loss_cut = None
    loss_cur = None
    for it in range(1, rw.outer_iters):
        residuals = _residuals(x, est)
        delta = _mad_scale(residuals, rw.mad_scale)
        if delta == 0.0:
            break
        if loss_cut is None:
            loss_cut = rw.tukey_c * delta
            loss_cur = _tukey_loss(residuals, loss_cut)
        cut = rw.tukey_c * delta
        r = np.abs(residuals) / cut
        weights = np.where(r <= 1.0, (1.0 - np.minimum(r, 1.0) ** 2) ** 2, 0.0)
        if not np.any(weights == 0.0):
            # no residual reaches the rejection cutoff: the sample is
            # uncontaminated and a reweighted refit would only trade
            # efficiency for nothing
            break
        if int(np.count_nonzero(weights)) < P + 1:
            return replace(est, warning="reweighting left fewer than P+1 live bins; "
                                        "kept previous estimate")
        try:
            candidate = _hankel_pass(x, P, cfg, weights, "rhk")
        except (EstimationError, hankel_admm.SolverError) as exc:
            return replace(est, warning=f"pass {it + 1} failed ({exc}); kept previous estimate")
        loss_cand = _tukey_loss(_residuals(x, candidate), loss_cut)
        # each saturated residual costs exactly 1; demand at least half a
        # bin's worth of improvement before trading efficiency for robustness
        if loss_cand > loss_cur - 0.5:
            return replace(est, warning=f"pass {it + 1} did not reduce the robust loss; "
                                        "kept previous estimate")
        est, loss_cur = candidate, loss_cand
    return est


def estimate_ar(x: NormalizedSpectrum, P: int) -> SpectralEstimate:
    """Autoregressive baseline: least-squares linear prediction (Prony).

    Fits x_k = -sum_m c_m x_{k-m} over the band and takes the roots of
    the prediction polynomial as pole ratios.
    """
    v = x.values
    n2 = v.size
    if n2 < 2 * P + 1:
        return _failed(x, "ar", f"band too short for order {P}")
    try:
        rows = np.empty((n2 - P, P), dtype=complex)
        for m in range(P):
            rows[:, m] = v[P - 1 - m:n2 - 1 - m]
        coef, *_ = np.linalg.lstsq(rows, -v[P:], rcond=None)
        z = np.roots(np.concatenate(([1.0 + 0.0j], coef)))
        if np.any(z == 0) or not np.all(np.isfinite(z)):
            return _failed(x, "ar", "prediction polynomial produced invalid roots")
        return _estimate(x, P, z, "ar")
    except (EstimationError, np.linalg.LinAlgError) as exc:
        return _failed(x, "ar", str(exc))


def estimate_esprit(x: NormalizedSpectrum, P: int) -> SpectralEstimate:
    """Subspace baseline: shift invariance on Hankel(x) without the ADMM stage."""
    try:
        z = extract_frequencies(x.values, P)
        return _estimate(x, P, z, "esprit")
    except (EstimationError, np.linalg.LinAlgError) as exc:
        return _failed(x, "esprit", str(exc))


def rank_pulses(est: SpectralEstimate, h0: RFTrace) -> tuple[SpectralEstimate, list[int]]:
    """Identify the two interface echoes among the estimated components.

    Each component's band spectrum is placed back under the reference
    spectrum, inverse-transformed, and scored by its Hilbert-envelope
    peak. The two strongest survive (envelope ties broken by earlier
    arrival); of those, component 1 is the earlier echo. Returns the
    ranked two-component estimate and the discarded component indices.
    """
    if not est.ok:
        return est, []
    L = fft_length(h0.n_samples)
    H0 = np.fft.fft(h0.samples, L)
    ks = np.arange(est.k_min, est.k_max + 1)
    usable = []
    env_peaks = []
    tofs = []
    nu = est.nu
    for p in range(est.P):
        if not (np.isfinite(est.z[p]) and np.isfinite(est.a[p]) and est.z[p] != 0):
            continue
        comp = est.a[p] * est.z[p] ** ks
        if not np.all(np.isfinite(comp)):
            continue
        spec = np.zeros(L // 2 + 1, dtype=complex)
        spec[ks] = comp * H0[ks]
        pulse = np.fft.irfft(spec, L)
        peak = float(np.max(np.abs(hilbert(pulse))))
        if not np.isfinite(peak):
            continue
        usable.append(p)
        env_peaks.append(peak)
        tofs.append(-nu[p] / est.fs)
    if len(usable) < 2:
        return replace(est, failure="fewer than 2 usable components"), []
    env_peaks = np.asarray(env_peaks)
    tofs = np.asarray(tofs)
    order = np.lexsort((tofs, -env_peaks))
    chosen = sorted(order[:2], key=lambda i: tofs[i])
    keep = [usable[i] for i in chosen]
    discarded = [p for p in range(est.P) if p not in keep]
    ranked = replace(est, z=est.z[keep].copy(), a=est.a[keep].copy())
    return ranked, discarded
