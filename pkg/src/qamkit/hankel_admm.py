"""Weighted rank-constrained Hankel approximation by ADMM.

Approximates a band spectrum x by a vector g whose Hankel matrix has
rank at most P, minimizing the weighted squared error to x. The rank
constraint is split onto a separate matrix variable H tied to Hankel(g)
by multipliers; each sweep truncates an SVD (H-update), solves the
fidelity term in closed form per anti-diagonal (g-update) and takes a
multiplier step. The returned spectrum is the anti-diagonal average of
the final H, whose rank bound is enforced by construction.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .spectrum_prep import NormalizedSpectrum

DEFAULT_RHO = 0.1
DEFAULT_ITERS = 200


class SolverError(RuntimeError):
    """ADMM failed to produce a usable iterate."""


@dataclass(frozen=True)
class ADMMConfig:
    """Penalty, iteration budget and data-fidelity weights.

    ``weights=None`` means uniform (all-ones). The solver runs exactly
    ``n_iters`` sweeps; no early stopping, so identical inputs give
    identical outputs.
    """

    rho: float = DEFAULT_RHO
    n_iters: int = DEFAULT_ITERS
    weights: np.ndarray | None = None

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.n_iters < 1:
            raise ValueError("need at least one iteration")
        if self.weights is not None:
            w = np.ascontiguousarray(self.weights, dtype=np.float64)
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite and nonnegative")
            object.__setattr__(self, "weights", w)

    def resolve_weights(self, n: int, P: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(n)
        if self.weights.size != n:
            raise ValueError(f"weight vector length {self.weights.size} != band length {n}")
        if int(np.count_nonzero(self.weights)) < P + 1:
            raise ValueError(f"need at least P+1={P + 1} strictly positive weights")
        return self.weights


@dataclass
class AuditRecord:
    """Per-iteration solver diagnostics."""

    rank_ratio: float      # sigma_{P+1}/sigma_1 of the truncated H
    g_grad_norm: float     # norm of the augmented-Lagrangian gradient in g


@dataclass
class HankelSolution:
    x_approx: np.ndarray
    H_hat: np.ndarray
    converged_residual: float
    audit: list[AuditRecord] = field(default_factory=list)


def hankel(v: np.ndarray) -> np.ndarray:
    """(N+1)x(N+1) Hankel matrix generated by a length-(2N+1) vector."""
    v = np.asarray(v)
    if v.ndim != 1 or v.size % 2 == 0:
        raise ValueError("generator vector must be 1-D with odd length")
    n = (v.size + 1) // 2
    return scipy.linalg.hankel(v[:n], v[n - 1:])


def antidiag_avg(H: np.ndarray) -> np.ndarray:
    """Average each anti-diagonal of a square matrix into a vector.

    Inverse of :func:`hankel` on Hankel-structured input; for arbitrary
    H it generates the Frobenius-nearest Hankel matrix.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("expected a square matrix")
    n = H.shape[0]
    flipped = np.fliplr(H)
    out = np.empty(2 * n - 1, dtype=H.dtype)
    for d in range(2 * n - 1):
        out[d] = np.diagonal(flipped, offset=n - 1 - d).mean()
    return out


def _truncate_rank(A: np.ndarray, P: int) -> tuple[np.ndarray, np.ndarray]:
    U, s, Vh = np.linalg.svd(A)
    return (U[:, :P] * s[:P]) @ Vh[:P, :], s


def solve(x: NormalizedSpectrum, P: int, cfg: ADMMConfig | None = None,
          audit: bool = False) -> HankelSolution:
    """Run the ADMM iteration and average the final rank-P matrix.

    With ``audit=True`` a slower instrumented loop records, for every
    iteration, the post-truncation rank ratio and the gradient norm of
    the augmented Lagrangian at the fresh g iterate.
    """
    cfg = cfg or ADMMConfig()
    if P < 1:
        raise ValueError("model order must be >= 1")
    n2 = x.values.size
    if x.N + 1 <= P:
        raise ValueError(f"rank constraint is vacuous: P={P} with Hankel size {x.N + 1}")
    w = cfg.resolve_weights(n2, P)
    if audit:
        return _solve_audited(x.values, w, P, cfg.rho, cfg.n_iters)
    values = np.ascontiguousarray(x.values)
    try:
        x_approx, _g, H_hat, resid, status, bad_iter = _kernels.admm_loop(
            values, w, P, cfg.rho, cfg.n_iters)
    except Exception as exc:  # LAPACK non-convergence surfaces here
        raise SolverError(f"SVD failed inside the ADMM loop: {exc}") from exc
    if status != 0:
        raise SolverError(f"non-finite iterate at ADMM iteration {bad_iter}")
    if not np.all(np.isfinite(x_approx)):
        raise SolverError("solver produced a non-finite spectrum")
    return HankelSolution(x_approx=x_approx, H_hat=H_hat, converged_residual=float(resid))


def _solve_audited(values: np.ndarray, w: np.ndarray, P: int, rho: float,
                   n_iters: int) -> HankelSolution:
    # Mirrors _kernels._admm_loop step for step; kept in plain numpy so the
    # per-iteration quantities can be recorded.
    n2 = values.size
    n = (n2 + 1) // 2
    mu = np.minimum(np.minimum(np.arange(n2) + 1, n2 - np.arange(n2)), n).astype(np.float64)
    g = values.copy()
    Lam = np.zeros((n, n), dtype=np.complex128)
    H = np.zeros((n, n), dtype=np.complex128)
    records = []
    for q in range(n_iters):
        if not np.all(np.isfinite(g)):
            raise SolverError(f"non-finite iterate at ADMM iteration {q}")
        H, _ = _truncate_rank(hankel(g) - Lam / rho, P)
        s_check = np.linalg.svd(H, compute_uv=False)
        rank_ratio = float(s_check[P] / s_check[0]) if s_check[0] > 0 else 0.0
        lam_sum = antidiag_avg(Lam) * mu
        h_sum = antidiag_avg(H) * mu
        g = (w * values + lam_sum + rho * h_sum) / (w + rho * mu)
        grad = w * (g - values) - lam_sum - rho * h_sum + rho * mu * g
        records.append(AuditRecord(rank_ratio=rank_ratio,
                                   g_grad_norm=float(np.linalg.norm(grad))))
        Lam = Lam + rho * (H - hankel(g))
    resid = float(np.linalg.norm(H - hankel(g)))
    return HankelSolution(x_approx=antidiag_avg(H), H_hat=H,
                          converged_residual=resid, audit=records)
