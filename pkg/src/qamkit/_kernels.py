"""Hot numeric kernels: fused Cadzow and ADMM iteration loops.

Both loops spend essentially all of their time in small complex SVDs
(one per iteration, Q=200 for ADMM), repeated for every pixel or
Monte-Carlo realization, so they are compiled with numba when available.
Setting the environment variable ``QAMKIT_NO_NUMBA=1`` before import
selects the pure-numpy path instead; both variants are also exported
under explicit names (``*_numba`` / ``*_numpy``) so they can be compared
directly, see ``benchmarks/bench_kernels.py``.

The kernels are deliberately self-contained (Hankel assembly and
anti-diagonal reduction are inlined as index loops) so that a single
source compiles under nopython mode and runs unchanged as plain Python.
"""

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("QAMKIT_NO_NUMBA", "0") != "1"


def _cadzow_loop(x, P, n_iters):
    """Alternating projection: rank-P SVD truncation <-> Hankel structure.

    x: complex128[2N+1], returns the denoised vector after n_iters passes.
    """
    n2 = x.shape[0]
    n = (n2 + 1) // 2
    out = x.copy()
    H = np.empty((n, n), dtype=np.complex128)
    for _ in range(n_iters):
        for i in range(n):
            for j in range(n):
                H[i, j] = out[i + j]
        U, s, Vh = np.linalg.svd(H)
        T = np.ascontiguousarray(U[:, :P] * s[:P].astype(np.complex128)) @ np.ascontiguousarray(Vh[:P, :])
        for d in range(n2):
            lo = max(0, d - n + 1)
            hi = min(d, n - 1)
            acc = 0.0 + 0.0j
            for i in range(lo, hi + 1):
                acc += T[i, d - i]
            out[d] = acc / (hi - lo + 1)
    return out


def _admm_loop(x, w, P, rho, n_iters):
    """ADMM for the weighted rank-constrained Hankel approximation.

    Splitting: H carries the rank constraint, g the weighted data
    fidelity, Lam the scaled multipliers. Per iteration:
      H  <- rank-P SVD truncation of Hankel(g) - Lam/rho
      g  <- elementwise closed form (stationarity of the augmented
            Lagrangian in g): g_d = (w_d x_d + sum_{i+j=d} (Lam_ij
            + rho H_ij)) / (w_d + rho mu_d), mu_d = anti-diag multiplicity
      Lam <- Lam + rho (H - Hankel(g))

    Returns (x_approx, g, H, residual, status, bad_iter) where x_approx
    is the anti-diagonal average of the final H, residual is
    ||H - Hankel(g)||_F, status is 0 on success or 1 if a non-finite
    iterate appeared at iteration bad_iter.
    """
    n2 = x.shape[0]
    n = (n2 + 1) // 2
    mu = np.empty(n2)
    for d in range(n2):
        mu[d] = min(min(d + 1, n2 - d), n)
    g = x.copy()
    Lam = np.zeros((n, n), dtype=np.complex128)
    A = np.empty((n, n), dtype=np.complex128)
    H = np.zeros((n, n), dtype=np.complex128)
    status = 0
    bad_iter = -1
    for q in range(n_iters):
        ok = True
        for d in range(n2):
            if not (np.isfinite(g[d].real) and np.isfinite(g[d].imag)):
                ok = False
                break
        if not ok:
            status = 1
            bad_iter = q
            break
        for i in range(n):
            for j in range(n):
                A[i, j] = g[i + j] - Lam[i, j] / rho
        U, s, Vh = np.linalg.svd(A)
        H = np.ascontiguousarray(U[:, :P] * s[:P].astype(np.complex128)) @ np.ascontiguousarray(Vh[:P, :])
        for d in range(n2):
            lo = max(0, d - n + 1)
            hi = min(d, n - 1)
            acc = 0.0 + 0.0j
            for i in range(lo, hi + 1):
                acc += Lam[i, d - i] + rho * H[i, d - i]
            g[d] = (w[d] * x[d] + acc) / (w[d] + rho * mu[d])
        for i in range(n):
            for j in range(n):
                Lam[i, j] = Lam[i, j] + rho * (H[i, j] - g[i + j])
    x_approx = np.empty(n2, dtype=np.complex128)
    resid = 0.0
    for d in range(n2):
        lo = max(0, d - n + 1)
        hi = min(d, n - 1)
        acc = 0.0 + 0.0j
        for i in range(lo, hi + 1):
            acc += H[i, d - i]
        x_approx[d] = acc / (hi - lo + 1)
    for i in range(n):
        for j in range(n):
            diff = H[i, j] - g[i + j]
            resid += diff.real * diff.real + diff.imag * diff.imag
    return x_approx, g, H, np.sqrt(resid), status, bad_iter


cadzow_loop_numpy = _cadzow_loop
admm_loop_numpy = _admm_loop

if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)
    cadzow_loop_numba = _jit(_cadzow_loop)
    admm_loop_numba = _jit(_admm_loop)
else:  # pragma: no cover
    cadzow_loop_numba = None
    admm_loop_numba = None

if USE_NUMBA:
    cadzow_loop = cadzow_loop_numba
    admm_loop = admm_loop_numba
else:
    cadzow_loop = cadzow_loop_numpy
    admm_loop = admm_loop_numpy


def warmup():
    """Trigger JIT compilation on a tiny problem (no-op on the numpy path)."""
    x = np.exp(2j * np.pi * 0.1 * np.arange(7)) + 0.5
    cadzow_loop(np.ascontiguousarray(x), 1, 1)
    admm_loop(np.ascontiguousarray(x), np.ones(7), 1, 0.025, 2)
