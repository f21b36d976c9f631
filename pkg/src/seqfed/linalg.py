"""Small symmetric linear-algebra helpers used throughout the estimators.

All routines assume symmetric input; solves try Cholesky first and fall back
to an eigendecomposition pseudo-inverse when the matrix is numerically
singular, reporting that through a boolean flag rather than an exception so
callers can decide whether singularity is fatal in their context.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

# Relative eigenvalue cutoff below which a direction is treated as null.
EIG_RELATIVE_FLOOR = 1e-12


def max_eigenvalue(m) -> float:
    """Largest eigenvalue of a symmetric matrix.

    The input is symmetrized as ``(m + m.T) / 2`` before the solve so that
    round-off asymmetry cannot leak into complex arithmetic.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape == (1, 1):
        return float(m[0, 0])
    if m.shape == (2, 2):
        a, d = m[0, 0], m[1, 1]
        b = 0.5 * (m[0, 1] + m[1, 0])
        return float(0.5 * (a + d) + np.hypot(0.5 * (a - d), b))
    sym = 0.5 * (m + m.T)
    return float(np.linalg.eigvalsh(sym)[-1])


def _pinv_sym(m: np.ndarray) -> np.ndarray:
    """Pseudo-inverse of a symmetric matrix, dropping near-null directions."""
    vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    cutoff = EIG_RELATIVE_FLOOR * max(vals[-1], 0.0)
    inv_vals = np.where(vals > cutoff, 1.0 / np.where(vals > cutoff, vals, 1.0), 0.0)
    return (vecs * inv_vals) @ vecs.T


def solve_spd(a, b) -> tuple[np.ndarray, bool]:
    """Solve ``a x = b`` for symmetric positive-definite ``a``.

    Returns ``(x, singular)`` where ``singular`` is True when the Cholesky
    factorization failed and the pseudo-inverse fallback was used.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    try:
        c = cho_factor(a, lower=True, check_finite=False)
        return cho_solve(c, b, check_finite=False), False
    except (LinAlgError, ValueError):
        return _pinv_sym(a) @ b, True


def inv_spd(a) -> tuple[np.ndarray, bool]:
    """Inverse of a symmetric positive-definite matrix with fallback flag."""
    a = np.asarray(a, dtype=np.float64)
    eye = np.eye(a.shape[0])
    return solve_spd(a, eye)
