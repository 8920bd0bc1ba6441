"""Dense linear algebra kernels: damped LU solves, symmetric
eigendecomposition, and projection onto the positive semidefinite cone.

Matrices are plain (n, n) float64 numpy arrays in row-major order.
Factorisations are delegated to LAPACK (partial-pivot LU via
``scipy.linalg.lu_factor``, symmetric eigensolver via ``numpy.linalg.eigh``);
this module owns the damping, the singularity detection, and the cone step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

# A pivot below this magnitude counts as exactly singular.
PIVOT_EPS = 1e-30
# Allowed asymmetry (relative to the largest entry) before sym_eig refuses.
SYM_EPS = 1e-12


class SingularSystemError(RuntimeError):
    """The (damped) system matrix has an exactly singular pivot."""


class NumericalTroubleError(RuntimeError):
    """A numerical routine failed to converge."""


@dataclass
class EigenDecomposition:
    """Eigenvalues in ascending order; eigenvectors as matrix columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def lu_solve(a, b, damping=0.0):
    """Solve (a + damping*I) p = b by partial-pivot LU.

    ``damping`` is added to every diagonal entry before factorisation, so
    the damped system is what gets solved, not a regularised variant of
    the raw one.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    if b.shape != (a.shape[0],):
        raise ValueError("right-hand side length does not match matrix")
    if damping < 0:
        raise ValueError("damping must be >= 0")
    damped = a.copy()
    if damping:
        damped[np.diag_indices_from(damped)] += damping
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = scipy.linalg.lu_factor(damped, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.size and pivots.min() < PIVOT_EPS:
        raise SingularSystemError(
            f"singular pivot {pivots.min():.3e} in {a.shape[0]}x{a.shape[0]} system")
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def sym_eig(a):
    """Eigendecomposition of a symmetric matrix.

    The input must be symmetric to within SYM_EPS (relative to its largest
    entry); it is symmetrised as (a + a^T)/2 before factorising.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    if a.size:
        scale = max(1.0, np.abs(a).max())
        if np.abs(a - a.T).max() > SYM_EPS * scale:
            raise ValueError("matrix is not symmetric within tolerance")
    sym = 0.5 * (a + a.T)
    try:
        w, v = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalTroubleError(f"eigendecomposition failed: {exc}") from exc
    return EigenDecomposition(w, v)


def psd_project(a):
    """Nearest positive semidefinite matrix in Frobenius norm.

    Clamps negative eigenvalues to zero and recombines; idempotent up to
    roundoff.
    """
    dec = sym_eig(a)
    w = np.maximum(dec.eigenvalues, 0.0)
    v = dec.eigenvectors
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)
