"""Dense linear algebra on symmetric and SPD matrices.

Every routine works in float64 and is a pure function of its input.
Matrices are plain ``numpy.ndarray`` objects; :func:`as_sym` is the single
place where symmetry is enforced.
"""

from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import lapack

from .errors import EighNotConverged, NotPositiveDefinite

__all__ = [
    "EigenPair",
    "as_sym",
    "default_eps",
    "eigh",
    "spd_sqrt",
    "spd_inv_sqrt",
    "spd_log",
    "spd_func",
    "cholesky",
    "log_det",
    "spd_repair",
    "is_spd",
]

_EPS_FACTOR = 1e-8


class EigenPair(NamedTuple):
    """Eigenvalues in descending order and matching orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_sym(m) -> np.ndarray:
    """Return ``(m + m.T) / 2`` as a float64 array.

    Raises ``ValueError`` for anything that is not a non-empty square matrix.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {m.shape}")
    return 0.5 * (m + m.T)


def default_eps(m) -> float:
    """Clamping floor relative to the average eigenvalue, ``1e-8 * tr(m) / dim``."""
    m = np.asarray(m, dtype=np.float64)
    scale = np.trace(m) / m.shape[0]
    if not np.isfinite(scale) or scale <= 0.0:
        return _EPS_FACTOR
    return _EPS_FACTOR * scale


def eigh(m, check: bool = False) -> EigenPair:
    """Eigendecomposition of a symmetric matrix.

    Eigenvalues are sorted in descending order. Each eigenvector column is
    signed so that its largest-magnitude entry is positive, which makes the
    output reproducible across calls.

    Parameters
    ----------
    m : array_like, shape (d, d)
        Symmetric input. It is symmetrized before factorization.
    check : bool
        Verify the relative reconstruction residual (<= 1e-8) and
        orthonormality (<= 1e-10) of the result.

    Raises
    ------
    EighNotConverged
        LAPACK failed to converge, or ``check`` found a residual too large.
    """
    a = as_sym(m)
    try:
        w, q = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise EighNotConverged(float("inf"), f"eigendecomposition failed: {exc}") from exc
    w = w[::-1].copy()
    q = q[:, ::-1].copy()
    pivot = np.argmax(np.abs(q), axis=0)
    signs = np.where(q[pivot, np.arange(q.shape[1])] < 0.0, -1.0, 1.0)
    q *= signs
    if check:
        recon = (q * w) @ q.T
        resid = np.linalg.norm(recon - a) / max(1.0, np.linalg.norm(a))
        ortho = np.max(np.abs(q.T @ q - np.eye(a.shape[0])))
        if resid > 1e-8 or ortho > 1e-10:
            raise EighNotConverged(max(resid, ortho))
    return EigenPair(w, q)


def spd_func(m, fn, eps: Optional[float] = None, info: Optional[dict] = None) -> np.ndarray:
    """Apply ``fn`` to the eigenvalues of ``m`` after clamping them at ``eps``.

    When ``info`` is a dict, the number of clamped eigenvalues is added to
    ``info["clamped"]``.
    """
    a = as_sym(m)
    if eps is None:
        eps = default_eps(a)
    if eps < 0:
        raise ValueError("eps must be non-negative")
    w, q = eigh(a)
    low = w < eps
    if info is not None:
        info["clamped"] = info.get("clamped", 0) + int(np.count_nonzero(low))
    w = np.where(low, eps, w)
    out = (q * fn(w)) @ q.T
    return 0.5 * (out + out.T)


def spd_sqrt(m, eps: Optional[float] = None, info: Optional[dict] = None) -> np.ndarray:
    """Symmetric square root, ``Q diag(sqrt(max(lambda, eps))) Q^T``."""
    return spd_func(m, np.sqrt, eps, info)


def spd_inv_sqrt(m, eps: Optional[float] = None, info: Optional[dict] = None) -> np.ndarray:
    """Inverse symmetric square root, ``Q diag(1/sqrt(max(lambda, eps))) Q^T``.

    ``eps`` must be positive here, otherwise a zero eigenvalue divides by zero.
    """
    if eps is not None and eps <= 0:
        raise ValueError("spd_inv_sqrt needs eps > 0")
    return spd_func(m, lambda w: 1.0 / np.sqrt(w), eps, info)


def spd_log(m, eps: Optional[float] = None, info: Optional[dict] = None) -> np.ndarray:
    """Matrix logarithm of an SPD matrix via its eigendecomposition."""
    if eps is not None and eps <= 0:
        raise ValueError("spd_log needs eps > 0")
    return spd_func(m, np.log, eps, info)


def cholesky(m) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L @ L.T == m``.

    Raises
    ------
    NotPositiveDefinite
        With ``pivot`` set to the 0-based index of the first non-positive pivot.
    """
    a = as_sym(m)
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite(-1, "matrix has non-finite entries")
    c, info = lapack.dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefinite(info - 1)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return c


def log_det(m) -> float:
    """``log|m|`` for SPD ``m`` from the Cholesky diagonal."""
    return 2.0 * float(np.sum(np.log(np.diag(cholesky(m)))))


def is_spd(m, eps: float = 0.0) -> bool:
    """True when ``m - eps*I`` admits a Cholesky factorization."""
    a = as_sym(m)
    if eps:
        a = a - eps * np.eye(a.shape[0])
    _, info = lapack.dpotrf(a, lower=1, clean=0, overwrite_a=1)
    return info == 0


def spd_repair(m, eps: Optional[float] = None, info: Optional[dict] = None) -> np.ndarray:
    """Symmetrize and raise every eigenvalue below ``eps`` up to ``eps``.

    Input that is already SPD with smallest eigenvalue above ``eps`` is
    returned symmetrized but otherwise untouched (checked cheaply with a
    Cholesky factorization of ``m - eps*I``).
    """
    a = as_sym(m)
    if eps is None:
        eps = default_eps(a)
    if np.all(np.isfinite(a)) and is_spd(a, eps):
        return a
    w, q = eigh(a)
    low = w < eps
    if info is not None:
        info["clamped"] = info.get("clamped", 0) + int(np.count_nonzero(low))
    w = np.where(low, eps, w)
    out = (q * w) @ q.T
    return 0.5 * (out + out.T)
