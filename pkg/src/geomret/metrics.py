"""Distances and divergences between Gaussian signatures and mixtures.

All public distances return a :class:`DistanceValue`. Symmetric measures are
exactly symmetric in floating point: either the formula is a commutative
sum of the two directions, or the arguments are put in a canonical order
before evaluation.
"""

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import DimMismatch, IncompatibleMetric, NotPositiveDefinite
from .signature import GaussianSignature, GmmModel
from .symlinalg import cholesky, spd_repair, spd_sqrt

__all__ = [
    "MetricKind",
    "DistanceValue",
    "kl_gaussian",
    "kl_symmetric",
    "kl_diag_matrix",
    "kl_variational",
    "kl_variational_symmetric",
    "wasserstein2",
    "riemannian",
    "euclidean_mean",
    "distance",
]


class MetricKind(enum.Enum):
    GAUSSIAN_KL = "gaussian-kl"
    VARIATIONAL_KL = "variational-kl"
    WASSERSTEIN = "wasserstein"
    RIEMANNIAN = "riemannian"
    EUCLIDEAN_MEAN = "euclidean"

    @classmethod
    def parse(cls, name) -> "MetricKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown metric {name!r}; expected one of {valid}") from None

    @property
    def needs_gmm(self) -> bool:
        return self is MetricKind.VARIATIONAL_KL


@dataclass(frozen=True)
class DistanceValue:
    value: float
    kind: MetricKind
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __float__(self):
        return self.value


def _check_dims(a, b):
    if a.dim != b.dim:
        raise DimMismatch(f"dimension mismatch: {a.dim} vs {b.dim}")


def _canonical(a: GaussianSignature, b: GaussianSignature):
    # evaluate asymmetric formulas in a fixed argument order so d(a,b) == d(b,a) bitwise
    ka = (a.mean.tobytes(), a.cov.tobytes())
    kb = (b.mean.tobytes(), b.cov.tobytes())
    return (a, b) if ka <= kb else (b, a)


def _cond_from_chol(chol):
    d = np.diag(chol)
    return float((d.max() / d.min()) ** 2)


def _kl_from_chol(mu_a, la, mu_b, lb):
    d = mu_a.size
    m = solve_triangular(lb, la, lower=True)
    z = solve_triangular(lb, mu_b - mu_a, lower=True)
    logdet = 2.0 * (np.sum(np.log(np.diag(lb))) - np.sum(np.log(np.diag(la))))
    val = 0.5 * (logdet - d + np.sum(m * m) + z @ z)
    return max(float(val), 0.0)


def kl_gaussian(a: GaussianSignature, b: GaussianSignature, eps: Optional[float] = None) -> float:
    """Directed KL divergence ``KL(N_a || N_b)``.

    Both covariances are first repaired to SPD with floor ``eps``
    (default: relative to each matrix's mean eigenvalue). Round-off
    negatives are clipped to zero.
    """
    _check_dims(a, b)
    la = cholesky(spd_repair(a.cov, eps))
    lb = cholesky(spd_repair(b.cov, eps))
    return _kl_from_chol(a.mean, la, b.mean, lb)


def kl_symmetric(a: GaussianSignature, b: GaussianSignature, eps: Optional[float] = None) -> DistanceValue:
    """``KL(a||b)/2 + KL(b||a)/2`` between two Gaussian signatures."""
    _check_dims(a, b)
    info = {}
    la = cholesky(spd_repair(a.cov, eps, info))
    lb = cholesky(spd_repair(b.cov, eps, info))
    val = 0.5 * _kl_from_chol(a.mean, la, b.mean, lb) + 0.5 * _kl_from_chol(b.mean, lb, a.mean, la)
    info["condition"] = max(_cond_from_chol(la), _cond_from_chol(lb))
    return DistanceValue(val, MetricKind.GAUSSIAN_KL, info)


def kl_diag_matrix(mu_p, var_p, mu_q, var_q) -> np.ndarray:
    """Pairwise KL between diagonal Gaussians.

    Returns ``K[i, j] = KL(N(mu_p[i], var_p[i]) || N(mu_q[j], var_q[j]))``.
    """
    inv_q = 1.0 / var_q
    quad = (
        (mu_p * mu_p) @ inv_q.T
        - 2.0 * mu_p @ (mu_q * inv_q).T
        + np.sum(mu_q * mu_q * inv_q, axis=1)[None, :]
    )
    trace = var_p @ inv_q.T
    logdet = np.sum(np.log(var_q), axis=1)[None, :] - np.sum(np.log(var_p), axis=1)[:, None]
    return 0.5 * (logdet - mu_p.shape[1] + trace + np.maximum(quad, 0.0))


def kl_variational(a: GmmModel, b: GmmModel) -> float:
    """Variational approximation of ``KL(a || b)`` between two mixtures.

    For every component ``i`` of ``a`` it compares the soft-min of component
    KLs to ``a``'s own components against the soft-min to ``b``'s components.
    The result can be negative.
    """
    if a.dim != b.dim:
        raise DimMismatch(f"dimension mismatch: {a.dim} vs {b.dim}")
    live = a.weights > 0
    wa = a.weights[live]
    mu, var = a.means[live], a.variances[live]
    kaa = kl_diag_matrix(mu, var, a.means, a.variances)
    kab = kl_diag_matrix(mu, var, b.means, b.variances)
    kaa[np.arange(wa.size), np.flatnonzero(live)] = 0.0
    with np.errstate(divide="ignore"):
        la, lb = np.log(a.weights), np.log(b.weights)
    num = logsumexp(la[None, :] - kaa, axis=1)
    den = logsumexp(lb[None, :] - kab, axis=1)
    return float(wa @ (num - den))


def kl_variational_symmetric(a: GmmModel, b: GmmModel) -> DistanceValue:
    """Symmetrized variational KL, floored at zero for ranking.

    The signed average is kept in ``diagnostics["raw"]``.
    """
    raw = 0.5 * kl_variational(a, b) + 0.5 * kl_variational(b, a)
    return DistanceValue(max(raw, 0.0), MetricKind.VARIATIONAL_KL, {"raw": raw})


def wasserstein2(a: GaussianSignature, b: GaussianSignature, eps: float = 0.0) -> DistanceValue:
    """Squared 2-Wasserstein distance between two Gaussians.

    ``|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)``. No
    inverse is involved, so singular covariances are fine; eigenvalues are
    clamped at ``eps`` (zero by default) inside the square roots and the
    trace term is floored at zero.
    """
    _check_dims(a, b)
    a, b = _canonical(a, b)
    info = {}
    root_a = spd_sqrt(a.cov, eps, info)
    cross = root_a @ b.cov @ root_a
    cross = 0.5 * (cross + cross.T)
    ev = np.linalg.eigvalsh(cross)
    info["clamped"] += int(np.count_nonzero(ev < 0))
    tr_term = np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.sum(np.sqrt(np.maximum(ev, 0.0)))
    diff = a.mean - b.mean
    val = float(diff @ diff + max(tr_term, 0.0))
    return DistanceValue(val, MetricKind.WASSERSTEIN, info)


def riemannian(
    a: GaussianSignature,
    b: GaussianSignature,
    eps: Optional[float] = None,
    include_mean: bool = False,
) -> DistanceValue:
    """Affine-invariant distance ``|log(S_a^-1/2 S_b S_a^-1/2)|_F``.

    Computed from the eigenvalues of the pencil ``(S_b, S_a)`` after a
    Cholesky whitening of ``S_a``. Means are ignored unless
    ``include_mean`` adds ``|mu_a - mu_b|`` in quadrature.
    """
    _check_dims(a, b)
    a, b = _canonical(a, b)
    info = {}
    sa = spd_repair(a.cov, eps, info)
    sb = spd_repair(b.cov, eps, info)
    la = cholesky(sa)
    w = solve_triangular(la, sb, lower=True)
    w = solve_triangular(la, w.T, lower=True)
    lam = np.linalg.eigvalsh(0.5 * (w + w.T))
    if lam[0] <= 0:
        raise NotPositiveDefinite(0, "generalized eigenvalue is not positive")
    sq = float(np.sum(np.log(lam) ** 2))
    if include_mean:
        diff = a.mean - b.mean
        sq += float(diff @ diff)
    info["condition"] = _cond_from_chol(la)
    return DistanceValue(float(np.sqrt(sq)), MetricKind.RIEMANNIAN, info)


def euclidean_mean(a: GaussianSignature, b: GaussianSignature) -> DistanceValue:
    """l2 distance between the two means."""
    _check_dims(a, b)
    diff = a.mean - b.mean
    return DistanceValue(float(np.sqrt(diff @ diff)), MetricKind.EUCLIDEAN_MEAN)


def distance(kind, a, b, gmm_a: Optional[GmmModel] = None, gmm_b: Optional[GmmModel] = None, eps=None) -> DistanceValue:
    """Dispatch on ``kind`` (a :class:`MetricKind` or its CLI name)."""
    kind = MetricKind.parse(kind)
    if kind is MetricKind.VARIATIONAL_KL:
        if gmm_a is None or gmm_b is None:
            raise IncompatibleMetric("variational-kl requires gmm index entries")
        return kl_variational_symmetric(gmm_a, gmm_b)
    if kind is MetricKind.GAUSSIAN_KL:
        return kl_symmetric(a, b, eps)
    if kind is MetricKind.WASSERSTEIN:
        return wasserstein2(a, b, 0.0 if eps is None else eps)
    if kind is MetricKind.RIEMANNIAN:
        return riemannian(a, b, eps)
    return euclidean_mean(a, b)
