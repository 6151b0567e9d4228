"""Probabilistic signatures of a feature matrix.

A feature matrix holds one local descriptor per row. It is summarized either
by a diagonal-covariance Gaussian mixture collapsed to a single Gaussian
(moment matching), or by its sample covariance.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateData, InsufficientData, InvalidComponentCount

__all__ = [
    "GaussianSignature",
    "GmmModel",
    "SOURCE_TAGS",
    "as_features",
    "fit_gmm",
    "em_gmm",
    "gmm_log_likelihood",
    "moment_match",
    "sample_covariance",
]

SOURCE_TAGS = ("gmm-moment", "smt", "sample")

_LOG_2PI = np.log(2.0 * np.pi)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GaussianSignature:
    """Mean vector and full covariance summarizing one item."""

    mean: np.ndarray
    cov: np.ndarray
    source: str = "sample"

    def __post_init__(self):
        mean = _frozen(self.mean).reshape(-1)
        cov = _frozen(self.cov)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean length {mean.size}")
        if self.source not in SOURCE_TAGS:
            raise ValueError(f"unknown source tag {self.source!r}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True, eq=False)
class GmmModel:
    """Gaussian mixture with diagonal component covariances.

    Attributes
    ----------
    weights : ndarray, shape (k,)
    means : ndarray, shape (k, d)
    variances : ndarray, shape (k, d)
        Diagonal of each component covariance.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights).reshape(-1)
        mu = _frozen(np.atleast_2d(self.means))
        var = _frozen(np.atleast_2d(self.variances))
        if mu.shape != var.shape or mu.shape[0] != w.size:
            raise ValueError("weights, means and variances disagree on shape")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if np.any(var <= 0):
            raise ValueError("component variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.k, size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim))
        return self.means[comp] + noise * np.sqrt(self.variances[comp])


def as_features(x, normalize_rows: bool = False) -> np.ndarray:
    """Validate a feature matrix and promote it to float64.

    Rows are local descriptors, columns are feature dimensions. With
    ``normalize_rows`` each row is scaled to unit l2 norm (zero rows are
    left alone).
    """
    x = np.array(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"feature matrix must be 2-D and non-empty, got shape {x.shape}")
    bad = np.argwhere(~np.isfinite(x))
    if bad.size:
        r, c = bad[0]
        raise ValueError(f"non-finite feature value at row {r}, column {c}")
    if normalize_rows:
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        x = x / np.where(norms > 0, norms, 1.0)
    return x


def _component_log_density(x, means, variances):
    # (n, k) matrix of log N(x_i | mu_j, diag(var_j))
    inv = 1.0 / variances
    quad = (
        (x * x) @ inv.T
        - 2.0 * x @ (means * inv).T
        + np.sum(means * means * inv, axis=1)
    )
    log_norm = -0.5 * (x.shape[1] * _LOG_2PI + np.sum(np.log(variances), axis=1))
    return log_norm - 0.5 * quad


def gmm_log_likelihood(model: GmmModel, x) -> float:
    """Total log-likelihood of the rows of ``x`` under ``model``."""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        lw = np.log(model.weights)
    return float(np.sum(logsumexp(_component_log_density(x, model.means, model.variances) + lw, axis=1)))


def _kmeans_pp(x, k, rng):
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(x.shape[0])]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(x.shape[0])
        else:
            idx = rng.choice(x.shape[0], p=d2 / total)
        centers[c] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[c]) ** 2, axis=1))
    return centers


def _assign(x, centers):
    d2 = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * x @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    return np.argmin(d2, axis=1)


def em_gmm(
    x,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-5,
    kmeans_iter: int = 5,
) -> Tuple[GmmModel, List[float]]:
    """EM for a diagonal-covariance Gaussian mixture.

    Returns the fitted model and the log-likelihood recorded before every
    M-step (plus the final value). The sequence is checked to be
    non-decreasing.
    """
    x = as_features(x)
    n, d = x.shape
    if k < 1 or k > n:
        raise InvalidComponentCount(f"need 1 <= k <= n_rows ({n}), got k={k}")
    if np.all(np.ptp(x, axis=0) == 0):
        raise DegenerateData("all feature rows are identical")

    gvar = x.var(axis=0)
    floor = 1e-4 * gvar
    floor = np.where(floor > 0, floor, 1e-4 * gvar[gvar > 0].mean())

    rng = np.random.default_rng(seed)
    m = min(n, 10 * k)
    sub = x[rng.choice(n, size=m, replace=False)] if m < n else x
    centers = _kmeans_pp(sub, k, rng)
    for _ in range(kmeans_iter):
        labels = _assign(x, centers)
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = x[members].mean(axis=0)
    labels = _assign(x, centers)
    resp = np.zeros((n, k))
    resp[np.arange(n), labels] = 1.0

    weights = means = variances = None
    history: List[float] = []
    for it in range(max_iter + 1):
        # M-step
        nk = resp.sum(axis=0)
        alive = nk > 1e-10 * n
        new_means = np.where(alive[:, None], resp.T @ x / np.where(alive, nk, 1.0)[:, None], 0.0)
        sq = resp.T @ (x * x) / np.where(alive, nk, 1.0)[:, None]
        new_vars = np.maximum(sq - new_means ** 2, floor)
        if means is not None:
            new_means[~alive] = means[~alive]
            new_vars[~alive] = variances[~alive]
        else:
            new_means[~alive] = centers[~alive]
            new_vars[~alive] = gvar + floor
        weights, means, variances = nk / n, new_means, new_vars

        # E-step
        with np.errstate(divide="ignore"):
            logp = _component_log_density(x, means, variances) + np.log(weights)
        norm = logsumexp(logp, axis=1)
        ll = float(norm.sum())
        if history and ll < history[-1] - 1e-9 * max(1.0, abs(history[-1])):
            raise ArithmeticError(f"EM log-likelihood decreased at iteration {it}: {history[-1]} -> {ll}")
        history.append(ll)
        resp = np.exp(logp - norm[:, None])
        if len(history) > 1 and abs(history[-1] - history[-2]) <= tol * abs(history[-1]):
            break

    weights = weights / weights.sum()
    return GmmModel(weights, means, variances), history


def fit_gmm(x, k: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-5) -> GmmModel:
    """Fit a ``k``-component diagonal GMM to the rows of ``x``.

    k-means++ seeding on a subsample of ``min(n, 10k)`` rows, five Lloyd
    iterations, then EM until the relative log-likelihood change drops
    below ``tol`` or ``max_iter`` is reached. Variances are floored at
    ``1e-4`` times the global per-dimension variance.
    """
    model, _ = em_gmm(x, k, seed=seed, max_iter=max_iter, tol=tol)
    return model


def moment_match(g: GmmModel) -> GaussianSignature:
    """Collapse a mixture into the Gaussian with the same mean and covariance."""
    w = g.weights
    mean = w @ g.means
    diff = g.means - mean
    cov = (diff * w[:, None]).T @ diff
    cov[np.diag_indices_from(cov)] += w @ g.variances
    return GaussianSignature(mean, 0.5 * (cov + cov.T), "gmm-moment")


def sample_covariance(x, center: bool = True, source: str = "sample") -> GaussianSignature:
    """Column means and the ``1/n`` sample covariance of ``x``.

    With ``center=False`` the second moment ``X^T X / n`` is used instead,
    i.e. the rows are treated as zero-mean draws.
    """
    x = as_features(x)
    n = x.shape[0]
    if n < 2:
        raise InsufficientData(f"sample covariance needs at least 2 rows, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean if center else x
    cov = xc.T @ xc / n
    return GaussianSignature(mean, 0.5 * (cov + cov.T), source)
