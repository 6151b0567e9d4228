"""Sparse Matrix Transform (SMT) covariance estimation.

The eigenvector matrix of a sample covariance ``S`` is approximated by a
product of ``K`` Givens rotations ``E = E_1 E_2 ... E_K``. Each rotation is
picked greedily: at step ``k`` the pair ``(i, j)`` with the largest
normalized correlation ``s_ij^2 / (s_ii s_jj)`` of the working matrix is
rotated so that ``s_ij`` vanishes, which multiplies the product of diagonal
entries by ``1 - s_ij^2 / (s_ii s_jj)``. The SMT estimate
``E diag(E^T S E) E^T`` is then shrunk towards ``S``.

A rotation on ``(i, j)`` with angle ``theta`` is the identity except for::

    E[i, i] = cos(theta)    E[i, j] = sin(theta)
    E[j, i] = -sin(theta)   E[j, j] = cos(theta)

and the working matrix evolves as ``S_{k+1} = E_k^T S_k E_k``.
"""

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import DegenerateDiagonal, InsufficientData, InvalidShrinkage, NotPositiveDefinite
from .signature import as_features, sample_covariance
from .symlinalg import as_sym, cholesky

__all__ = [
    "GivensRotation",
    "SmtFactorization",
    "ShrunkCovariance",
    "default_order",
    "smt_fit",
    "smt_covariance",
    "shrink",
    "select_alpha",
    "smt_estimate",
    "DEFAULT_ALPHA_GRID",
]

DEFAULT_ALPHA_GRID = tuple(np.round(np.linspace(0.0, 1.0, 11), 10))


class GivensRotation(NamedTuple):
    i: int
    j: int
    theta: float

    def matrix(self, dim: int) -> np.ndarray:
        e = np.eye(dim)
        c, s = np.cos(self.theta), np.sin(self.theta)
        e[self.i, self.i] = e[self.j, self.j] = c
        e[self.i, self.j] = s
        e[self.j, self.i] = -s
        return e


@dataclass(frozen=True, eq=False)
class SmtFactorization:
    """Result of :func:`smt_fit`.

    ``pairs`` and ``angles`` list the rotations in application order,
    ``lam`` is the diagonal of the final working matrix. ``log_objective``
    holds ``sum(log(diag(S_k)))`` for ``k = 0..order``.
    """

    pairs: np.ndarray
    angles: np.ndarray
    lam: np.ndarray
    log_objective: np.ndarray = field(repr=False)

    @property
    def order(self) -> int:
        return len(self.angles)

    @property
    def dim(self) -> int:
        return self.lam.size

    @property
    def rotations(self):
        return [GivensRotation(int(i), int(j), float(t)) for (i, j), t in zip(self.pairs, self.angles)]

    def eigenvectors(self) -> np.ndarray:
        """The orthonormal product ``E_1 E_2 ... E_K``."""
        e = np.eye(self.dim)
        for (i, j), t in zip(self.pairs, self.angles):
            c, s = np.cos(t), np.sin(t)
            ci, cj = e[:, i].copy(), e[:, j].copy()
            e[:, i] = c * ci - s * cj
            e[:, j] = s * ci + c * cj
        return e

    def covariance(self) -> np.ndarray:
        e = self.eigenvectors()
        out = (e * self.lam) @ e.T
        return 0.5 * (out + out.T)


@dataclass(frozen=True, eq=False)
class ShrunkCovariance:
    """``sigma = alpha * smt + (1 - alpha) * sample``."""

    sigma: np.ndarray
    alpha: float
    sample: np.ndarray
    smt: np.ndarray
    factorization: Optional[SmtFactorization] = None


def default_order(dim: int) -> int:
    """``round(2 D log2 D)`` rotations."""
    if dim < 2:
        return 0
    return int(round(2 * dim * np.log2(dim)))


def _criterion_row(s, diag, r):
    den = diag[r] * diag
    with np.errstate(divide="ignore", invalid="ignore"):
        row = np.where(den > 0, s[r] ** 2 / den, 0.0)
    row[r] = -np.inf
    return row


def smt_fit(s, k_order: Optional[int] = None, tol: float = 1e-24, lazy: bool = True) -> SmtFactorization:
    """Greedy SMT factorization of a symmetric PSD matrix.

    Parameters
    ----------
    s : array_like, shape (d, d)
        Sample covariance (symmetric PSD).
    k_order : int, optional
        Number of rotations. Defaults to :func:`default_order`.
    tol : float
        Fitting stops early once the best normalized squared correlation is
        at or below ``tol``; further rotations would be numerical no-ops.
    lazy : bool
        Track per-row maxima of the selection criterion and rescan only
        rows whose maximum was invalidated. ``False`` rescans the whole
        matrix every step; both select identical pairs.

    Raises
    ------
    DegenerateDiagonal
        The input has a non-positive diagonal entry. Run
        :func:`~geomret.symlinalg.spd_repair` first.
    """
    work = as_sym(s).copy()
    d = work.shape[0]
    if k_order is None:
        k_order = default_order(d)
    if k_order < 0:
        raise ValueError("k_order must be non-negative")
    diag = np.diag(work).copy()
    if np.any(diag <= 0):
        bad = int(np.flatnonzero(diag <= 0)[0])
        raise DegenerateDiagonal(f"diagonal entry {bad} is {diag[bad]!r}; repair the matrix first")

    crit = np.empty((d, d))
    for r in range(d):
        crit[r] = _criterion_row(work, diag, r)
    row_arg = np.argmax(crit, axis=1) if d > 1 else np.zeros(d, dtype=int)
    row_max = crit[np.arange(d), row_arg]

    pairs, angles = [], []
    with np.errstate(divide="ignore"):
        log_obj = [float(np.sum(np.log(diag)))]
    for _ in range(k_order if d > 1 else 0):
        if lazy:
            r = int(np.argmax(row_max))
            c = int(row_arg[r])
            best = row_max[r]
        else:
            flat = int(np.argmax(crit))
            r, c = divmod(flat, d)
            best = crit[r, c]
        if not best > tol:
            break
        i, j = (r, c) if r < c else (c, r)
        sii, sjj, sij = work[i, i], work[j, j], work[i, j]
        theta = 0.5 * np.arctan2(-2.0 * sij, sii - sjj)
        cs, sn = np.cos(theta), np.sin(theta)

        wi, wj = work[:, i].copy(), work[:, j].copy()
        work[:, i] = cs * wi - sn * wj
        work[:, j] = sn * wi + cs * wj
        wi, wj = work[i, :].copy(), work[j, :].copy()
        work[i, :] = cs * wi - sn * wj
        work[j, :] = sn * wi + cs * wj
        work[i, j] = work[j, i] = 0.0
        diag[i], diag[j] = work[i, i], work[j, j]

        pairs.append((i, j))
        angles.append(theta)
        with np.errstate(divide="ignore"):
            log_obj.append(float(np.sum(np.log(np.maximum(diag, 0.0)))))

        # only criterion entries in rows/columns i and j change
        ri = _criterion_row(work, diag, i)
        rj = _criterion_row(work, diag, j)
        crit[i], crit[j] = ri, rj
        crit[:, i], crit[:, j] = ri, rj
        crit[i, i] = crit[j, j] = -np.inf
        if lazy:
            stale = (row_arg == i) | (row_arg == j)
            stale[[i, j]] = True
            cand = np.maximum(ri, rj)
            grow = ~stale & (cand > row_max)
            row_arg[grow] = np.where(ri[grow] >= rj[grow], i, j)
            row_max[grow] = cand[grow]
            for r in np.flatnonzero(stale):
                a = int(np.argmax(crit[r]))
                row_arg[r], row_max[r] = a, crit[r, a]

    return SmtFactorization(
        pairs=np.array(pairs, dtype=np.int64).reshape(-1, 2),
        angles=np.array(angles, dtype=np.float64),
        # round-off can push a PSD diagonal a hair below zero
        lam=np.maximum(np.diag(work), 0.0),
        log_objective=np.array(log_obj),
    )


def smt_covariance(x, k_order: Optional[int] = None, center: bool = True) -> np.ndarray:
    """SMT reconstruction ``E diag(lam) E^T`` of the sample covariance of ``x``."""
    s = sample_covariance(x, center=center).cov
    return smt_fit(s, k_order).covariance()


def shrink(s_sample, s_smt, alpha: float, factorization: Optional[SmtFactorization] = None) -> ShrunkCovariance:
    """Convex combination ``alpha * s_smt + (1 - alpha) * s_sample``."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidShrinkage(f"alpha must lie in [0, 1], got {alpha}")
    a, b = as_sym(s_sample), as_sym(s_smt)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    sigma = alpha * b + (1.0 - alpha) * a
    return ShrunkCovariance(sigma, float(alpha), a, b, factorization)


def _gaussian_loglik(x, mean, cov):
    try:
        chol = cholesky(cov)
    except NotPositiveDefinite:
        return -np.inf
    z = np.linalg.solve(chol, (x - mean).T)
    ld = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(np.mean(-0.5 * (np.sum(z * z, axis=0) + ld + x.shape[1] * np.log(2 * np.pi))))


def select_alpha(
    x,
    k_order: Optional[int] = None,
    grid: Iterable[float] = DEFAULT_ALPHA_GRID,
    folds: int = 3,
    seed: int = 0,
    center: bool = True,
    return_scores: bool = False,
):
    """Pick the shrinkage weight by k-fold cross-validated log-likelihood.

    Rows are shuffled with ``seed`` and split into contiguous folds. For every
    fold, ``S`` and the SMT estimate are computed on the training rows and the
    held-out rows are scored under ``N(train_mean, shrink(alpha))``. The
    ``alpha`` with the highest mean score wins; ties go to the larger value.
    Singular candidates score ``-inf``.
    """
    x = as_features(x)
    grid = np.asarray(sorted(float(a) for a in grid))
    if grid.size == 0:
        raise ValueError("empty alpha grid")
    if np.any((grid < 0) | (grid > 1)):
        raise InvalidShrinkage("alpha grid values must lie in [0, 1]")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    n = x.shape[0]
    if n < folds or n - int(np.ceil(n / folds)) < 2:
        raise InsufficientData(f"{n} rows cannot be split into {folds} folds")
    if grid.size == 1:
        return (float(grid[0]), np.zeros(1)) if return_scores else float(grid[0])

    order = np.random.default_rng(seed).permutation(n)
    blocks = np.array_split(order, folds)
    scores = np.zeros((folds, grid.size))
    for f, held in enumerate(blocks):
        train = np.concatenate([b for g, b in enumerate(blocks) if g != f])
        sig = sample_covariance(x[train], center=center)
        s_smt = smt_fit(_repair_diag(sig.cov), k_order).covariance()
        mean = sig.mean if center else np.zeros(x.shape[1])
        for a, alpha in enumerate(grid):
            scores[f, a] = _gaussian_loglik(x[held], mean, shrink(sig.cov, s_smt, alpha).sigma)
    with np.errstate(invalid="ignore"):
        avg = scores.mean(axis=0)
    avg = np.where(np.isnan(avg), -np.inf, avg)
    best = int(np.flatnonzero(avg == avg.max())[-1])
    alpha = float(grid[best])
    return (alpha, avg) if return_scores else alpha


def _repair_diag(s):
    # constant columns give zero variance; lift them to a tiny positive value
    d = np.diag(s)
    if np.all(d > 0):
        return s
    floor = 1e-8 * (d[d > 0].mean() if np.any(d > 0) else 1.0)
    out = np.array(s, dtype=np.float64)
    out[np.diag_indices_from(out)] = np.maximum(d, floor)
    return out


def smt_estimate(
    x,
    k_order: Optional[int] = None,
    alpha: Union[float, str] = "cv",
    grid: Sequence[float] = DEFAULT_ALPHA_GRID,
    folds: int = 3,
    seed: int = 0,
    center: bool = True,
):
    """Full pipeline: sample covariance, SMT fit, shrinkage.

    ``alpha="cv"`` selects the weight with :func:`select_alpha`. Returns
    ``(mean, ShrunkCovariance)``.
    """
    sig = sample_covariance(x, center=center)
    fact = smt_fit(_repair_diag(sig.cov), k_order)
    if isinstance(alpha, str):
        if alpha != "cv":
            raise InvalidShrinkage(f"alpha must be a number or 'cv', got {alpha!r}")
        alpha = select_alpha(x, k_order, grid=grid, folds=folds, seed=seed, center=center)
    return sig.mean, shrink(sig.cov, fact.covariance(), float(alpha), fact)
