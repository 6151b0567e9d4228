"""Retrieval of feature matrices by comparing Gaussian signatures.

Items are summarized as Gaussians (moment-matched GMMs or shrunk SMT
covariance estimates) and ranked with KL divergences, the Gaussian
2-Wasserstein distance or the affine-invariant Riemannian metric.
"""

from .errors import *  # noqa: F401,F403
from .metrics import (
    DistanceValue,
    MetricKind,
    distance,
    euclidean_mean,
    kl_gaussian,
    kl_symmetric,
    kl_variational,
    kl_variational_symmetric,
    riemannian,
    wasserstein2,
)
from .retrieval import (
    BuildConfig,
    EvalReport,
    IndexEntry,
    RankingResult,
    SignatureIndex,
    build_index,
    evaluate,
    gen_synthetic,
    load_index,
    rank,
    save_index,
)
from .signature import GaussianSignature, GmmModel, fit_gmm, moment_match, sample_covariance
from .smt import select_alpha, shrink, smt_covariance, smt_fit

__version__ = "0.1.0"
