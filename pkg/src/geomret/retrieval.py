"""Signature indices, ranking and precision/MAP evaluation."""

import time
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DimMismatch, DuplicateItem, GeomRetError, IncompatibleMetric, UnknownCategory
from .formats import MODE_CODES, load_index, save_index
from .metrics import MetricKind, distance
from .signature import GaussianSignature, GmmModel, as_features, fit_gmm, moment_match, sample_covariance
from .smt import default_order, smt_estimate

__all__ = [
    "BuildConfig",
    "IndexEntry",
    "SignatureIndex",
    "RankingResult",
    "EvalReport",
    "make_entry",
    "build_index",
    "applicable_metrics",
    "rank",
    "evaluate",
    "gen_synthetic",
    "save_index",
    "load_index",
]

MODES = tuple(MODE_CODES)


@dataclass
class BuildConfig:
    """Parameters used to turn feature matrices into signatures.

    ``smt_order=None`` means ``round(2 D log2 D)``; ``alpha="cv"`` selects the
    shrinkage weight per item by cross-validation; ``eps=None`` uses the
    relative eigenvalue floor of :func:`~geomret.symlinalg.default_eps`.
    """

    components: int = 64
    smt_order: Optional[int] = None
    alpha: Union[float, str] = "cv"
    eps: Optional[float] = None
    seed: int = 0
    center: bool = True
    normalize_rows: bool = False
    max_iter: int = 100
    tol: float = 1e-5
    folds: int = 3

    @classmethod
    def from_dict(cls, d) -> "BuildConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in (d or {}).items() if k in known})


@dataclass(frozen=True, eq=False)
class IndexEntry:
    item_id: str
    category: str
    signature: GaussianSignature
    gmm: Optional[GmmModel] = None


@dataclass(frozen=True, eq=False)
class SignatureIndex:
    entries: Tuple[IndexEntry, ...]
    dim: int
    mode: str
    build_config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    @property
    def ids(self) -> List[str]:
        return [e.item_id for e in self.entries]

    @property
    def categories(self) -> set:
        return {e.category for e in self.entries}

    def save(self, path):
        save_index(self, path)


@dataclass(frozen=True)
class RankingResult:
    query_id: str
    metric: MetricKind
    ranked: List[Tuple[str, float]]
    pair_seconds: float = 0.0


@dataclass
class EvalReport:
    """Precision at each cutoff per query, AP at the largest cutoff, and means.

    ``mean_precision[c]`` is the mean P@c over queries (the Top-c columns of
    a retrieval table); ``map`` is the mean of the per-query AP@max(cutoffs)
    and ``map_at[c]`` the mean AP@c. ``interpolated_map`` uses the
    interpolated precision (best precision at any deeper rank within the
    cutoff) in place of the raw one.
    """

    metric: MetricKind
    cutoffs: Tuple[int, ...]
    precision: Dict[str, Dict[int, float]]
    average_precision: Dict[str, float]
    mean_precision: Dict[int, float]
    map: float
    pair_seconds: float
    map_at: Dict[int, float] = field(default_factory=dict)
    interpolated_map: float = 0.0


def make_entry(item_id: str, category: str, features, mode: str, config: BuildConfig) -> Tuple[IndexEntry, dict]:
    """Build one index entry. Returns the entry and per-item build notes."""
    x = as_features(features, normalize_rows=config.normalize_rows)
    notes = {}
    gmm = None
    if mode == "sample":
        sig = sample_covariance(x, center=config.center)
    elif mode == "gmm":
        gmm = fit_gmm(x, config.components, seed=config.seed, max_iter=config.max_iter, tol=config.tol)
        sig = moment_match(gmm)
    elif mode == "smt":
        mean, shrunk = smt_estimate(
            x, config.smt_order, alpha=config.alpha, folds=config.folds, seed=config.seed, center=config.center
        )
        sig = GaussianSignature(mean, shrunk.sigma, "smt")
        notes["alpha"] = shrunk.alpha
    else:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return IndexEntry(item_id, category, sig, gmm), notes


def build_index(features: Iterable, mode: str = "gmm", config: Optional[BuildConfig] = None, progress=None) -> SignatureIndex:
    """Summarize every ``(item_id, category, feature_matrix)`` into an index.

    ``progress``, if given, is called as ``progress(position, entry, notes)``
    after each item.
    """
    config = config or BuildConfig()
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    entries, seen, alphas = [], set(), {}
    dim = None
    for pos, (item_id, category, feats) in enumerate(features):
        if item_id in seen:
            raise DuplicateItem(item_id)
        seen.add(item_id)
        feats = np.asarray(feats)
        if dim is None:
            dim = feats.shape[1] if feats.ndim == 2 else None
        elif feats.ndim != 2 or feats.shape[1] != dim:
            raise DimMismatch(f"item {item_id!r} has {feats.shape[-1]} columns, expected {dim}")
        entry, notes = make_entry(item_id, category, feats, mode, config)
        if "alpha" in notes:
            alphas[item_id] = notes["alpha"]
        entries.append(entry)
        if progress is not None:
            progress(pos, entry, notes)
    if not entries:
        raise ValueError("no items to index")
    cfg = asdict(config)
    if mode == "smt":
        cfg["smt_order_used"] = default_order(dim) if config.smt_order is None else config.smt_order
        cfg["alphas"] = alphas
    return SignatureIndex(tuple(entries), dim, mode, cfg)


def applicable_metrics(mode: str) -> List[MetricKind]:
    return [m for m in MetricKind if mode == "gmm" or not m.needs_gmm]


def rank(index: SignatureIndex, query: IndexEntry, metric, eps: Optional[float] = None) -> RankingResult:
    """Rank every index entry by distance to ``query`` (ascending).

    An entry with the query's own id is skipped. Ties are broken by id.
    Metric errors are re-raised with ``item_id`` set to the offending entry.
    """
    metric = MetricKind.parse(metric)
    if metric.needs_gmm and (index.mode != "gmm" or query.gmm is None):
        raise IncompatibleMetric(
            f"{metric.value} requires gmm index (index mode is {index.mode}); "
            f"valid metrics for {index.mode}: {', '.join(m.value for m in applicable_metrics(index.mode))}"
        )
    if query.signature.dim != index.dim:
        raise DimMismatch(f"query dimension {query.signature.dim} != index dimension {index.dim}")
    if eps is None:
        eps = index.build_config.get("eps")
    scored = []
    start = time.perf_counter()
    for e in index.entries:
        if e.item_id == query.item_id:
            continue
        try:
            d = distance(metric, query.signature, e.signature, query.gmm, e.gmm, eps=eps)
        except GeomRetError as exc:
            exc.item_id = e.item_id
            exc.args = (f"{exc} [item {e.item_id}]",) + exc.args[1:]
            raise
        scored.append((e.item_id, d.value))
    elapsed = time.perf_counter() - start
    scored.sort(key=lambda t: (t[1], t[0]))
    return RankingResult(query.item_id, metric, scored, elapsed / max(len(scored), 1))


def _precision_at(rel: np.ndarray, c: int) -> float:
    top = rel[:c]
    return float(top.mean()) if top.size else 0.0


def _average_precision(rel: np.ndarray, c: int, interpolated: bool = False) -> float:
    # AP@c normalized by min(c, number of relevant items in the whole ranking)
    top = rel[:c]
    hits = np.flatnonzero(top)
    n_rel = min(c, int(rel.sum()))
    if hits.size == 0 or n_rel == 0:
        return 0.0
    prec = np.cumsum(top) / np.arange(1, top.size + 1)
    if interpolated:
        prec = np.maximum.accumulate(prec[::-1])[::-1]
    return float(np.sum(prec[hits]) / n_rel)


def evaluate(
    index: SignatureIndex,
    queries: Sequence[IndexEntry],
    metric,
    cutoffs: Sequence[int] = (1, 5, 10),
    eps: Optional[float] = None,
) -> EvalReport:
    """Precision@c for every query and cutoff, plus AP and MAP.

    Precision@c divides by ``min(c, ranked length)``. AP@C sums precision at
    each relevant rank within the top C and divides by
    ``min(C, total relevant)``; ``map`` uses the largest cutoff. Relevance is an exact category
    match.
    """
    metric = MetricKind.parse(metric)
    cutoffs = tuple(sorted(set(int(c) for c in cutoffs)))
    if not cutoffs or cutoffs[0] < 1:
        raise ValueError("cutoffs must be positive integers")
    if not queries:
        raise ValueError("no queries given")
    cats = {e.item_id: e.category for e in index.entries}
    known = set(cats.values())
    precision, ap, ap_at, iap = {}, {}, {}, {}
    total_time, total_pairs = 0.0, 0
    for q in queries:
        if q.category not in known:
            raise UnknownCategory(f"query {q.item_id!r} has category {q.category!r} absent from the index")
        res = rank(index, q, metric, eps=eps)
        rel = np.array([cats[i] == q.category for i, _ in res.ranked], dtype=float)
        precision[q.item_id] = {c: _precision_at(rel, c) for c in cutoffs}
        ap_at[q.item_id] = {c: _average_precision(rel, c) for c in cutoffs}
        ap[q.item_id] = ap_at[q.item_id][cutoffs[-1]]
        iap[q.item_id] = _average_precision(rel, cutoffs[-1], interpolated=True)
        total_time += res.pair_seconds * len(res.ranked)
        total_pairs += len(res.ranked)
    mean_p = {c: float(np.mean([p[c] for p in precision.values()])) for c in cutoffs}
    return EvalReport(
        metric=metric,
        cutoffs=cutoffs,
        precision=precision,
        average_precision=ap,
        mean_precision=mean_p,
        map=float(np.mean(list(ap.values()))),
        pair_seconds=total_time / max(total_pairs, 1),
        map_at={c: float(np.mean([a[c] for a in ap_at.values()])) for c in cutoffs},
        interpolated_map=float(np.mean(list(iap.values()))),
    )


def _random_rotation(rng, dim):
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def gen_synthetic(
    categories: int = 5,
    items_per_cat: int = 10,
    rows: int = 500,
    dim: int = 16,
    separation: float = 8.0,
    anisotropy: float = 4.0,
    seed: int = 0,
) -> List[Tuple[str, str, np.ndarray]]:
    """Synthetic items drawn from one Gaussian per category.

    Category ``c`` has mean ``separation * u_c`` for a random unit vector
    ``u_c`` and covariance eigenvalues geometrically spaced in
    ``[1, anisotropy]`` under a random orientation. Each item is ``rows``
    draws from its category's Gaussian.
    """
    if min(categories, items_per_cat, rows, dim) < 1:
        raise ValueError("counts must be >= 1")
    if separation < 0 or anisotropy < 1:
        raise ValueError("need separation >= 0 and anisotropy >= 1")
    rng = np.random.default_rng(seed)
    spectrum = np.geomspace(1.0, anisotropy, dim)
    out = []
    for c in range(categories):
        u = rng.standard_normal(dim)
        u /= np.linalg.norm(u)
        mean = separation * u
        basis = _random_rotation(rng, dim) * np.sqrt(spectrum)
        for i in range(items_per_cat):
            x = mean + rng.standard_normal((rows, dim)) @ basis.T
            out.append((f"c{c:02d}_i{i:03d}", f"cat{c:02d}", x))
    return out
