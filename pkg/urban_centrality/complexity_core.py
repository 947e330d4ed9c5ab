"""
Revealed comparative advantage and the economic/product complexity indices.

Clusters play the role of regions and product codes the role of exported
products. Two estimators are provided: the method of reflections and the
second eigenvector of the cluster-to-cluster transition matrix. Both return
raw standardized scores plus a [0, 1] min-max rescale.
"""

from collections.abc import Sequence

import numpy as np
import scipy.linalg
import structlog
from scipy import stats

from urban_centrality.errors import ComputationError, InputError
from urban_centrality.schemas.complexity import (
    ComplexityMethod,
    ComplexityScores,
    CountMatrix,
    IncidenceMatrix,
)
from urban_centrality.schemas.shops import AmenityCluster, Shop

log = structlog.get_logger(__name__)

DEFAULT_MAX_ITER = 1000
DEFAULT_TOL = 1e-6

# Eigenvalues closer than this are treated as one repeated eigenvalue.
EIGEN_GAP = 1e-10


def _prune(
    matrix: np.ndarray, rows: list, cols: list, what: str
) -> tuple[np.ndarray, list, list]:
    """Drop all-zero rows, then all-zero columns."""
    keep_rows = matrix.sum(axis=1) > 0
    keep_cols = matrix.sum(axis=0) > 0
    if not keep_rows.all() or not keep_cols.all():
        log.info(
            "pruned empty rows and columns",
            matrix=what,
            dropped_rows=[r for r, keep in zip(rows, keep_rows) if not keep],
            dropped_cols=[c for c, keep in zip(cols, keep_cols) if not keep],
        )
    matrix = matrix[np.ix_(keep_rows, keep_cols)]
    rows = [r for r, keep in zip(rows, keep_rows) if keep]
    cols = [c for c, keep in zip(cols, keep_cols) if keep]
    return matrix, rows, cols


def build_counts(shops: Sequence[Shop], clusters: Sequence[AmenityCluster]) -> CountMatrix:
    """
    Count member shops per (cluster, product). Clusters are ordered by id,
    products lexicographically. Shops outside every cluster are ignored.
    """
    product_of = {shop.id: shop.product_code for shop in shops}
    ordered = sorted(clusters, key=lambda c: c.cluster_id)
    products = sorted({product_of[m] for c in ordered for m in c.member_ids if m in product_of})
    if not products:
        raise InputError("no assigned shops")
    column = {code: j for j, code in enumerate(products)}
    counts = np.zeros((len(ordered), len(products)), dtype=np.int64)
    for i, cluster in enumerate(ordered):
        for member in cluster.member_ids:
            if member in product_of:
                counts[i, column[product_of[member]]] += 1
    counts, rows, cols = _prune(counts, [c.cluster_id for c in ordered], products, "counts")
    return CountMatrix(clusters=rows, products=cols, counts=counts)


def compute_rca(counts: CountMatrix) -> IncidenceMatrix:
    """
    Balassa index of every (cluster, product) cell and the binary
    specialization matrix M = [RCA >= 1].
    """
    x = np.asarray(counts.counts, dtype=np.float64)
    if x.size == 0 or x.sum() == 0:
        raise ComputationError("count matrix is all zeros")
    x, clusters, products = _prune(x, list(counts.clusters), list(counts.products), "counts")
    total = x.sum()
    # integer counts keep numerator and denominator exact, so the single
    # rounding in the division decides RCA >= 1 consistently
    rca = (x * total) / np.outer(x.sum(axis=1), x.sum(axis=0))
    m = (rca >= 1.0).astype(np.int64)
    return IncidenceMatrix(clusters=clusters, products=products, rca=rca, m=m)


def incidence_from_matrix(
    m: np.ndarray,
    clusters: Sequence[int] | None = None,
    products: Sequence[str] | None = None,
) -> IncidenceMatrix:
    """Wrap a ready-made binary matrix as an incidence (RCA taken equal to M)."""
    m = np.asarray(m)
    if m.ndim != 2 or not np.isin(m, (0, 1)).all():
        raise ValueError("incidence must be a 2-D matrix of zeros and ones")
    m = m.astype(np.int64)
    clusters = list(clusters) if clusters is not None else list(range(m.shape[0]))
    products = list(products) if products is not None else [f"p{j}" for j in range(m.shape[1])]
    return IncidenceMatrix(clusters=clusters, products=products, rca=m.astype(np.float64), m=m)


def prune_incidence(incidence: IncidenceMatrix) -> IncidenceMatrix:
    """Drop clusters without markets and products without markets."""
    keep_rows = incidence.m.sum(axis=1) > 0
    keep_cols = incidence.m.sum(axis=0) > 0
    if keep_rows.all() and keep_cols.all():
        return incidence
    m, clusters, products = _prune(incidence.m, incidence.clusters, incidence.products, "incidence")
    return IncidenceMatrix(
        clusters=clusters,
        products=products,
        rca=incidence.rca[np.ix_(keep_rows, keep_cols)],
        m=m,
    )


def _standardize(v: np.ndarray) -> np.ndarray:
    std = v.std()
    if not np.isfinite(std) or std <= 1e-12 * max(1.0, float(np.abs(v).max())):
        raise ComputationError("degenerate incidence: scores have zero variance")
    return (v - v.mean()) / std


def _min_max(v: np.ndarray) -> np.ndarray:
    # _standardize already guarantees max > min
    return (v - v.min()) / (v.max() - v.min())


def _orient(eci_raw: np.ndarray, diversity: np.ndarray) -> np.ndarray:
    """Flip the sign so that ECI correlates non-negatively with diversity."""
    if diversity.std() > 0:
        corr = float(np.corrcoef(eci_raw, diversity)[0, 1])
        if np.isfinite(corr) and corr != 0.0:
            return eci_raw if corr > 0 else -eci_raw
    # no usable correlation: make the entry of largest magnitude positive
    return eci_raw if eci_raw[np.argmax(np.abs(eci_raw))] >= 0 else -eci_raw


def _check_incidence(incidence: IncidenceMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    m = np.asarray(incidence.m, dtype=np.float64)
    diversity = m.sum(axis=1)
    ubiquity = m.sum(axis=0)
    if (diversity == 0).any() or (ubiquity == 0).any():
        raise ComputationError("incidence has empty rows or columns; prune it first")
    return m, diversity, ubiquity


def _tie_identical_rows(m: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Average `values` over rows of `m` that are identical, so equal rows score equally."""
    _, groups = np.unique(m, axis=0, return_inverse=True)
    groups = groups.reshape(-1)
    return (np.bincount(groups, weights=values) / np.bincount(groups))[groups]


def _scores(
    incidence: IncidenceMatrix,
    eci_raw: np.ndarray,
    method: ComplexityMethod,
    iterations: int,
) -> ComplexityScores:
    m, diversity, ubiquity = _check_incidence(incidence)
    eci_raw = _standardize(_orient(_tie_identical_rows(m, eci_raw), diversity))
    # a product is as complex as the average cluster that specializes in it
    pci_raw = _standardize(_tie_identical_rows(m.T, (m.T @ eci_raw) / ubiquity))
    return ComplexityScores(
        clusters=list(incidence.clusters),
        products=list(incidence.products),
        eci_raw=eci_raw,
        eci=_min_max(eci_raw),
        pci_raw=pci_raw,
        pci=_min_max(pci_raw),
        diversity=incidence.diversity,
        ubiquity=incidence.ubiquity,
        method=method,
        iterations=iterations,
    )


def method_of_reflections(
    incidence: IncidenceMatrix,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> ComplexityScores:
    """
    Iterate K_c <- mean of K_p over the cluster's products and
    K_p <- mean of K_c over the product's clusters, starting from diversity
    and ubiquity and standardizing both vectors after every step.

    Odd and even iterates may oscillate, so convergence compares iterate n
    with iterate n - 2: the run stops once the cluster ranking is unchanged
    and no score moved by more than `tol`, or after `max_iter` steps. The
    result is always an even iterate.
    """
    m, diversity, ubiquity = _check_incidence(incidence)
    kc, kp = diversity.copy(), ubiquity.copy()
    previous = (kc - kc.mean()) / kc.std() if kc.std() > 0 else kc - kc.mean()
    iterations = 0
    converged = False
    while iterations < max_iter:
        for _ in range(2):
            kc, kp = _standardize((m @ kp) / diversity), _standardize((m.T @ kc) / ubiquity)
            iterations += 1
        same_ranks = np.array_equal(stats.rankdata(kc), stats.rankdata(previous))
        if same_ranks and np.abs(kc - previous).max() < tol:
            converged = True
            break
        previous = kc
    log.debug("reflections finished", iterations=iterations, converged=converged)
    if not converged:
        log.warning("reflections hit max_iter before the ranking settled", max_iter=max_iter)
    return _scores(incidence, kc, ComplexityMethod.REFLECTIONS, iterations)


def eigen_complexity(incidence: IncidenceMatrix) -> ComplexityScores:
    """
    ECI from the eigenvector of the second-largest eigenvalue of
    W = D^-1 M U^-1 M^T, with D and U the diversity and ubiquity diagonals.

    W is similar to the symmetric S = D^-1/2 M U^-1 M^T D^-1/2, whose
    leading eigenvector is known in closed form (proportional to
    sqrt(diversity)). Projecting it out leaves the wanted eigenvector on
    top of the spectrum.
    """
    m, diversity, ubiquity = _check_incidence(incidence)
    if m.shape[0] < 2:
        raise ComputationError("degenerate incidence: a single cluster has no ranking")
    root_d = np.sqrt(diversity)
    a = (m / root_d[:, None]) / np.sqrt(ubiquity)[None, :]
    s = a @ a.T
    u1 = root_d / np.linalg.norm(root_d)
    projector = np.eye(len(u1)) - np.outer(u1, u1)
    eigenvalues, eigenvectors = scipy.linalg.eigh(projector @ s @ projector)
    if eigenvalues[-1] - eigenvalues[-2] <= EIGEN_GAP:
        raise ComputationError(
            f"ambiguous eigenvector: second eigenvalue {eigenvalues[-1]:.12g} is repeated"
        )
    eci_raw = eigenvectors[:, -1] / root_d
    return _scores(incidence, eci_raw, ComplexityMethod.EIGEN, 0)


def compute_complexity(
    incidence: IncidenceMatrix,
    method: ComplexityMethod = ComplexityMethod.REFLECTIONS,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> ComplexityScores:
    """Prune the incidence and run the selected estimator."""
    incidence = prune_incidence(incidence)
    match ComplexityMethod(method):
        case ComplexityMethod.REFLECTIONS:
            return method_of_reflections(incidence, max_iter=max_iter, tol=tol)
        case ComplexityMethod.EIGEN:
            return eigen_complexity(incidence)


def uniqueness(incidence: IncidenceMatrix) -> np.ndarray:
    """Inverse ubiquity per product."""
    ubiquity = incidence.ubiquity
    if (ubiquity == 0).any():
        raise ComputationError("uniqueness is undefined for products without markets")
    return 1.0 / ubiquity


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Spearman rank correlation; NaN when either input is constant."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) != len(b):
        raise ValueError("spearman needs equal-length inputs")
    if len(a) < 2 or a.std() == 0 or b.std() == 0:
        return float("nan")
    return float(stats.spearmanr(a, b).statistic)
