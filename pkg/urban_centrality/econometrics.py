"""
Regressions, correlations and rank contingency matrices.

OLS uses explicit dummy columns for fixed effects and classical standard
errors. Column names of the regression tables built by `ingest` are fixed
here so that model designs and tables agree.
"""

from collections.abc import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
import statsmodels.api as sm
import structlog
from scipy import stats

from urban_centrality.errors import CollinearityError, ComputationError, InputError
from urban_centrality.schemas.complexity import IncidenceMatrix
from urban_centrality.schemas.econometrics import ContingencyMatrix, DesignSpec, RegressionResult

log = structlog.get_logger(__name__)

# market-boundary table
DIST = "dist_km"
PCI = "pci"
D_ECI = "d_eci"
D_DIVERSITY = "d_diversity"
MARKET_CONTROLS = ["d_labor", "d_floating", "d_residential", "d_land_price"]
WARD = "ward"
INDUSTRY = "industry"

# consumer table
COUNT = "count"
FEMALE = "female"
AGE_GROUP = "age_group"

CONSTANT = "const"
T_DIST_MAX_OBS = 200
TIER_LABELS = ("High", "Intermediate", "Low")


def _require_columns(table: pd.DataFrame | None, columns: Iterable[str]) -> None:
    if table is None:
        return
    missing = [c for c in columns if c not in table.columns]
    if missing:
        raise InputError(f"missing columns: {', '.join(missing)}")


def spec_market_boundary(table: pd.DataFrame | None = None, include_complexity: bool = True) -> DesignSpec:
    """
    Market boundary model: nearest same-product market distance on PCI,
    population and land-price differences, with ward and industry effects.
    `include_complexity` adds the ECI and diversity differences.
    """
    numeric = [PCI, *([D_ECI, D_DIVERSITY] if include_complexity else []), *MARKET_CONTROLS]
    spec = DesignSpec(
        response=DIST,
        numeric_terms=numeric,
        fe_terms=[WARD, INDUSTRY],
        label="market" + ("+complexity" if include_complexity else ""),
    )
    _require_columns(table, spec.columns)
    return spec


def spec_consumer(table: pd.DataFrame | None = None, include_count: bool = True) -> DesignSpec:
    """Consumer travel model: travel distance on PCI, purchase count and a female indicator."""
    numeric = [PCI, *([COUNT] if include_count else []), FEMALE]
    spec = DesignSpec(
        response=DIST,
        numeric_terms=numeric,
        fe_terms=[AGE_GROUP, WARD, INDUSTRY],
        label="consumer" + ("+count" if include_count else ""),
    )
    _require_columns(table, spec.columns)
    return spec


def design_matrix(
    table: pd.DataFrame,
    spec: DesignSpec,
    base_levels: Mapping[str, str] | None = None,
) -> tuple[pd.Series, pd.DataFrame, list[str]]:
    """
    Response, regressor frame and the fixed effects dropped for having a
    single level. Dummy columns are named `term[level]`; the base level is
    the first in sorted order unless `base_levels` names another.
    """
    _require_columns(table, spec.columns)
    base_levels = base_levels or {}
    data = table[spec.columns]
    n_missing = int(data.isna().any(axis=1).sum())
    if n_missing:
        log.warning("dropping rows with missing values", n_rows=n_missing, spec=spec.label)
        data = data.dropna()

    parts = []
    if spec.intercept:
        parts.append(pd.Series(1.0, index=data.index, name=CONSTANT))
    parts.extend(data[term].astype(np.float64) for term in spec.numeric_terms)

    dropped = []
    for term in spec.fe_terms:
        values = data[term].astype(str)
        levels = sorted(values.unique())
        if len(levels) < 2:
            log.warning("dropping fixed effect with a single level", term=term, level=levels[:1])
            dropped.append(term)
            continue
        base = base_levels.get(term, levels[0])
        if base not in levels:
            raise InputError(f"base level {base!r} does not occur in {term}")
        for level in levels:
            if level != base:
                parts.append((values == level).astype(np.float64).rename(f"{term}[{level}]"))

    x = pd.concat(parts, axis=1) if parts else pd.DataFrame(index=data.index)
    return data[spec.response].astype(np.float64), x, dropped


def _collinear_columns(x: pd.DataFrame) -> list[str]:
    """Columns that add no rank to the columns before them."""
    values = x.to_numpy()
    collinear = []
    kept: list[int] = []
    for j, name in enumerate(x.columns):
        if np.linalg.matrix_rank(values[:, kept + [j]]) == len(kept) + 1:
            kept.append(j)
        else:
            collinear.append(name)
    return collinear


def ols_fit(
    table: pd.DataFrame,
    spec: DesignSpec,
    base_levels: Mapping[str, str] | None = None,
) -> RegressionResult:
    """
    Least squares via QR with classical standard errors. Coefficient
    p-values use the t distribution up to 200 observations and the normal
    approximation above.
    """
    y, x, dropped = design_matrix(table, spec, base_levels)
    n_obs, n_params = x.shape
    if n_params == 0:
        raise ComputationError("design has no regressors")
    if n_obs <= n_params:
        raise ComputationError(f"{n_obs} observations for {n_params} parameters")
    if np.linalg.matrix_rank(x.to_numpy()) < n_params:
        raise CollinearityError(_collinear_columns(x))

    fit = sm.OLS(y, x).fit(method="qr", use_t=n_obs <= T_DIST_MAX_OBS)
    log.debug("ols fitted", spec=spec.label, n_obs=n_obs, n_params=n_params, r2=float(fit.rsquared))
    return RegressionResult(
        coefficients=fit.params,
        std_errors=fit.bse,
        t_stats=fit.tvalues,
        p_values=fit.pvalues,
        r2=float(fit.rsquared),
        adj_r2=float(fit.rsquared_adj),
        residual_std_error=float(np.sqrt(fit.mse_resid)),
        f_stat=float(fit.fvalue),
        f_p_value=float(fit.f_pvalue),
        n_obs=int(fit.nobs),
        df_resid=int(round(fit.df_resid)),
        fitted=np.asarray(fit.fittedvalues),
        response=spec.response,
        label=spec.label,
        fe_terms=[t for t in spec.fe_terms if t not in dropped],
        dropped_fe=dropped,
    )


def _as_vectors(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("correlation needs two 1-D vectors of equal length")
    return x, y


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation."""
    x, y = _as_vectors(x, y)
    if len(x) < 3:
        raise ComputationError(f"pearson needs at least 3 observations, got {len(x)}")
    if x.std() == 0 or y.std() == 0:
        raise ComputationError("pearson is undefined for a zero-variance input")
    return float(stats.pearsonr(x, y).statistic)


def point_biserial(binary: Sequence[int], y: Sequence[float]) -> float:
    """
    Correlation between a 0/1 class indicator and a continuous variable:
    (mean_1 - mean_0) / s_n * sqrt(n_1 * n_0 / n^2), with s_n the
    population standard deviation of `y`.
    """
    b, y = _as_vectors(binary, y)
    if not np.isin(b, (0.0, 1.0)).all():
        raise ValueError("point_biserial needs a 0/1 indicator")
    ones = b == 1.0
    n1, n = int(ones.sum()), len(b)
    n0 = n - n1
    if n1 == 0 or n0 == 0:
        raise ComputationError("point_biserial needs both classes present")
    s_n = y.std()
    if s_n == 0:
        raise ComputationError("point_biserial is undefined for a zero-variance response")
    return float((y[ones].mean() - y[~ones].mean()) / s_n * np.sqrt(n1 * n0 / n**2))


def value_tiers(
    values: Sequence[float],
    ids: Sequence[int],
    n_tiers: int = 3,
    labels: Sequence[str] | None = None,
) -> pd.Series:
    """
    Split ids into `n_tiers` balanced tiers by descending value, ties by
    ascending id. Tier sizes differ by at most one, larger tiers first.
    """
    values = np.asarray(values, dtype=np.float64)
    ids = np.asarray(ids)
    if len(values) != len(ids):
        raise ValueError("values and ids differ in length")
    if len(values) < n_tiers:
        raise InputError(f"{len(values)} values cannot fill {n_tiers} tiers")
    if labels is None:
        labels = TIER_LABELS if n_tiers == 3 else [f"tier_{k + 1}" for k in range(n_tiers)]
    if len(labels) != n_tiers:
        raise ValueError("one label per tier required")
    order = np.lexsort((ids, -values))
    tier = np.empty(len(values), dtype=object)
    for label, members in zip(labels, np.array_split(order, n_tiers)):
        tier[members] = label
    return pd.Series(tier, index=pd.Index(ids, name="cluster_id"), name="tier")


def eci_tiers(eci: Sequence[float], cluster_ids: Sequence[int], n_tiers: int = 3) -> pd.Series:
    """High/Intermediate/Low ECI tiers of clusters."""
    return value_tiers(eci, cluster_ids, n_tiers)


def _rank_bins(scores: np.ndarray, keys: np.ndarray, n_bins: int) -> list[np.ndarray]:
    # ascending score, bin 0 holds the lowest scores
    return np.array_split(np.lexsort((keys, scores)), n_bins)


def rank_contingency(
    x_scores: Sequence[float],
    y_scores: Sequence[float],
    incidence: IncidenceMatrix,
    n_bins: int = 10,
    row_label: str = "eci",
    col_label: str = "pci",
) -> ContingencyMatrix:
    """
    Mean of M over blocks of clusters binned by `x_scores` rank and products
    binned by `y_scores` rank.
    """
    m = np.asarray(incidence.m, dtype=np.float64)
    x_scores = np.asarray(x_scores, dtype=np.float64)
    y_scores = np.asarray(y_scores, dtype=np.float64)
    if x_scores.shape != (m.shape[0],) or y_scores.shape != (m.shape[1],):
        raise ValueError("scores must align with the incidence rows and columns")
    if n_bins < 2:
        raise InputError("rank contingency needs at least 2 bins")
    if n_bins > min(m.shape):
        raise InputError(f"{n_bins} bins exceed the {m.shape[0]} clusters x {m.shape[1]} products")

    row_bins = _rank_bins(x_scores, np.asarray(incidence.clusters), n_bins)
    col_bins = _rank_bins(y_scores, np.arange(m.shape[1]), n_bins)
    density = np.array([[m[np.ix_(rows, cols)].mean() for cols in col_bins] for rows in row_bins])
    return ContingencyMatrix(
        n_bins=n_bins,
        density=density,
        row_label=row_label,
        col_label=col_label,
        row_bin_sizes=[len(b) for b in row_bins],
        col_bin_sizes=[len(b) for b in col_bins],
    )


def monotonicity_score(contingency: ContingencyMatrix) -> float:
    """
    Fraction of horizontally adjacent cells whose density does not increase
    from the lower to the higher column bin. A nested incidence scores 1.0.
    """
    density = contingency.density
    steps = density[:, 1:] <= density[:, :-1]
    return float(steps.mean())


def correlation_matrix(table: pd.DataFrame, columns: Sequence[str]) -> pd.DataFrame:
    """Lower-triangular Pearson matrix; the upper triangle is left empty."""
    _require_columns(table, columns)
    data = table[list(columns)].dropna()
    out = pd.DataFrame(np.nan, index=list(columns), columns=list(columns))
    for i, a in enumerate(columns):
        for b in columns[: i + 1]:
            if a == b:
                out.loc[a, b] = 1.0
                continue
            try:
                out.loc[a, b] = pearson(data[a], data[b])
            except ComputationError:
                log.warning("correlation undefined", x=a, y=b)
    return out


def tier_point_biserial(shares: pd.DataFrame, tiers: pd.Series) -> pd.DataFrame:
    """
    Sector by tier point-biserial correlations between a sector's labor
    share and membership in the tier. `shares` is indexed by cluster id with
    one column per sector; `tiers` maps cluster id to tier label.
    """
    common = shares.index.intersection(tiers.index)
    shares = shares.loc[common]
    tiers = tiers.loc[common]
    present = set(tiers)
    labels = [l for l in TIER_LABELS if l in present] + sorted(present - set(TIER_LABELS))
    out = pd.DataFrame(np.nan, index=pd.Index(shares.columns, name="sector"), columns=labels)
    for sector in shares.columns:
        for label in labels:
            try:
                out.loc[sector, label] = point_biserial((tiers == label).astype(int), shares[sector])
            except ComputationError:
                log.warning("point-biserial undefined", sector=sector, tier=label)
    return out


def _stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def format_regression_report(
    results: Sequence[RegressionResult],
    shown_terms: Sequence[str] | None = None,
    title: str = "",
    first_column: int = 1,
) -> str:
    """
    Side-by-side table of several fits: coefficients with significance
    stars, standard errors in parentheses, a Controls row for numeric terms
    not in `shown_terms`, one row per fixed effect and the fit statistics.
    """
    numeric = []
    for result in results:
        for term in result.coefficients.index:
            if term != CONSTANT and "[" not in term and term not in numeric:
                numeric.append(term)
    shown = [t for t in numeric if shown_terms is None or t in shown_terms]
    has_controls = shown_terms is not None and len(shown) < len(numeric)
    fe_names = list(dict.fromkeys(t for r in results for t in [*r.fe_terms, *r.dropped_fe]))

    header = [""] + [f"({first_column + k})" for k in range(len(results))]
    rows: list[list[str]] = []
    for term in [*shown, CONSTANT]:
        coef_row, se_row = [term if term != CONSTANT else "Constant"], [""]
        for r in results:
            if term in r.coefficients.index:
                coef_row.append(f"{r.coefficients[term]:.3f}{_stars(r.p_values[term])}")
                se_row.append(f"({r.std_errors[term]:.3f})")
            else:
                coef_row.append("")
                se_row.append("")
        rows += [coef_row, se_row]
    if has_controls:
        hidden = [t for t in numeric if t not in shown]
        rows.append(["Controls"] + ["Yes" if any(t in r.coefficients.index for t in hidden) else "No" for r in results])
    for fe in fe_names:
        rows.append([f"{fe} FE"] + ["Yes" if fe in r.fe_terms else "No" for r in results])
    rows += [
        ["Observations"] + [f"{r.n_obs:,}" for r in results],
        ["R2"] + [f"{r.r2:.3f}" for r in results],
        ["Adjusted R2"] + [f"{r.adj_r2:.3f}" for r in results],
        ["Residual Std. Error"] + [f"{r.residual_std_error:.3f} (df={r.df_resid})" for r in results],
        ["F Statistic"] + [f"{r.f_stat:.3f}{_stars(r.f_p_value)}" for r in results],
    ]

    widths = [max(len(row[i]) for row in [header, *rows]) for i in range(len(header))]
    rule = "=" * (sum(widths) + 2 * (len(widths) - 1))

    def render(row: list[str]) -> str:
        cells = [row[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        return "  ".join(cells).rstrip()

    responses = sorted({r.response for r in results if r.response})
    lines = [title] if title else []
    lines += [rule, f"Dependent variable: {', '.join(responses)}", render(header), "-" * len(rule)]
    lines += [render(row) for row in rows]
    lines += [rule, "Note: * p<0.1; ** p<0.05; *** p<0.01", ""]
    return "\n".join(lines)
