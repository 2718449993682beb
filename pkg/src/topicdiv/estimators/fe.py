"""Two-way fixed-effects OLS with firm-clustered standard errors."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .. import kernels

INTERACTION = "×"
CONSTANT = "Constant"


class EstimationError(ValueError):
    pass


class ConvergenceError(EstimationError):
    pass


@dataclass(frozen=True)
class RegressionSpec:
    outcome: str
    regressors: tuple[str, ...]
    absorb: tuple[str, ...] = ("firm_id", "year")
    cluster: str = "firm_id"
    sample: str = "baseline"

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        object.__setattr__(self, "absorb", tuple(self.absorb))
        if self.outcome in self.regressors:
            raise EstimationError(f"outcome {self.outcome!r} also listed as a regressor")


@dataclass
class RegressionResult:
    names: list[str]
    coef: np.ndarray
    vcov: np.ndarray
    n_obs: int
    n_clusters: int
    r2: float
    adjusted_r2: float
    residuals: np.ndarray
    sample_index: np.ndarray
    absorbed: dict
    dropped_collinear: list[str] = field(default_factory=list)
    outcome: str = ""
    df_absorbed: int = 0

    @property
    def coefficients(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.coef)))

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    @property
    def cluster_se(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.se)))

    @property
    def tstat(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coef / self.se

    @property
    def pvalues(self) -> np.ndarray:
        # t reference with G - 1 degrees of freedom
        return 2.0 * stats.t.sf(np.abs(self.tstat), max(self.n_clusters - 1, 1))

    def pvalue(self, name: str) -> float:
        return float(self.pvalues[self.names.index(name)])

    def __getitem__(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])


# --------------------------------------------------------------------------
# spec helpers


def with_interaction(spec: RegressionSpec, a: str, b: str) -> RegressionSpec:
    """Add the product column ``a×b``; main effects are kept (added if absent)."""
    name = f"{a}{INTERACTION}{b}"
    if name in spec.regressors or name == spec.outcome:
        raise EstimationError(f"interaction {name!r} already in the specification")
    regs = list(spec.regressors)
    for main in (a, b):
        if main not in regs:
            regs.append(main)
    regs.append(name)
    return replace(spec, regressors=tuple(regs))


def column_values(panel: pd.DataFrame, selector: str) -> np.ndarray:
    """Column by name; ``a×b`` selectors are computed as elementwise products."""
    if selector in panel:
        return panel[selector].to_numpy(dtype=float)
    if INTERACTION in selector:
        out = np.ones(len(panel))
        for part in selector.split(INTERACTION):
            out = out * column_values(panel, part)
        return out
    raise EstimationError(f"panel has no column {selector!r}")


def group_codes(panel: pd.DataFrame, dims: Sequence[str]) -> np.ndarray:
    """Integer codes 0..L-1 per absorbed dimension, shape (n, len(dims))."""
    if not dims:
        return np.zeros((len(panel), 0), dtype=np.int64)
    return np.column_stack([pd.factorize(panel[d], sort=True)[0] for d in dims]).astype(np.int64)


# --------------------------------------------------------------------------
# within transformation


def within_demean(
    x: np.ndarray, codes: np.ndarray, tol: float = 1e-10, max_iter: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Sweep out group means for every absorbed dimension by alternating projections.

    Parameters
    ----------
    x : ndarray, shape (n, p)
    codes : ndarray of int, shape (n, D)
        Level codes per dimension, each in ``0..L_d-1``.
    tol : float
        Stop once the largest cell change in a full sweep falls below
        ``tol * max(1, max|column|)``.
    max_iter : int
        Sweep cap; hitting it raises :class:`ConvergenceError`.

    Returns
    -------
    demeaned : ndarray, shape (n, p)
    collinear : ndarray of bool, shape (p,)
        Columns that vanish after demeaning (absorbed by the fixed effects).
    """
    x = np.array(x, dtype=np.float64, order="C", copy=True)
    if x.ndim == 1:
        x = x[:, None]
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    if codes.ndim == 1:
        codes = codes[:, None]
    norms = np.linalg.norm(x, axis=0)
    if codes.shape[1] == 0:
        return x, norms == 0
    n_levels = (codes.max(axis=0) + 1).astype(np.int64)
    if np.any(n_levels < 1):
        raise EstimationError("every absorbed dimension needs at least one level")
    scale = np.maximum(1.0, np.abs(x).max(axis=0)) if x.size else np.ones(x.shape[1])
    if codes.shape[1] == 1:
        kernels.demean_pass(x, codes, n_levels)
    else:
        for it in range(max_iter):
            prev = x.copy()
            kernels.demean_pass(x, codes, n_levels)
            change = (np.abs(x - prev).max(axis=0) / scale).max() if x.size else 0.0
            if change < tol:
                break
        else:
            raise ConvergenceError(
                f"alternating projections did not converge in {max_iter} sweeps (last relative change {change:.3e})"
            )
    collinear = np.linalg.norm(x, axis=0) <= 1e-9 * np.maximum(norms, 1e-300)
    return x, collinear


def absorbed_dof(codes: np.ndarray) -> int:
    """Parameters used by the fixed effects, constant included.

    Exact for one or two dimensions (two-way uses the connected components of
    the level graph); additional dimensions count ``L - 1`` each.
    """
    if codes.shape[1] == 0:
        return 1
    levels = [int(c.max()) + 1 for c in codes.T]
    if len(levels) == 1:
        return levels[0]
    a, b = codes[:, 0], codes[:, 1] + levels[0]
    n_nodes = levels[0] + levels[1]
    graph = coo_matrix((np.ones(len(a)), (a, b)), shape=(n_nodes, n_nodes))
    n_comp, _ = connected_components(graph, directed=False)
    return levels[0] + levels[1] - n_comp + sum(l - 1 for l in levels[2:])


def independent_columns(x: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Greedy left-to-right selection of linearly independent columns."""
    keep: list[int] = []
    q = np.zeros((x.shape[0], 0))
    for j in range(x.shape[1]):
        col = x[:, j]
        norm = np.linalg.norm(col)
        if norm == 0:
            continue
        resid = col - q @ (q.T @ col)
        resid = resid - q @ (q.T @ resid)
        rn = np.linalg.norm(resid)
        if rn > rtol * norm:
            keep.append(j)
            q = np.column_stack([q, resid / rn])
    return np.array(keep, dtype=int)


# --------------------------------------------------------------------------
# variance


def cluster_vcov(x: np.ndarray, resid: np.ndarray, clusters, nk_correction: bool = False) -> np.ndarray:
    """Cluster-robust sandwich ``(X'X)^-1 (sum_g X_g'u_g u_g'X_g) (X'X)^-1``.

    Scaled by ``G/(G-1)``; ``nk_correction`` adds the ``(N-1)/(N-k)`` factor.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    resid = np.asarray(resid, dtype=float)
    codes, uniq = pd.factorize(np.asarray(clusters), sort=True)
    G = len(uniq)
    if G < 2:
        raise EstimationError("clustered variance needs at least 2 clusters")
    n, k = x.shape
    scores = np.zeros((G, k))
    np.add.at(scores, codes, x * resid[:, None])
    bread = np.linalg.inv(x.T @ x)
    v = bread @ (scores.T @ scores) @ bread
    scale = G / (G - 1)
    if nk_correction:
        scale *= (n - 1) / (n - k)
    v = scale * v
    return 0.5 * (v + v.T)


# --------------------------------------------------------------------------
# estimation


@dataclass
class _Design:
    """Estimation sample with outcome and regressors already demeaned."""

    index: np.ndarray
    y: np.ndarray
    x: np.ndarray
    y_mean: float
    x_mean: np.ndarray
    names: list[str]
    clusters: np.ndarray
    codes: np.ndarray
    collinear: np.ndarray
    y_raw: np.ndarray
    x_raw: np.ndarray


def _prepare(panel: pd.DataFrame, spec: RegressionSpec, extra: Sequence[str] = ()) -> tuple[_Design, np.ndarray]:
    cols = [spec.outcome, *spec.regressors, *extra]
    data = np.column_stack([column_values(panel, c) for c in cols]) if cols else np.empty((len(panel), 0))
    ok = np.isfinite(data).all(axis=1)
    for d in (*spec.absorb, spec.cluster):
        ok &= panel[d].notna().to_numpy()
    index = np.flatnonzero(ok)
    if index.size == 0:
        raise EstimationError("estimation sample is empty")
    sub = panel.iloc[index]
    data = data[index]
    codes = group_codes(sub, spec.absorb)
    if codes.shape[1]:
        demeaned, collinear = within_demean(data, codes)
    else:
        # no fixed effects: the intercept alone is swept out
        demeaned, collinear = within_demean(data, np.zeros((len(sub), 1), dtype=np.int64))
    design = _Design(
        index=index,
        y=demeaned[:, 0],
        x=demeaned[:, 1 : 1 + len(spec.regressors)],
        y_mean=float(data[:, 0].mean()),
        x_mean=data[:, 1 : 1 + len(spec.regressors)].mean(axis=0),
        names=list(spec.regressors),
        clusters=sub[spec.cluster].to_numpy(),
        codes=codes,
        collinear=collinear[1 : 1 + len(spec.regressors)],
        y_raw=data[:, 0],
        x_raw=data[:, 1 : 1 + len(spec.regressors)],
    )
    return design, demeaned[:, 1 + len(spec.regressors) :]


def _fit(d: _Design, spec_absorb: Sequence[str], outcome: str, nk_correction: bool) -> RegressionResult:
    n = d.y.shape[0]
    dropped = [nm for nm, c in zip(d.names, d.collinear) if c]
    live = np.flatnonzero(~d.collinear)
    keep = live[independent_columns(d.x[:, live])] if live.size else live
    dropped += [d.names[j] for j in live if j not in set(keep.tolist())]
    names = [d.names[j] for j in keep] + [CONSTANT]
    xa = np.column_stack([d.x[:, keep] + d.x_mean[keep], np.ones(n)])
    ya = d.y + d.y_mean
    df_abs = absorbed_dof(d.codes)
    k_slopes = keep.size
    if n <= k_slopes + df_abs:
        raise EstimationError(f"{n} observations cannot identify {k_slopes} slopes plus {df_abs} absorbed parameters")
    coef, *_ = np.linalg.lstsq(xa, ya, rcond=None)
    resid = ya - xa @ coef
    vcov = cluster_vcov(xa, resid, d.clusters, nk_correction)
    rss = float(resid @ resid)
    tss = float(np.sum((d.y_raw - d.y_raw.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else float("nan")
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k_slopes - df_abs)
    absorbed = {dim: int(d.codes[:, j].max()) + 1 for j, dim in enumerate(spec_absorb)}
    return RegressionResult(
        names=names,
        coef=coef,
        vcov=vcov,
        n_obs=n,
        n_clusters=len(np.unique(d.clusters)),
        r2=r2,
        adjusted_r2=adj,
        residuals=resid,
        sample_index=d.index,
        absorbed=absorbed,
        dropped_collinear=dropped,
        outcome=outcome,
        df_absorbed=df_abs,
    )


def ols_fe(panel: pd.DataFrame, spec: RegressionSpec, nk_correction: bool = False) -> RegressionResult:
    """OLS of ``spec.outcome`` on ``spec.regressors`` absorbing ``spec.absorb``.

    Slopes come from the within-transformed data. The reported constant is
    the grand-mean intercept ``mean(y) - mean(X) b``. Adjusted R-squared uses
    the raw outcome and counts absorbed levels as parameters. Rows with any
    missing value in the used columns are dropped.
    """
    design, _ = _prepare(panel, spec)
    return _fit(design, spec.absorb, spec.outcome, nk_correction)


def lsdv(panel: pd.DataFrame, spec: RegressionSpec) -> dict[str, float]:
    """Explicit dummy-variable regression; slow, meant for cross-checks."""
    cols = [spec.outcome, *spec.regressors]
    data = np.column_stack([column_values(panel, c) for c in cols])
    ok = np.isfinite(data).all(axis=1)
    sub = panel.loc[ok]
    data = data[ok]
    parts = [data[:, 1:], np.ones((len(sub), 1))]
    for dim in spec.absorb:
        dummies = pd.get_dummies(sub[dim].astype(str), drop_first=True, dtype=float).to_numpy()
        parts.append(dummies)
    design = np.column_stack(parts)
    coef, *_ = np.linalg.lstsq(design, data[:, 0], rcond=None)
    return dict(zip(spec.regressors, coef[: len(spec.regressors)]))
