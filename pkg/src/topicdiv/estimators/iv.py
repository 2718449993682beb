"""Two-stage least squares on within-transformed data with KP diagnostics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .fe import (
    CONSTANT,
    EstimationError,
    RegressionResult,
    RegressionSpec,
    _prepare,
    absorbed_dof,
    cluster_vcov,
    column_values,
    independent_columns,
)

STOCK_YOGO_10PCT = 16.38


class WeakInstrumentWarning(UserWarning):
    pass


@dataclass
class KPStats:
    lm: float
    lm_p: float
    wald_f: float
    n_instruments: int

    @property
    def strength(self) -> str:
        return "strong" if self.wald_f > STOCK_YOGO_10PCT else "weak"


@dataclass
class TslsResult:
    first_stage: RegressionResult
    second_stage: RegressionResult
    kp: KPStats
    endogenous: str
    instruments: list[str]
    weak_instrument: bool = False
    stock_yogo_10pct: float = STOCK_YOGO_10PCT

    @property
    def kp_lm(self) -> float:
        return self.kp.lm

    @property
    def kp_lm_p(self) -> float:
        return self.kp.lm_p

    @property
    def kp_wald_f(self) -> float:
        return self.kp.wald_f


def _partial_out(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    if w.shape[1] == 0:
        return a
    coef, *_ = np.linalg.lstsq(w, a, rcond=None)
    return a - w @ coef


def kp_tests(z: np.ndarray, x: np.ndarray, clusters, w: np.ndarray | None = None) -> KPStats:
    """Kleibergen-Paap rk statistics for a single endogenous regressor.

    Parameters
    ----------
    z : ndarray, shape (n, L)
        Excluded instruments.
    x : ndarray, shape (n,) or (n, 1)
        The endogenous regressor. More than one column is rejected.
    clusters : array-like
        Cluster ids.
    w : ndarray, optional
        Included exogenous regressors (constant, controls), partialled out
        of both ``z`` and ``x`` first.

    Returns
    -------
    KPStats
        ``wald_f`` is the cluster-robust Wald statistic for all instrument
        coefficients being zero divided by L. ``lm`` is the matching score
        statistic evaluated at the null, referred to chi-squared(L).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise EstimationError("KP statistics are implemented for one endogenous regressor only")
        x = x[:, 0]
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if w is None:
        w = np.zeros((z.shape[0], 0))
    zt = _partial_out(z, w)
    xt = _partial_out(x[:, None], w)[:, 0]
    n_inst = z.shape[1]

    pi, *_ = np.linalg.lstsq(zt, xt, rcond=None)
    e = xt - zt @ pi
    v = cluster_vcov(zt, e, clusters)
    wald = float(pi @ np.linalg.solve(v, pi))

    codes, uniq = pd.factorize(np.asarray(clusters), sort=True)
    scores = np.zeros((len(uniq), n_inst))
    np.add.at(scores, codes, zt * xt[:, None])
    s = scores.sum(axis=0)
    lm = float(s @ np.linalg.solve(scores.T @ scores, s))
    return KPStats(lm, float(stats.chi2.sf(lm, n_inst)), wald / n_inst, n_inst)


def _result(names, coef, vcov, resid, y_raw, d, absorb, outcome, dropped) -> RegressionResult:
    n = resid.shape[0]
    rss = float(resid @ resid)
    tss = float(np.sum((y_raw - y_raw.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else float("nan")
    df_abs = absorbed_dof(d.codes)
    k = len(names) - 1
    return RegressionResult(
        names=names,
        coef=coef,
        vcov=vcov,
        n_obs=n,
        n_clusters=len(np.unique(d.clusters)),
        r2=r2,
        adjusted_r2=1.0 - (1.0 - r2) * (n - 1) / (n - k - df_abs),
        residuals=resid,
        sample_index=d.index,
        absorbed={dim: int(d.codes[:, j].max()) + 1 for j, dim in enumerate(absorb)},
        dropped_collinear=dropped,
        outcome=outcome,
        df_absorbed=df_abs,
    )


def tsls(
    panel: pd.DataFrame,
    spec: RegressionSpec,
    endogenous: str,
    instruments: Sequence[str],
) -> TslsResult:
    """2SLS with ``endogenous`` (one of ``spec.regressors``) instrumented.

    Both stages run on within-transformed data. Second-stage standard errors
    use residuals built from the observed endogenous column, not its fitted
    values, with the same clustering as :func:`ols_fe`.
    """
    instruments = list(instruments)
    if not instruments:
        raise EstimationError("need at least one instrument")
    if endogenous not in spec.regressors:
        raise EstimationError(f"endogenous regressor {endogenous!r} not in the specification")
    d, zd = _prepare(panel, spec, extra=instruments)
    n = d.y.shape[0]
    j_endog = d.names.index(endogenous)
    exog_idx = [j for j in range(len(d.names)) if j != j_endog]
    exog_live = [j for j in exog_idx if not d.collinear[j]]
    dropped = [d.names[j] for j in exog_idx if d.collinear[j]]
    if d.collinear[j_endog]:
        raise EstimationError(f"endogenous regressor {endogenous!r} is absorbed by the fixed effects")
    keep = independent_columns(d.x[:, exog_live]) if exog_live else np.array([], dtype=int)
    dropped += [d.names[j] for i, j in enumerate(exog_live) if i not in set(keep.tolist())]
    exog_live = [exog_live[i] for i in keep]

    sub = panel.iloc[d.index]
    z_mean = np.column_stack([column_values(sub, c) for c in instruments]).mean(axis=0)
    zfull_dm = np.column_stack([zd, d.x[:, exog_live]])
    if independent_columns(zfull_dm).size < zfull_dm.shape[1]:
        raise EstimationError("instrument matrix is rank deficient after absorbing fixed effects")

    ones = np.ones((n, 1))
    w = np.column_stack([d.x[:, exog_live] + d.x_mean[exog_live], ones])
    zfull = np.column_stack([zd + z_mean, w])
    x_endog = d.x[:, j_endog] + d.x_mean[j_endog]
    y = d.y + d.y_mean

    pi, *_ = np.linalg.lstsq(zfull, x_endog, rcond=None)
    fs_resid = x_endog - zfull @ pi
    fs_names = instruments + [d.names[j] for j in exog_live] + [CONSTANT]
    first = _result(
        fs_names, pi, cluster_vcov(zfull, fs_resid, d.clusters), fs_resid,
        d.x_raw[:, j_endog], d, spec.absorb, endogenous, dropped,
    )

    x_hat = zfull @ pi
    xh = np.column_stack([x_hat, w])
    xo = np.column_stack([x_endog, w])
    beta, *_ = np.linalg.lstsq(xh, y, rcond=None)
    resid = y - xo @ beta
    ss_names = [endogenous] + [d.names[j] for j in exog_live] + [CONSTANT]
    second = _result(ss_names, beta, cluster_vcov(xh, resid, d.clusters), resid, d.y_raw, d, spec.absorb, spec.outcome, dropped)

    kp = kp_tests(zd, d.x[:, j_endog], d.clusters, np.column_stack([d.x[:, exog_live], ones]))
    weak = kp.wald_f < 1.0
    if weak:
        warnings.warn(
            f"weak instruments: KP Wald F = {kp.wald_f:.3f} for {instruments}", WeakInstrumentWarning, stacklevel=2
        )
    return TslsResult(first, second, kp, endogenous, instruments, weak)
