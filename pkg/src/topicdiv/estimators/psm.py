"""Propensity-score matching: logit scores, 1:1 caliper matching, ATT and balance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .fe import EstimationError, column_values

SEPARATION_BOUND = 50.0


class SeparationError(EstimationError):
    pass


@dataclass
class LogitFit:
    coef: np.ndarray  # intercept first, on the original covariate scale
    coef_std: np.ndarray  # slopes on standardized covariates
    se: np.ndarray
    names: list[str]
    n_iter: int
    converged: bool
    pscores: np.ndarray


@dataclass(frozen=True)
class BalanceRow:
    covariate: str
    bias_before: float
    bias_after: float
    t_after: float
    p_after: float
    undefined: bool = False


@dataclass
class MatchResult:
    """Outcome of 1:1 nearest-neighbour matching.

    ``pairs`` holds ``(treated_id, control_id, pscore_gap)`` tuples; ``att``,
    ``att_se`` and ``balance`` are filled in by :func:`psm`.
    """

    pairs: list[tuple]
    caliper: float
    support: tuple[float, float]
    off_support_count: int
    no_match_count: int
    treated_pos: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, dtype=int))
    control_pos: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, dtype=int))
    att: float = math.nan
    att_se: float = math.nan
    balance: list[BalanceRow] = field(default_factory=list)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def unmatched_count(self) -> int:
        return self.off_support_count + self.no_match_count


def _loglik(xb: np.ndarray, t: np.ndarray) -> float:
    # log L = sum t*xb - log(1 + e^xb), computed stably
    return float(np.sum(t * xb - np.logaddexp(0.0, xb)))


def fit_logit(x: np.ndarray, t, names: Sequence[str] | None = None, tol: float = 1e-8, max_iter: int = 100) -> LogitFit:
    """Logistic regression of ``t`` on ``x`` (intercept added) by damped Newton.

    Covariates are standardized internally. Iteration stops when the score's
    infinity norm drops below ``tol`` (and the Newton step is negligible) or
    after ``max_iter`` steps. A slope
    beyond ``SEPARATION_BOUND`` on the standardized scale is taken as
    perfect separation and raises :class:`SeparationError`.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    t = np.asarray(t, dtype=float)
    names = list(names) if names is not None else [f"x{j}" for j in range(x.shape[1])]
    if not np.all((t == 0) | (t == 1)):
        raise EstimationError("treatment must be binary 0/1")
    if t.min() == t.max():
        raise EstimationError("treatment has a single class; propensity scores are undefined")
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    if np.any(sd == 0):
        raise EstimationError(f"constant covariate {names[int(np.argmax(sd == 0))]!r}")
    xs = np.column_stack([np.ones(len(t)), (x - mu) / sd])

    b = np.zeros(xs.shape[1])
    ll = _loglik(xs @ b, t)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = 1.0 / (1.0 + np.exp(-(xs @ b)))
        grad = xs.T @ (t - p)
        hess = (xs * (p * (1 - p))[:, None]).T @ xs
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        # under separation the score vanishes while Newton steps stay O(1)
        if np.max(np.abs(grad)) < tol and np.max(np.abs(step)) < 1e-4:
            converged = True
            it -= 1
            break
        scale = 1.0
        while scale > 1e-10:
            cand = b + scale * step
            ll_new = _loglik(xs @ cand, t)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            scale *= 0.5
        b, ll = cand, ll_new
        if np.max(np.abs(b[1:])) > SEPARATION_BOUND:
            break
    if np.max(np.abs(b[1:]), initial=0.0) > SEPARATION_BOUND:
        worst = names[int(np.argmax(np.abs(b[1:])))]
        raise SeparationError(f"perfect separation: coefficient on {worst!r} diverges")

    p = 1.0 / (1.0 + np.exp(-(xs @ b)))
    hess = (xs * (p * (1 - p))[:, None]).T @ xs
    cov_std = np.linalg.pinv(hess)
    # back to the original scale: b_j = bs_j / sd_j, b_0 = bs_0 - sum bs_j mu_j / sd_j
    jac = np.zeros_like(cov_std)
    jac[0, 0] = 1.0
    jac[0, 1:] = -mu / sd
    jac[1:, 1:] = np.diag(1.0 / sd)
    coef = jac @ b
    cov = jac @ cov_std @ jac.T
    return LogitFit(coef, b[1:], np.sqrt(np.diag(cov)), ["const"] + names, it, converged, p)


def logit_propensity(panel: pd.DataFrame, covariates: Sequence[str], treatment: str = "loss") -> np.ndarray:
    """Propensity scores P(treatment = 1 | covariates) from a logit."""
    covariates = list(covariates)
    x = np.column_stack([column_values(panel, c) for c in covariates])
    return fit_logit(x, column_values(panel, treatment), covariates).pscores


def common_support(pscores, treated) -> tuple[float, float]:
    """Overlap ``[max(group minima), min(group maxima)]`` of the two score ranges."""
    p = np.asarray(pscores, dtype=float)
    tr = np.asarray(treated).astype(bool)
    return float(max(p[tr].min(), p[~tr].min())), float(min(p[tr].max(), p[~tr].max()))


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


def nn_match(pscores, treated, caliper: float = 0.05, ids=None) -> MatchResult:
    """1:1 nearest-neighbour matching on the propensity score, with replacement.

    Treated units outside the common support are not matched and are
    counted in ``off_support_count``. The rest are visited in descending
    score order and paired with the closest control whose gap is at most
    ``caliper``; equal gaps go to the lower-scored control, then the first
    in input order. Treated units with no control in reach are counted in
    ``no_match_count``.
    """
    if not caliper > 0:
        raise EstimationError(f"caliper must be positive, got {caliper}")
    p = np.asarray(pscores, dtype=float)
    tr = np.asarray(treated).astype(bool)
    if p.shape != tr.shape:
        raise EstimationError("pscores and treated flags differ in length")
    ids = np.arange(p.size) if ids is None else np.asarray(ids)
    if not np.any(~tr):
        raise EstimationError("no control units to match against")
    if not np.any(tr):
        raise EstimationError("no treated units to match")
    lo, hi = common_support(p, tr)

    ctrl = np.flatnonzero(~tr)
    order = np.argsort(p[ctrl], kind="stable")
    ctrl_sorted = ctrl[order]
    cp = p[ctrl_sorted]

    t_idx = np.flatnonzero(tr)
    t_idx = t_idx[np.argsort(-p[t_idx], kind="stable")]
    pairs, tpos, cpos = [], [], []
    off = nomatch = 0
    for i in t_idx:
        pi = p[i]
        if pi < lo or pi > hi:
            off += 1
            continue
        k = int(np.searchsorted(cp, pi))
        best, best_gap = -1, math.inf
        # on equal gaps the lower-scored (left) control wins
        if k < cp.size:
            best, best_gap = k, cp[k] - pi
        if k > 0:
            j = int(np.searchsorted(cp, cp[k - 1], side="left"))
            gap = pi - cp[j]
            if gap <= best_gap:
                best, best_gap = j, gap
        if best < 0 or best_gap > caliper:
            nomatch += 1
            continue
        c = ctrl_sorted[best]
        pairs.append((_plain(ids[i]), _plain(ids[c]), float(best_gap)))
        tpos.append(i)
        cpos.append(c)
    return MatchResult(
        pairs=pairs,
        caliper=float(caliper),
        support=(lo, hi),
        off_support_count=off,
        no_match_count=nomatch,
        treated_pos=np.asarray(tpos, dtype=int),
        control_pos=np.asarray(cpos, dtype=int),
    )


def att(y_treated, y_control, control_keys=None) -> tuple[float, float]:
    """Average treated-minus-control gap over matched pairs and its standard error.

    Parameters
    ----------
    y_treated, y_control : array-like
        Outcomes of each pair's treated and control member.
    control_keys : array-like, optional
        Identity of each pair's control; a control reused ``K`` times adds
        ``K(K-1)`` times its conditional variance, estimated from the spread
        of its own pair gaps around the ATT. Defaults to all-distinct.

    Returns
    -------
    (att, se)
    """
    yt = np.asarray(y_treated, dtype=float)
    yc = np.asarray(y_control, dtype=float)
    if yt.shape != yc.shape:
        raise EstimationError("treated and control outcome vectors differ in length")
    n = yt.size
    if n < 2:
        raise EstimationError(f"need at least 2 matched pairs, got {n}")
    d = yt - yc
    tau = float(d.mean())
    resid2 = (d - tau) ** 2
    var = float(resid2.sum())
    if control_keys is not None:
        codes, _ = pd.factorize(np.asarray(control_keys))
        k = np.bincount(codes).astype(float)
        sigma2 = np.bincount(codes, weights=resid2 / 2.0) / k
        var += float(np.sum(k * (k - 1) * sigma2))
    return tau, math.sqrt(var) / n


def standardized_bias(x_t, x_c, var_t: float, var_c: float) -> tuple[float, bool]:
    """100 (mean_T - mean_C) / sqrt((s_T^2 + s_C^2) / 2); flag when undefined."""
    diff = float(np.mean(x_t) - np.mean(x_c))
    pooled = math.sqrt((var_t + var_c) / 2.0)
    if pooled == 0:
        return (0.0, False) if diff == 0 else (math.nan, True)
    return 100.0 * diff / pooled, False


def balance_diagnostics(
    panel: pd.DataFrame, match: MatchResult, covariates: Sequence[str], treatment: str = "loss"
) -> list[BalanceRow]:
    """Standardized %bias before and after matching, plus post-match t-tests.

    Both columns scale by the pre-match group variances. After matching,
    each pair contributes its treated row and its (possibly reused) control.
    """
    if match.n_pairs == 0:
        raise EstimationError("matched sample is empty")
    tr = column_values(panel, treatment).astype(bool)
    rows = []
    for cov in covariates:
        x = column_values(panel, cov)
        vt, vc = float(np.var(x[tr], ddof=1)), float(np.var(x[~tr], ddof=1))
        before, und_b = standardized_bias(x[tr], x[~tr], vt, vc)
        xt, xc = x[match.treated_pos], x[match.control_pos]
        after, und_a = standardized_bias(xt, xc, vt, vc)
        if np.ptp(np.concatenate([xt, xc])) == 0:
            t_stat, p_val = 0.0, 1.0
        else:
            res = stats.ttest_ind(xt, xc)
            t_stat, p_val = float(res.statistic), float(res.pvalue)
        rows.append(BalanceRow(cov, before, after, t_stat, p_val, und_b or und_a))
    return rows


def psm(
    panel: pd.DataFrame,
    outcome: str,
    covariates: Sequence[str],
    treatment: str = "loss",
    caliper: float = 0.05,
    id_column: str | None = None,
) -> MatchResult:
    """Logit scores, caliper matching, ATT with standard error and balance table.

    Rows missing the outcome, treatment or a covariate are left out. Match
    positions in the result index rows of ``panel`` itself.
    """
    covariates = list(covariates)
    cols = [c for c in [outcome, treatment] + covariates if c in panel]
    rows = np.flatnonzero(panel[cols].notna().all(axis=1).to_numpy())
    sub = panel.iloc[rows].reset_index(drop=True)
    scores = logit_propensity(sub, covariates, treatment)
    ids = sub[id_column].to_numpy() if id_column else None
    m = nn_match(scores, column_values(sub, treatment), caliper, ids)
    y = column_values(sub, outcome)
    m.att, m.att_se = att(y[m.treated_pos], y[m.control_pos], m.control_pos)
    m.balance = balance_diagnostics(sub, m, covariates, treatment)
    m.treated_pos, m.control_pos = rows[m.treated_pos], rows[m.control_pos]
    return m


def matched_panel(panel: pd.DataFrame, match: MatchResult) -> pd.DataFrame:
    """Rows of the matched sample (treated and distinct controls), in input order."""
    keep = np.union1d(match.treated_pos, match.control_pos)
    return panel.iloc[keep].reset_index(drop=True)
