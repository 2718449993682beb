"""Permutation placebo: reshuffle the treatment within each year and re-estimate."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..kde import kde_curve
from .fe import EstimationError, RegressionSpec, ols_fe


@dataclass
class PlaceboDistribution:
    """Placebo coefficients and p-values, one per rep; failed reps hold NaN."""

    coefficients: np.ndarray
    p_values: np.ndarray
    baseline_coef: float
    baseline_p: float
    treatment: str
    n_failed: int
    kde_grid: np.ndarray = field(repr=False)
    kde_density: np.ndarray = field(repr=False)

    @property
    def n_reps(self) -> int:
        return int(self.coefficients.size)

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.coefficients) & np.isfinite(self.p_values)

    @property
    def kde_curve(self) -> tuple[np.ndarray, np.ndarray]:
        return self.kde_grid, self.kde_density

    def share_below(self, alpha: float = 0.10) -> float:
        """Fraction of successful reps with p-value under ``alpha``."""
        ok = self.valid
        return float(np.mean(self.p_values[ok] < alpha)) if ok.any() else math.nan


def permute_within(values: np.ndarray, groups: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Shuffle ``values`` independently inside each group; group counts are preserved."""
    out = values.copy()
    codes, _ = pd.factorize(groups, sort=True)
    order = np.argsort(codes, kind="stable")
    bounds = np.flatnonzero(np.diff(codes[order])) + 1
    for block in np.split(order, bounds):
        out[block] = values[block[rng.permutation(block.size)]]
    return out


def placebo_run(
    panel: pd.DataFrame,
    spec: RegressionSpec,
    n_reps: int,
    master_seed: int = 0,
    treatment: str = "loss",
    year_column: str = "year",
    jobs: int = 1,
    n_grid: int = 512,
) -> PlaceboDistribution:
    """Re-estimate ``spec`` ``n_reps`` times with the treatment permuted within year.

    Rep ``r`` draws its permutation from ``default_rng(master_seed ^ r)`` so the
    output does not depend on ``jobs``. Interaction terms involving the
    treatment are rebuilt from the permuted column. Reps whose estimation
    fails are stored as NaN, counted in ``n_failed`` and left out of the
    density.
    """
    if n_reps < 1:
        raise EstimationError(f"n_reps must be >= 1, got {n_reps}")
    if treatment not in panel:
        raise EstimationError(f"panel has no treatment column {treatment!r}")
    base = ols_fe(panel, spec)
    if treatment not in base.names:
        raise EstimationError(f"{treatment!r} is not an estimated coefficient (absorbed or missing)")

    values = panel[treatment].to_numpy()
    years = panel[year_column].to_numpy()

    def one(rep: int) -> tuple[float, float]:
        rng = np.random.default_rng(master_seed ^ rep)
        shuffled = panel.assign(**{treatment: permute_within(values, years, rng)})
        try:
            res = ols_fe(shuffled, spec)
            j = res.names.index(treatment)
        except (EstimationError, ValueError, np.linalg.LinAlgError):
            return math.nan, math.nan
        return float(res.coef[j]), float(res.pvalues[j])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(one, range(n_reps)))
    else:
        out = [one(r) for r in range(n_reps)]
    coefs = np.array([c for c, _ in out])
    pvals = np.array([p for _, p in out])
    ok = np.isfinite(coefs) & np.isfinite(pvals)
    if ok.sum() >= 2 and np.ptp(coefs[ok]) > 0:
        grid, dens = kde_curve(coefs[ok], n_grid)
    else:
        grid, dens = np.zeros(0), np.zeros(0)
    return PlaceboDistribution(
        coefficients=coefs,
        p_values=pvals,
        baseline_coef=base[treatment],
        baseline_p=base.pvalue(treatment),
        treatment=treatment,
        n_failed=int((~ok).sum()),
        kde_grid=grid,
        kde_density=dens,
    )
