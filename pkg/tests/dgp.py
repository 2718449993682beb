"""Seeded data-generating processes shared by unit and acceptance tests."""

from __future__ import annotations

import numpy as np
import pandas as pd

PSM_COVARIATES = ["x1", "x2", "x3"]
PSM_COEF = np.array([-0.8, 0.6, -0.4, 0.3])  # intercept, x1, x2, x3


def psm_panel(seed: int, n: int = 20000, tau: float = 0.3) -> pd.DataFrame:
    """Well-specified logit assignment on three covariates; constant effect ``tau``."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    p = 1.0 / (1.0 + np.exp(-(PSM_COEF[0] + x @ PSM_COEF[1:])))
    t = (rng.random(n) < p).astype(int)
    y = tau * t + x @ [1.0, 0.5, -0.5] + rng.normal(size=n)
    df = pd.DataFrame(x, columns=PSM_COVARIATES)
    df["loss"] = t
    df["y"] = y
    df["unit"] = [f"u{i}" for i in range(n)]
    return df


def null_panel(seed: int, n_firms: int = 100, n_years: int = 10) -> pd.DataFrame:
    """Firm/year effects and a control, with a treatment that has no effect on y."""
    rng = np.random.default_rng(seed)
    fid = np.repeat(np.arange(n_firms), n_years)
    yr = np.tile(np.arange(n_years), n_firms)
    size = rng.normal(size=n_firms * n_years)
    loss = (rng.random(fid.size) < 0.3).astype(int)
    y = 0.5 * size + rng.normal(size=n_firms)[fid] + rng.normal(size=n_years)[yr] + rng.normal(size=fid.size)
    return pd.DataFrame({"firm_id": [f"f{i}" for i in fid], "year": 2000 + yr, "y": y, "loss": loss, "size": size})
