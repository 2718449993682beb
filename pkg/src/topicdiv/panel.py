"""Firm-year panel assembly: derived variables, lead outcomes, filters, instruments."""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .diversity import DiversityRecord

KEY = ["firm_id", "year"]

FINANCIAL_COLUMNS = [
    "firm_id", "year", "net_profit", "total_assets", "total_liabilities", "op_cashflow",
    "fixed_assets_net", "top1_share", "board_count", "market_value_equity", "book_debt", "roa",
    "mt_positive", "mt_neutral", "mt_negative", "salary_top3_raw", "salary_sum_raw", "sshrrat",
    "gri", "certification", "worksafety", "st_flag", "financial_industry", "high_competition",
]
FLAG_COLUMNS = ["gri", "certification", "worksafety", "st_flag", "financial_industry", "high_competition"]

CONTROLS = ["size", "lev", "cashflow", "fixed", "top1", "board", "tobinq"]
CONTINUOUS = CONTROLS + ["roa", "mt_positive", "mt_neutral", "mt_negative", "salarytop3", "salarysum", "sshrrat"]
OUTCOMES = ["y_gini", "y_ent"]


class PanelError(ValueError):
    pass


def _ln0(x: float) -> float:
    # ln(0) := 0 so that zero-pay rows survive as 0 rather than -inf
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return math.nan
    return math.log(x) if x > 0 else 0.0


def derive_variables(row: Mapping) -> dict:
    """Regression variables for one firm-year from its raw financial fields."""
    assets = float(row["total_assets"])
    if not assets > 0:
        raise PanelError(f"non-positive total assets {assets} for {row.get('firm_id')}/{row.get('year')}")
    out = {
        "loss": 1 if float(row["net_profit"]) < 0 else 0,
        "size": math.log(assets),
        "lev": float(row["total_liabilities"]) / assets,
        "cashflow": float(row["op_cashflow"]) / assets,
        "fixed": float(row["fixed_assets_net"]) / assets,
        "top1": float(row["top1_share"]),
        "board": math.log(float(row["board_count"])),
        "tobinq": (float(row["market_value_equity"]) + float(row["book_debt"])) / assets,
        "roa": float(row["roa"]),
        "salarytop3": _ln0(float(row["salary_top3_raw"])),
        "salarysum": _ln0(float(row["salary_sum_raw"])),
    }
    for col in ("mt_positive", "mt_neutral", "mt_negative", "sshrrat"):
        out[col] = float(row[col])
    for col in FLAG_COLUMNS:
        if col in row:
            out[col] = row[col]
    return out


def derive_frame(fin: pd.DataFrame) -> pd.DataFrame:
    """Vectorized :func:`derive_variables` over a financial table.

    Keeps ``firm_id``, ``year``, ``total_assets`` and the boolean flags.
    """
    assets = fin["total_assets"].astype(float)
    bad = ~(assets > 0)
    if bad.any():
        first = fin.loc[bad].iloc[0]
        raise PanelError(f"non-positive total assets for {first['firm_id']}/{first['year']}")

    def ln0(col):
        v = fin[col].astype(float)
        return np.where(v > 0, np.log(v.where(v > 0, 1.0)), np.where(v == 0, 0.0, np.nan))

    out = pd.DataFrame(
        {
            "firm_id": fin["firm_id"].astype(str),
            "year": fin["year"].astype(int),
            "total_assets": assets,
            "loss": (fin["net_profit"].astype(float) < 0).astype(int),
            "size": np.log(assets),
            "lev": fin["total_liabilities"] / assets,
            "cashflow": fin["op_cashflow"] / assets,
            "fixed": fin["fixed_assets_net"] / assets,
            "top1": fin["top1_share"].astype(float),
            "board": np.log(fin["board_count"].astype(float)),
            "tobinq": (fin["market_value_equity"] + fin["book_debt"]) / assets,
            "roa": fin["roa"].astype(float),
            "mt_positive": fin["mt_positive"].astype(float),
            "mt_neutral": fin["mt_neutral"].astype(float),
            "mt_negative": fin["mt_negative"].astype(float),
            "salarytop3": ln0("salary_top3_raw"),
            "salarysum": ln0("salary_sum_raw"),
            "sshrrat": fin["sshrrat"].astype(float),
        }
    )
    for col in FLAG_COLUMNS:
        if col in fin:
            out[col] = fin[col].astype(float)
    return out.reset_index(drop=True)


def read_financials(path, competition_path=None) -> pd.DataFrame:
    """Financial panel CSV; ``high_competition`` may come from a separate file."""
    fin = pd.read_csv(path, dtype={"firm_id": str})
    if competition_path is not None:
        comp = read_competition(competition_path)
        fin = fin.drop(columns=["high_competition"], errors="ignore").merge(comp, on="firm_id", how="left")
    missing = [c for c in FINANCIAL_COLUMNS if c not in fin.columns]
    if missing:
        raise PanelError(f"{path}: missing columns {missing}")
    if fin.duplicated(KEY).any():
        dup = fin.loc[fin.duplicated(KEY, keep=False), KEY].iloc[0].tolist()
        raise PanelError(f"{path}: duplicate (firm_id, year) {dup}")
    return fin


def read_competition(path) -> pd.DataFrame:
    comp = pd.read_csv(path, dtype={"firm_id": str})
    if list(comp.columns) != ["firm_id", "high_competition"]:
        raise PanelError(f"{path}: header must be firm_id,high_competition")
    return comp


def diversity_frame(records: Iterable[DiversityRecord] | pd.DataFrame) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        df = records.copy()
    else:
        df = pd.DataFrame([(r.firm_id, r.year, r.gini, r.entropy) for r in records],
                          columns=["firm_id", "year", "gini", "entropy"])
    df["firm_id"] = df["firm_id"].astype(str)
    df["year"] = df["year"].astype(int)
    return df


def _shifted(div: pd.DataFrame, lead: int, names: Sequence[str]) -> pd.DataFrame:
    out = div[["firm_id", "year", "gini", "entropy"]].copy()
    out["year"] = out["year"] - lead
    return out.rename(columns={"gini": names[0], "entropy": names[1]})


def join_lead_outcome(financials: pd.DataFrame, diversity) -> tuple[pd.DataFrame, dict]:
    """Pair covariates at year t with diversity at t+1.

    ``financials`` is the output of :func:`derive_frame`. Rows without a t+1
    diversity record are dropped; their count is returned.
    """
    div = diversity_frame(diversity)
    lead = _shifted(div, 1, OUTCOMES)
    merged = financials.merge(lead, on=KEY, how="left", validate="one_to_one")
    keep = merged["y_gini"].notna() & merged["y_ent"].notna()
    panel = merged.loc[keep].sort_values(KEY).reset_index(drop=True)
    return panel, {"no_lead_outcome": int((~keep).sum())}


def winsorize(column, tail: float = 0.01) -> np.ndarray:
    """Clamp both tails at the ``tail`` and ``1 - tail`` interpolated quantiles.

    Missing values pass through untouched and are ignored for the quantiles.
    """
    x = np.asarray(column, dtype=float)
    if not 0.0 < tail < 0.5:
        raise PanelError(f"tail must lie in (0, 0.5), got {tail}")
    finite = x[~np.isnan(x)]
    if finite.size < 2:
        raise PanelError("winsorize needs at least 2 non-missing values")
    lo, hi = np.quantile(finite, [tail, 1.0 - tail])
    return np.where(np.isnan(x), x, np.clip(x, lo, hi))


def winsorize_frame(panel: pd.DataFrame, columns: Sequence[str] = CONTINUOUS, tail: float = 0.01) -> pd.DataFrame:
    out = panel.copy()
    for col in columns:
        if col in out and out[col].notna().sum() >= 2:
            out[col] = winsorize(out[col].to_numpy(), tail)
    return out


def filter_sample(
    panel: pd.DataFrame,
    mode: str = "baseline",
    required: Sequence[str] = tuple(OUTCOMES) + ("loss",) + tuple(CONTROLS),
) -> tuple[pd.DataFrame, dict]:
    """Drop incomplete rows; ``mode="robust"`` also drops ST and financial firms."""
    if mode not in ("baseline", "robust"):
        raise PanelError(f"unknown sample mode {mode!r}")
    tallies = {"missing_required": 0, "st_flag": 0, "financial_industry": 0}
    cols = [c for c in required if c in panel]
    absent = [c for c in required if c not in panel]
    if absent:
        raise PanelError(f"panel lacks required columns {absent}")
    complete = panel[cols].notna().all(axis=1) & np.isfinite(panel[cols].astype(float)).all(axis=1)
    tallies["missing_required"] = int((~complete).sum())
    keep = complete
    if mode == "robust":
        for flag in ("st_flag", "financial_industry"):
            hit = keep & (panel[flag].fillna(0).astype(float) == 1)
            tallies[flag] = int(hit.sum())
            keep = keep & ~hit
    return panel.loc[keep].reset_index(drop=True), tallies


def construct_ivs(panel: pd.DataFrame, diversity) -> pd.DataFrame:
    """iv1 = gini(t+2)*roa, iv2 = entropy(t+2)*roa, iv3 = (gini+entropy)(t+2)*roa."""
    if "roa" not in panel:
        raise PanelError("construct_ivs needs an roa column")
    div = diversity_frame(diversity)
    lead2 = _shifted(div, 2, ["gini_t2", "ent_t2"])
    out = panel.drop(columns=["gini_t2", "ent_t2", "iv1", "iv2", "iv3", "iv_missing"], errors="ignore")
    out = out.merge(lead2, on=KEY, how="left", validate="one_to_one")
    out["iv1"] = out["gini_t2"] * out["roa"]
    out["iv2"] = out["ent_t2"] * out["roa"]
    out["iv3"] = (out["gini_t2"] + out["ent_t2"]) * out["roa"]
    out["iv_missing"] = out[["iv1", "iv2", "iv3"]].isna().any(axis=1)
    return out


def derive_largescale(panel: pd.DataFrame) -> pd.DataFrame:
    """largescale = 1 when total assets exceed that year's cross-firm mean."""
    out = panel.copy()
    year_mean = out.groupby("year")["total_assets"].transform("mean")
    out["largescale"] = (out["total_assets"] > year_mean).astype(int)
    return out


def build_panel(
    financials: pd.DataFrame,
    diversity,
    winsorize_tail: float | None = None,
) -> tuple[pd.DataFrame, dict]:
    """Raw financial table + diversity table -> estimation panel with IVs."""
    derived = derive_frame(financials)
    panel, drops = join_lead_outcome(derived, diversity)
    panel = derive_largescale(panel)
    if winsorize_tail:
        panel = winsorize_frame(panel, CONTINUOUS + OUTCOMES, winsorize_tail)
    panel = construct_ivs(panel, diversity)
    return panel, drops
