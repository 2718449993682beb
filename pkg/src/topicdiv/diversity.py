"""Gini-Simpson and Shannon diversity of topic distributions, plus yearly box stats."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-6


@dataclass(frozen=True)
class DiversityRecord:
    firm_id: str
    year: int
    gini: float
    entropy: float


@dataclass(frozen=True)
class AnnualBoxStats:
    year: int
    q1: float
    median: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple[float, ...]
    n: int


def _check(theta) -> np.ndarray:
    p = np.asarray(theta, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("theta must be a non-empty vector")
    if np.any(p < 0):
        raise ValueError("theta has negative entries")
    if abs(p.sum() - 1.0) > NORM_TOL:
        raise ValueError(f"theta is not normalized (sum={p.sum():.9f})")
    return p


def gini_simpson(theta) -> float:
    """1 - sum(p^2): chance that two draws land on different topics."""
    p = _check(theta)
    return float(1.0 - np.dot(p, p))


def shannon_entropy(theta) -> float:
    """-sum(p log p) in nats, with 0 log 0 taken as 0."""
    p = _check(theta)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def score(firm_id: str, year: int, theta) -> DiversityRecord:
    return DiversityRecord(firm_id, int(year), gini_simpson(theta), shannon_entropy(theta))


def annual_box_stats(records: Iterable[DiversityRecord], metric: str = "gini") -> list[AnnualBoxStats]:
    """Tukey box-plot summary per year (linear-interpolated quartiles, 1.5 IQR)."""
    by_year: dict[int, list[float]] = {}
    for r in records:
        by_year.setdefault(r.year, []).append(float(getattr(r, metric)))
    out = []
    for year in sorted(by_year):
        v = np.sort(np.asarray(by_year[year]))
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        iqr = q3 - q1
        lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        inside = v[(v >= lo_fence) & (v <= hi_fence)]
        out.append(
            AnnualBoxStats(
                year,
                float(q1),
                float(med),
                float(q3),
                float(inside.min()),
                float(inside.max()),
                tuple(float(x) for x in v[(v < lo_fence) | (v > hi_fence)]),
                int(v.size),
            )
        )
    return out


def write_diversity_csv(records: Sequence[DiversityRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["firm_id", "year", "gini", "entropy"])
        for r in sorted(records, key=lambda r: (r.firm_id, r.year)):
            w.writerow([r.firm_id, r.year, repr(r.gini), repr(r.entropy)])


def read_diversity_csv(path) -> list[DiversityRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            DiversityRecord(row["firm_id"], int(row["year"]), float(row["gini"]), float(row["entropy"]))
            for row in csv.DictReader(fh)
        ]
