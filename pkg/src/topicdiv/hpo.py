"""Tree-structured Parzen Estimator over a flat box of integer/real parameters."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .kde import silverman_bandwidth

logger = logging.getLogger(__name__)

EPS = 1e-12


class SearchSpaceError(ValueError):
    pass


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str  # "int" or "real"
    lo: float
    hi: float
    log: bool = False

    def __post_init__(self):
        if self.kind not in ("int", "real"):
            raise SearchSpaceError(f"{self.name}: kind must be 'int' or 'real'")
        if not self.lo < self.hi:
            raise SearchSpaceError(f"{self.name}: need lo < hi, got [{self.lo}, {self.hi}]")
        if self.log and self.lo <= 0:
            raise SearchSpaceError(f"{self.name}: log scale needs lo > 0")

    # internal coordinates: log for log dims, identity otherwise
    def to_internal(self, x):
        return np.log(x) if self.log else np.asarray(x, dtype=float)

    def from_internal(self, t):
        return np.exp(t) if self.log else t

    @property
    def internal_bounds(self) -> tuple[float, float]:
        if self.log:
            return math.log(self.lo), math.log(self.hi)
        return float(self.lo), float(self.hi)

    def finalize(self, x: float):
        x = min(max(float(x), self.lo), self.hi)
        if self.kind == "int":
            x = int(min(max(round(x), math.ceil(self.lo)), math.floor(self.hi)))
        return x


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dimension, ...]

    def __post_init__(self):
        names = [d.name for d in self.dims]
        if not names:
            raise SearchSpaceError("search space has no dimensions")
        if len(set(names)) != len(names):
            raise SearchSpaceError(f"duplicate dimension names: {names}")

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    def contains(self, params: Mapping[str, float]) -> bool:
        for d in self.dims:
            v = params[d.name]
            if not d.lo <= v <= d.hi:
                return False
            if d.kind == "int" and int(v) != v:
                return False
        return True


def lda_space(
    K=(2, 50), passes=(10, 200), alpha=(1e-3, 1.0), beta=(1e-3, 1.0)
) -> SearchSpace:
    """Default box for (K, passes, alpha, beta)."""
    return SearchSpace(
        (
            Dimension("K", "int", *K),
            Dimension("passes", "int", *passes),
            Dimension("alpha", "real", *alpha, log=True),
            Dimension("beta", "real", *beta, log=True),
        )
    )


@dataclass(frozen=True)
class Trial:
    params: dict
    objective: float
    trial_index: int
    seed: int
    failed: bool = False


@dataclass
class TrialHistory:
    trials: list[Trial] = field(default_factory=list)
    gamma: float = 0.25
    n_startup: int = 10
    n_candidates: int = 24

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")

    def add(self, trial: Trial) -> None:
        if self.trials and trial.trial_index <= self.trials[-1].trial_index:
            raise ValueError("trial_index must be strictly increasing")
        self.trials.append(trial)

    @property
    def best(self) -> Trial:
        return min(self.trials, key=lambda t: (t.objective, t.trial_index))


def split_good_bad(history: TrialHistory) -> tuple[list[Trial], list[Trial]]:
    """Good set: the ``ceil(gamma * n)`` lowest objectives, ties by trial index."""
    n = len(history.trials)
    if n < 2:
        raise ValueError("need at least 2 trials to split")
    n_good = max(1, math.ceil(history.gamma * n - 1e-12))
    ranked = sorted(history.trials, key=lambda t: (t.objective, t.trial_index))
    return ranked[:n_good], ranked[n_good:]


def bandwidth_floor(n: int, lo: float, hi: float) -> float:
    """Smallest kernel width for ``n`` centers: range / min(100, n + 1).

    Without it a good set that has piled onto one point gets a near-zero
    Silverman width and the search stops moving.
    """
    return (hi - lo) / min(100, n + 1)


class _Parzen1D:
    """Equal-weight Gaussian mixture in a dimension's internal coordinates."""

    def __init__(self, centers: np.ndarray, lo: float, hi: float):
        self.centers = np.asarray(centers, dtype=float)
        self.bw = max(silverman_bandwidth(self.centers), bandwidth_floor(self.centers.size, lo, hi))
        self.lo, self.hi = lo, hi

    def pdf(self, x: np.ndarray) -> np.ndarray:
        if self.centers.size == 0:
            return np.zeros_like(np.asarray(x, dtype=float))
        d = (np.asarray(x, dtype=float)[:, None] - self.centers[None, :]) / self.bw
        return np.exp(-0.5 * d * d).mean(axis=1) / (self.bw * math.sqrt(2 * math.pi))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.integers(0, self.centers.size, size=size)
        return np.clip(self.centers[idx] + self.bw * rng.standard_normal(size), self.lo, self.hi)


def sample_prior(space: SearchSpace, rng: np.random.Generator) -> dict:
    out = {}
    for d in space.dims:
        lo, hi = d.internal_bounds
        if d.kind == "int" and not d.log:
            out[d.name] = d.finalize(rng.uniform(d.lo - 0.5, d.hi + 0.5))
        else:
            out[d.name] = d.finalize(d.from_internal(rng.uniform(lo, hi)))
    return out


def tpe_suggest(history: TrialHistory, space: SearchSpace, seed: int) -> dict:
    """Next parameters to try.

    Falls back to a prior draw until ``n_startup`` trials exist. Afterwards,
    per-dimension Gaussian KDEs are built for the good and bad sets and the
    candidate drawn from the good density with the largest ``l(x)/g(x)`` wins.
    """
    rng = np.random.default_rng(seed)
    n = len(history.trials)
    if n < max(history.n_startup, 2):
        return sample_prior(space, rng)
    good, bad = split_good_bad(history)
    n_cand = max(1, history.n_candidates)
    cand_internal = []
    log_l = np.zeros(n_cand)
    log_g = np.zeros(n_cand)
    for d in space.dims:
        lo, hi = d.internal_bounds
        lkde = _Parzen1D(d.to_internal([t.params[d.name] for t in good]), lo, hi)
        gkde = _Parzen1D(d.to_internal([t.params[d.name] for t in bad]), lo, hi)
        x = lkde.sample(rng, n_cand)
        if d.kind == "int":
            x = d.to_internal(np.array([d.finalize(v) for v in d.from_internal(x)], dtype=float))
        cand_internal.append(x)
        log_l += np.log(np.maximum(lkde.pdf(x), EPS))
        log_g += np.log(np.maximum(gkde.pdf(x), EPS))
    best = int(np.argmax(log_l - log_g))
    return {d.name: d.finalize(d.from_internal(c[best])) for d, c in zip(space.dims, cand_internal)}


def optimize(
    objective: Callable[[dict], float],
    space: SearchSpace,
    n_trials: int,
    master_seed: int = 0,
    history: TrialHistory | None = None,
    gamma: float = 0.25,
    n_startup: int = 10,
    n_candidates: int = 24,
    callback: Callable[[Trial], None] | None = None,
) -> tuple[Trial, TrialHistory]:
    """Sequential ask/tell minimization of ``objective`` for ``n_trials`` trials.

    Passing a previous ``history`` resumes it; its trials count toward the
    budget. Non-finite objectives are stored as ``inf`` and flagged.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if history is None:
        history = TrialHistory([], gamma, n_startup, n_candidates)
    else:
        history = replace(history, trials=list(history.trials))
    while len(history.trials) < n_trials:
        index = history.trials[-1].trial_index + 1 if history.trials else 0
        seed = int(master_seed) ^ index
        params = tpe_suggest(history, space, seed)
        value = float(objective(params))
        failed = not math.isfinite(value)
        if failed:
            logger.warning("trial %d returned non-finite objective %r; recorded as inf", index, value)
            value = math.inf
        trial = Trial(params, value, index, seed, failed)
        history.add(trial)
        if callback is not None:
            callback(trial)
    return history.best, history


def random_search(
    objective: Callable[[dict], float], space: SearchSpace, n_trials: int, master_seed: int = 0
) -> tuple[Trial, TrialHistory]:
    """Baseline: every trial is a prior draw."""
    return optimize(objective, space, n_trials, master_seed, n_startup=n_trials + 1)


# --------------------------------------------------------------------------
# persistence

HISTORY_FIELDS = ["trial_index", "K", "passes", "alpha", "beta", "objective", "seed"]


def save_history(history: TrialHistory, path, fields: Sequence[str] = HISTORY_FIELDS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for t in history.trials:
            row = {"trial_index": t.trial_index, "objective": t.objective, "seed": t.seed, **t.params}
            w.writerow([repr(row[f]) if isinstance(row[f], float) else row[f] for f in fields])


def load_history(path, space: SearchSpace, gamma=0.25, n_startup=10, n_candidates=24) -> TrialHistory:
    history = TrialHistory([], gamma, n_startup, n_candidates)
    kinds = {d.name: d.kind for d in space.dims}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            params = {
                name: (int(row[name]) if kind == "int" else float(row[name])) for name, kind in kinds.items()
            }
            obj = float(row["objective"])
            history.add(Trial(params, obj, int(row["trial_index"]), int(row["seed"]), not math.isfinite(obj)))
    return history
