import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topicdiv.hpo import (
    Dimension,
    SearchSpace,
    SearchSpaceError,
    Trial,
    TrialHistory,
    bandwidth_floor,
    lda_space,
    load_history,
    optimize,
    save_history,
    split_good_bad,
    tpe_suggest,
)

UNIT = SearchSpace((Dimension("x", "real", 0.0, 1.0),))


def _history(objectives, params=None, **kw):
    h = TrialHistory(**kw)
    for i, y in enumerate(objectives):
        h.add(Trial(params[i] if params else {"x": 0.5}, y, i, i))
    return h


class TestSplit:
    def test_eight_objectives(self):
        good, bad = split_good_bad(_history([5, 1, 4, 2, 3, 9, 8, 7]))
        assert sorted(t.objective for t in good) == [1, 2]
        assert sorted(t.objective for t in bad) == [3, 4, 5, 7, 8, 9]

    def test_two_trials_one_good(self):
        good, bad = split_good_bad(_history([3.0, 1.0]))
        assert [t.objective for t in good] == [1.0] and len(bad) == 1

    def test_ties_by_index(self):
        good, bad = split_good_bad(_history([1.0] * 8))
        assert [t.trial_index for t in good] == [0, 1]
        assert [t.trial_index for t in bad] == [2, 3, 4, 5, 6, 7]

    def test_needs_two(self):
        with pytest.raises(ValueError):
            split_good_bad(_history([1.0]))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40, unique=True),
           st.floats(0.05, 0.95))
    def test_threshold_separates(self, ys, gamma):
        good, bad = split_good_bad(_history(ys, gamma=gamma))
        assert len(good) == math.ceil(gamma * len(ys) - 1e-12) or len(good) == 1
        assert max(t.objective for t in good) <= min((t.objective for t in bad), default=math.inf)


class TestSpace:
    def test_bounds_validated(self):
        with pytest.raises(SearchSpaceError):
            Dimension("a", "real", 1.0, 1.0)
        with pytest.raises(SearchSpaceError):
            Dimension("a", "real", 0.0, 1.0, log=True)
        with pytest.raises(SearchSpaceError):
            Dimension("a", "float", 0.0, 1.0)

    def test_duplicate_names(self):
        d = Dimension("a", "real", 0.0, 1.0)
        with pytest.raises(SearchSpaceError):
            SearchSpace((d, d))


class TestSuggest:
    def test_startup_in_bounds_and_deterministic(self):
        space = lda_space()
        h = TrialHistory()
        a = tpe_suggest(h, space, 42)
        assert a == tpe_suggest(h, space, 42)
        assert space.contains(a)
        assert isinstance(a["K"], int) and isinstance(a["passes"], int)

    def test_clusters_toward_good_region(self):
        rng = np.random.default_rng(0)
        xs = list(np.clip(rng.normal(0.3, 0.03, 5), 0, 1)) + list(np.clip(rng.normal(0.9, 0.03, 15), 0, 1))
        ys = [0.0 + 0.01 * i for i in range(5)] + [1.0 + 0.01 * i for i in range(15)]
        h = _history(ys, [{"x": float(x)} for x in xs])
        hits = sum(0.15 <= tpe_suggest(h, UNIT, s)["x"] <= 0.45 for s in range(1000))
        assert hits >= 950

    def test_empty_bad_density_floored(self):
        # every bad trial sits far away so g underflows to 0 at the candidates
        wide = SearchSpace((Dimension("x", "real", 0.0, 1e6),))
        xs = [1.0, 2.0, 3.0] + [1e6] * 9
        h = _history([0.0, 0.1, 0.2] + [5.0] * 9, [{"x": x} for x in xs])
        with np.errstate(all="raise"):
            x = tpe_suggest(h, wide, 1)["x"]
        assert 0.0 <= x <= 1e6

    def test_integer_dims_integral(self):
        space = lda_space()
        h = TrialHistory(n_startup=3)
        rng = np.random.default_rng(1)
        for i in range(8):
            p = tpe_suggest(h, space, i)
            h.add(Trial(p, float(rng.random()), i, i))
        for s in range(30):
            p = tpe_suggest(h, space, s)
            assert space.contains(p) and isinstance(p["K"], int)

    def test_bandwidth_floor(self):
        assert bandwidth_floor(4, 0.0, 1.0) == pytest.approx(0.2)
        assert bandwidth_floor(1000, 0.0, 1.0) == pytest.approx(0.01)


class TestOptimize:
    def test_single_trial_is_startup(self):
        best, h = optimize(lambda p: (p["x"] - 0.3) ** 2, UNIT, 1, master_seed=7)
        assert len(h.trials) == 1 and best is h.trials[0]
        assert best.seed == 7 ^ 0

    def test_best_is_minimum(self):
        best, h = optimize(lambda p: abs(p["x"] - 0.6), UNIT, 20, master_seed=3)
        assert best.objective == min(t.objective for t in h.trials)
        assert [t.trial_index for t in h.trials] == list(range(20))

    def test_non_finite_quarantined(self):
        calls = iter([math.nan] + [0.5] * 4)
        best, h = optimize(lambda p: next(calls), UNIT, 5)
        assert h.trials[0].failed and h.trials[0].objective == math.inf
        assert best.objective == 0.5

    def test_deterministic(self):
        f = lambda p: (p["x"] - 0.3) ** 2
        a = optimize(f, UNIT, 25, master_seed=11)[1]
        b = optimize(f, UNIT, 25, master_seed=11)[1]
        assert [t.params for t in a.trials] == [t.params for t in b.trials]

    def test_resume_matches_uninterrupted(self, tmp_path):
        space = lda_space()

        def f(p):
            return (p["K"] - 12) ** 2 + math.log(p["alpha"]) ** 2 + p["passes"] / 1000

        full = optimize(f, space, 16, master_seed=5)[1]
        part = optimize(f, space, 12, master_seed=5)[1]
        path = tmp_path / "hist.csv"
        save_history(part, path)
        assert path.read_text().splitlines()[0] == "trial_index,K,passes,alpha,beta,objective,seed"
        resumed = optimize(f, space, 16, master_seed=5, history=load_history(path, space))[1]
        assert [t.params for t in resumed.trials] == [t.params for t in full.trials]

    def test_rejects_zero_budget(self):
        with pytest.raises(ValueError):
            optimize(lambda p: 0.0, UNIT, 0)
