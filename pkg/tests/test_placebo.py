import numpy as np
import pandas as pd
import pytest

from dgp import null_panel
from topicdiv.estimators import (
    EstimationError,
    RegressionSpec,
    ols_fe,
    permute_within,
    placebo_run,
    with_interaction,
)

SPEC = RegressionSpec("y", ("loss", "size"))


def test_permutation_preserves_year_counts():
    df = null_panel(0, 30, 6)
    base = df.groupby("year")["loss"].sum()
    rng = np.random.default_rng(1)
    for _ in range(20):
        shuffled = permute_within(df["loss"].to_numpy(), df["year"].to_numpy(), rng)
        assert df.assign(loss=shuffled).groupby("year")["loss"].sum().equals(base)


def test_single_rep_deterministic():
    df = null_panel(1, 30, 6)
    a = placebo_run(df, SPEC, 1, master_seed=9)
    b = placebo_run(df, SPEC, 1, master_seed=9)
    assert np.array_equal(a.coefficients, b.coefficients)


def test_jobs_do_not_change_results():
    df = null_panel(2, 30, 6)
    a = placebo_run(df, SPEC, 12, master_seed=4, jobs=1)
    b = placebo_run(df, SPEC, 12, master_seed=4, jobs=4)
    assert np.array_equal(a.coefficients, b.coefficients) and np.array_equal(a.p_values, b.p_values)


def test_rep_seed_is_master_xor_index():
    df = null_panel(3, 20, 5)
    dist = placebo_run(df, SPEC, 3, master_seed=6)
    rng = np.random.default_rng(6 ^ 2)
    shuffled = df.assign(loss=permute_within(df["loss"].to_numpy(), df["year"].to_numpy(), rng))
    assert dist.coefficients[2] == ols_fe(shuffled, SPEC)["loss"]


def test_shapes_and_baseline():
    df = null_panel(4, 30, 6)
    dist = placebo_run(df, SPEC, 25, master_seed=0)
    assert dist.n_reps == 25 and dist.p_values.shape == (25,) and dist.n_failed == 0
    assert dist.baseline_coef == ols_fe(df, SPEC)["loss"]
    grid, dens = dist.kde_curve
    assert abs(np.trapezoid(dens, grid) - 1) < 1e-3
    assert 0 <= dist.share_below(0.10) <= 1


def test_interaction_rebuilt_from_permuted_treatment():
    df = null_panel(5, 30, 6)
    spec = with_interaction(SPEC, "loss", "size")
    dist = placebo_run(df, spec, 5, master_seed=1)
    assert dist.valid.all()


def test_failed_reps_recorded():
    # 3 firms x 2 years: some permutations make loss constant within firm,
    # so the firm effects absorb it and the rep cannot estimate a coefficient
    rng = np.random.default_rng(0)
    df = pd.DataFrame({"firm_id": list("ABCABC"), "year": [1, 1, 1, 2, 2, 2],
                       "loss": [1, 0, 0, 0, 1, 0], "y": rng.normal(size=6)})
    dist = placebo_run(df, RegressionSpec("y", ("loss",)), 40, master_seed=3)
    failed = ~dist.valid
    assert 0 < dist.n_failed < 40 and dist.n_failed == failed.sum()
    assert np.isnan(dist.coefficients[failed]).all()


def test_treatment_absorbed_in_baseline():
    df = null_panel(6, 20, 4)
    df["loss"] = (df["year"] == 2000).astype(int)
    with pytest.raises(EstimationError):
        placebo_run(df, SPEC, 3)


def test_bad_inputs():
    df = null_panel(7, 10, 3)
    with pytest.raises(EstimationError):
        placebo_run(df, SPEC, 0)
    with pytest.raises(EstimationError):
        placebo_run(df.drop(columns=["loss"]), RegressionSpec("y", ("size",)), 2)
