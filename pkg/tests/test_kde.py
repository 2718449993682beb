import numpy as np
import pytest
from scipy import stats

from topicdiv.kde import gaussian_kde, kde_curve, silverman_bandwidth


def test_standard_normal_recovered():
    # the sup error is itself random; require it of the typical sample
    errs = []
    for seed in range(20):
        v = np.random.default_rng(seed).standard_normal(10_000)
        grid, dens = kde_curve(v)
        inner = np.abs(grid) <= 3
        errs.append(np.max(np.abs(dens[inner] - stats.norm.pdf(grid[inner]))))
    assert np.median(errs) < 0.02
    assert np.mean(np.array(errs) < 0.02) >= 0.8


def test_integrates_to_one():
    grid, dens = kde_curve([0.1, 0.4, 0.45, 2.0])
    assert abs(np.trapezoid(dens, grid) - 1.0) < 1e-12
    assert np.all(dens >= 0)


def test_two_points_symmetric():
    grid, dens = kde_curve([-1.0, 1.0], n_grid=501)
    np.testing.assert_allclose(dens, dens[::-1], rtol=1e-12)


def test_silverman_matches_scipy_rule_of_thumb():
    v = np.random.default_rng(2).normal(3.0, 2.0, 400)
    sd = v.std(ddof=1)
    iqr = np.subtract(*np.percentile(v, [75, 25])) / 1.34
    assert silverman_bandwidth(v) == pytest.approx(0.9 * min(sd, iqr) * 400 ** -0.2)


def test_silverman_zero_iqr_uses_sd():
    v = np.array([0.0] * 10 + [1.0])
    assert silverman_bandwidth(v) == pytest.approx(0.9 * v.std(ddof=1) * 11 ** -0.2)


def test_gaussian_kde_single_center():
    x = np.linspace(-2, 2, 5)
    np.testing.assert_allclose(gaussian_kde(x, [0.0], 1.0), stats.norm.pdf(x), rtol=1e-12)


@pytest.mark.parametrize("values", [[], [1.0], [2.0, 2.0], [np.nan, 1.0]])
def test_degenerate_inputs(values):
    with pytest.raises(ValueError):
        kde_curve(values)
