import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion implemented by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        status = "PASS" if rep.passed else "FAIL"
        prev = _CRITERIA.get(number)
        if prev is None or prev[1] == "PASS":
            _CRITERIA[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2} {status}  {title}")


def make_panel(n_firms=10, n_years=5, seed=0, beta=(-0.5,), noise=0.0, unbalanced=0.0):
    """Random two-way panel with firm and year effects; y = 2 + X beta + fx + noise."""
    rng = np.random.default_rng(seed)
    fid = np.repeat(np.arange(n_firms), n_years)
    yr = np.tile(np.arange(2000, 2000 + n_years), n_firms)
    keep = rng.random(fid.size) >= unbalanced
    keep[:: n_years] = True
    fid, yr = fid[keep], yr[keep]
    n = fid.size
    x = rng.normal(size=(n, len(beta)))
    y = 2.0 + x @ np.asarray(beta) + rng.normal(size=n_firms)[fid] + rng.normal(size=n_years)[yr - 2000]
    y = y + noise * rng.normal(size=n)
    df = pd.DataFrame({"firm_id": [f"f{i}" for i in fid], "year": yr, "y": y})
    for j in range(len(beta)):
        df[f"x{j}"] = x[:, j]
    return df
