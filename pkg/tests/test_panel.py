import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topicdiv.diversity import DiversityRecord
from topicdiv.panel import (
    FINANCIAL_COLUMNS,
    PanelError,
    build_panel,
    construct_ivs,
    derive_frame,
    derive_largescale,
    derive_variables,
    filter_sample,
    join_lead_outcome,
    read_competition,
    read_financials,
    winsorize,
)


def raw_row(firm="A", year=2006, **over):
    row = dict(
        firm_id=firm, year=year, net_profit=1.0, total_assets=100.0, total_liabilities=40.0, op_cashflow=5.0,
        fixed_assets_net=30.0, top1_share=0.3, board_count=9, market_value_equity=150.0, book_debt=40.0,
        roa=0.05, mt_positive=2, mt_neutral=1, mt_negative=0, salary_top3_raw=1e6, salary_sum_raw=3e6,
        sshrrat=0.01, gri=0, certification=0, worksafety=1, st_flag=0, financial_industry=0, high_competition=1,
    )
    row.update(over)
    return row


def fin_frame(rows):
    return pd.DataFrame(rows, columns=FINANCIAL_COLUMNS)


class TestDerive:
    def test_loss(self):
        assert derive_variables(raw_row(net_profit=-5))["loss"] == 1
        assert derive_variables(raw_row(net_profit=0.0))["loss"] == 0

    def test_size_lev(self):
        d = derive_variables(raw_row(total_assets=math.exp(23), total_liabilities=math.exp(23) / 2))
        assert d["size"] == pytest.approx(23.0, abs=1e-12) and d["lev"] == pytest.approx(0.5)

    def test_ln_zero_salary(self):
        d = derive_variables(raw_row(salary_top3_raw=0.0))
        assert d["salarytop3"] == 0.0 and d["salarysum"] == pytest.approx(math.log(3e6))

    def test_tobinq_board(self):
        d = derive_variables(raw_row())
        assert d["tobinq"] == pytest.approx(1.9) and d["board"] == pytest.approx(math.log(9))

    @pytest.mark.parametrize("assets", [0.0, -1.0])
    def test_bad_assets(self, assets):
        with pytest.raises(PanelError):
            derive_variables(raw_row(total_assets=assets))
        with pytest.raises(PanelError):
            derive_frame(fin_frame([raw_row(total_assets=assets)]))

    def test_frame_matches_rowwise(self):
        rows = [raw_row("A", 2006, net_profit=-2, salary_sum_raw=0.0), raw_row("B", 2007, total_assets=7.5)]
        frame = derive_frame(fin_frame(rows))
        for i, row in enumerate(rows):
            expect = derive_variables(row)
            for key in ("loss", "size", "lev", "cashflow", "fixed", "board", "tobinq", "salarytop3", "salarysum"):
                assert frame.loc[i, key] == pytest.approx(expect[key], abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-1e9, 1e9, allow_nan=False))
    def test_loss_iff_negative(self, profit):
        assert derive_variables(raw_row(net_profit=profit))["loss"] == int(profit < 0)


def _div(*triples):
    return [DiversityRecord(f, y, g, e) for f, y, g, e in triples]


class TestJoin:
    def test_two_years_paired_with_lead(self):
        fin = derive_frame(fin_frame([raw_row("A", 2006), raw_row("A", 2007)]))
        div = _div(("A", 2007, 0.1, 1.0), ("A", 2008, 0.2, 2.0))
        panel, drops = join_lead_outcome(fin, div)
        assert panel[["year", "y_gini", "y_ent"]].values.tolist() == [[2006, 0.1, 1.0], [2007, 0.2, 2.0]]
        assert drops["no_lead_outcome"] == 0

    def test_no_lead_dropped(self):
        fin = derive_frame(fin_frame([raw_row("B", 2006)]))
        panel, drops = join_lead_outcome(fin, _div(("B", 2006, 0.1, 1.0)))
        assert len(panel) == 0 and drops["no_lead_outcome"] == 1

    def test_empty_diversity(self):
        fin = derive_frame(fin_frame([raw_row("A", 2006)]))
        panel, drops = join_lead_outcome(fin, [])
        assert len(panel) == 0 and len(panel) + drops["no_lead_outcome"] == 1


class TestWinsorize:
    def test_one_to_hundred(self):
        x = np.arange(1.0, 101.0)
        lo, hi = np.sort(x)[0] + 0.99 * 1, 100 - 0.99  # positions 0.99 and 98.01
        w = winsorize(x, 0.01)
        assert w[0] == pytest.approx(lo) and w[-1] == pytest.approx(hi)
        np.testing.assert_array_equal(w[1:-1], x[1:-1])

    def test_constant(self):
        np.testing.assert_array_equal(winsorize(np.full(7, 3.0), 0.1), np.full(7, 3.0))

    @pytest.mark.parametrize("tail", [0.0, 0.5, -0.1])
    def test_bad_tail(self, tail):
        with pytest.raises(PanelError):
            winsorize([1.0, 2.0, 3.0], tail)

    def test_too_short(self):
        with pytest.raises(PanelError):
            winsorize([1.0, np.nan], 0.1)

    def test_nan_passthrough(self):
        w = winsorize([np.nan, 1.0, 2.0, 100.0], 0.25)
        assert np.isnan(w[0])

    def test_idempotent_when_quantiles_hit_order_statistics(self):
        x = np.random.default_rng(0).standard_normal(101)
        once = winsorize(x, 0.01)
        np.testing.assert_array_equal(winsorize(once, 0.01), once)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=60), st.floats(0.01, 0.45))
    def test_order_and_bounds(self, values, tail):
        x = np.asarray(values)
        w = winsorize(x, tail)
        lo, hi = np.quantile(x, [tail, 1 - tail])
        assert np.all(w >= lo - 1e-9) and np.all(w <= hi + 1e-9)
        order = np.argsort(x, kind="stable")
        assert np.all(np.diff(w[order]) >= 0)
        again = winsorize(w, tail)
        assert np.all(again >= w.min()) and np.all(again <= w.max())


class TestFilter:
    def _panel(self):
        fin = derive_frame(fin_frame([raw_row("A", 2006), raw_row("B", 2006, st_flag=1),
                                      raw_row("C", 2006, financial_industry=1), raw_row("D", 2006)]))
        panel, _ = join_lead_outcome(fin, _div(*[(f, 2007, 0.5, 1.0) for f in "ABCD"]))
        panel.loc[panel.firm_id == "D", "y_gini"] = np.nan
        return panel

    def test_baseline(self):
        out, tallies = filter_sample(self._panel(), "baseline")
        assert sorted(out.firm_id) == ["A", "B", "C"] and tallies["missing_required"] == 1

    def test_robust(self):
        out, tallies = filter_sample(self._panel(), "robust")
        assert list(out.firm_id) == ["A"]
        assert tallies == {"missing_required": 1, "st_flag": 1, "financial_industry": 1}

    def test_unknown_mode(self):
        with pytest.raises(PanelError):
            filter_sample(self._panel(), "everything")


class TestIvs:
    def _panel(self, roa):
        fin = derive_frame(fin_frame([raw_row("A", 2006, roa=roa), raw_row("A", 2007, roa=roa)]))
        div = _div(("A", 2007, 0.3, 0.9), ("A", 2008, 0.5, 1.2))
        panel, _ = join_lead_outcome(fin, div)
        return construct_ivs(panel, div)

    def test_products(self):
        p = self._panel(0.1)
        first = p.iloc[0]
        assert first.iv1 == pytest.approx(0.05) and first.iv2 == pytest.approx(0.12)
        assert first.iv3 == pytest.approx(first.iv1 + first.iv2)

    def test_zero_roa(self):
        first = self._panel(0.0).iloc[0]
        assert (first.iv1, first.iv2, first.iv3) == (0.0, 0.0, 0.0)

    def test_missing_t_plus_2(self):
        last = self._panel(0.1).iloc[1]
        assert np.isnan(last.iv1) and last.iv_missing


class TestLargeScale:
    def _ls(self, assets):
        df = pd.DataFrame({"firm_id": [f"f{i}" for i in range(len(assets))], "year": 2010,
                           "total_assets": assets})
        return derive_largescale(df)["largescale"].tolist()

    def test_cutoff(self):
        assert self._ls([10.0, 30.0]) == [0, 1]

    def test_single_firm(self):
        assert self._ls([5.0]) == [0]

    def test_all_equal(self):
        assert self._ls([4.0, 4.0, 4.0]) == [0, 0, 0]


class TestFiles:
    def test_competition_overrides(self, tmp_path):
        fin = tmp_path / "fin.csv"
        fin_frame([raw_row("A", 2006, high_competition=0)]).to_csv(fin, index=False)
        comp = tmp_path / "comp.csv"
        comp.write_text("firm_id,high_competition\nA,1\n")
        assert read_financials(fin, comp).loc[0, "high_competition"] == 1

    def test_bad_competition_header(self, tmp_path):
        comp = tmp_path / "comp.csv"
        comp.write_text("firm,hc\nA,1\n")
        with pytest.raises(PanelError):
            read_competition(comp)

    def test_missing_column(self, tmp_path):
        fin = tmp_path / "fin.csv"
        fin_frame([raw_row()]).drop(columns=["roa"]).to_csv(fin, index=False)
        with pytest.raises(PanelError, match="roa"):
            read_financials(fin)

    def test_duplicate_key(self, tmp_path):
        fin = tmp_path / "fin.csv"
        fin_frame([raw_row(), raw_row()]).to_csv(fin, index=False)
        with pytest.raises(PanelError, match="duplicate"):
            read_financials(fin)


def test_build_panel_end_to_end():
    rows = [raw_row("A", y, total_assets=10.0 * (y - 2004)) for y in (2006, 2007)] + [raw_row("B", 2006)]
    div = _div(("A", 2007, 0.3, 0.9), ("A", 2008, 0.5, 1.2), ("B", 2007, 0.1, 0.2), ("B", 2008, 0.2, 0.3))
    panel, drops = build_panel(fin_frame(rows), div)
    assert len(panel) == 3 and drops["no_lead_outcome"] == 0
    assert {"largescale", "iv1", "y_gini"} <= set(panel.columns)
    assert panel.loc[panel.firm_id == "B", "iv1"].iloc[0] == pytest.approx(0.2 * 0.05)
