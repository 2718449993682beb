import csv
import io
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from topicdiv.diversity import AnnualBoxStats
from topicdiv.estimators import PlaceboDistribution, RegressionResult, kde_curve
from topicdiv.report import emit_boxplot_svg, emit_density_svg, emit_table, stars, table_csv, table_text

NS = "{http://www.w3.org/2000/svg}"


def result(coef, se, n_clusters=200, names=("loss", "Constant"), outcome="y_gini"):
    coef = np.asarray(coef, float)
    return RegressionResult(
        names=list(names), coef=coef, vcov=np.diag(np.asarray(se, float) ** 2), n_obs=1000,
        n_clusters=n_clusters, r2=0.75, adjusted_r2=0.7012, residuals=np.zeros(1000),
        sample_index=np.arange(1000), absorbed={"firm_id": 200, "year": 5}, outcome=outcome,
    )


class TestStars:
    @pytest.mark.parametrize("p,s", [(0.005, "***"), (0.03, "**"), (0.07, "*"), (0.10, ""), (0.5, ""),
                                     (float("nan"), "")])
    def test_thresholds(self, p, s):
        assert stars(p) == s


class TestTables:
    def test_coefficient_over_parenthesized_se(self):
        lines = table_text([result([-0.0174, 0.5], [0.0063, 0.1])]).splitlines()
        i = next(k for k, line in enumerate(lines) if line.startswith("loss"))
        assert lines[i].split()[-1] == "-0.0174***"
        assert lines[i + 1].split()[-1] == "(0.0063)"

    def test_single_star(self):
        # t = 1.82 on 199 df -> p ~ 0.07
        r = result([0.0182, 0.5], [0.01, 0.1])
        assert 0.05 < r.pvalue("loss") < 0.10
        assert "0.0182*" in table_text(r).split()

    def test_layout_rows(self):
        text = table_text([result([-0.0174, 0.5], [0.0063, 0.1]), result([-0.04, 2.0], [0.02, 0.3], outcome="y_ent")],
                          labels=["(1)", "(2)"])
        labels = [line.split("  ")[0].strip() for line in text.splitlines()]
        order = [labels.index(x) for x in ("loss", "Constant", "Firm FE", "Year FE", "Observations", "Adjusted R²")]
        assert order == sorted(order)
        assert "y_ent" in text and "0.7012" in text

    def test_empty_is_header_only(self, tmp_path):
        assert table_text([]).strip() == ""
        out = emit_table([], tmp_path / "t.csv", style="csv")
        assert out.read_text().splitlines() == [",".join(
            ["model", "outcome", "term", "estimate", "cluster_se", "p_value", "stars", "n_obs", "adjusted_r2"])]

    def test_csv_machine_readable(self):
        r = result([-0.0174, 0.5], [0.0063, 0.1])
        rows = list(csv.DictReader(io.StringIO(table_csv(r))))
        assert [row["term"] for row in rows] == ["loss", "Constant"]
        assert float(rows[0]["estimate"]) == -0.0174 and float(rows[0]["cluster_se"]) == pytest.approx(0.0063)
        assert rows[0]["stars"] == "***" and rows[0]["n_obs"] == "1000"

    def test_unknown_style(self, tmp_path):
        with pytest.raises(ValueError):
            emit_table([], tmp_path / "x", style="latex")


def box(year, outliers=()):
    return AnnualBoxStats(year, 0.3, 0.4, 0.5, 0.1, 0.7, tuple(outliers), 20)


def parse(path):
    root = ET.parse(path).getroot()
    assert root.tag == f"{NS}svg" and root.get("viewBox")
    return root


class TestBoxplotSvg:
    def test_three_years(self, tmp_path):
        root = parse(emit_boxplot_svg([box(2010), box(2011, [0.95, 0.99]), box(2012)], tmp_path / "b.svg"))
        groups = root.findall(f".//{NS}g[@class='box']")
        assert [g.get("data-year") for g in groups] == ["2010", "2011", "2012"]
        counts = [len(g.findall(f"{NS}circle[@class='outlier']")) for g in groups]
        assert counts == [0, 2, 0]
        assert all(len(g.findall(f"{NS}line[@class='median']")) == 1 for g in groups)

    def test_single_year(self, tmp_path):
        root = parse(emit_boxplot_svg([box(2015)], tmp_path / "b.svg"))
        assert len(root.findall(f".//{NS}g[@class='box']")) == 1

    def test_empty(self, tmp_path):
        with pytest.raises(ValueError):
            emit_boxplot_svg([], tmp_path / "b.svg")


def placebo(n=10, baseline=-0.0174, missing=0):
    rng = np.random.default_rng(0)
    coefs = rng.normal(0, 0.005, n)
    pvals = rng.random(n)
    coefs[:missing] = np.nan
    pvals[:missing] = np.nan
    ok = np.isfinite(coefs)
    grid, dens = kde_curve(coefs[ok]) if ok.sum() >= 2 else (np.zeros(0), np.zeros(0))
    return PlaceboDistribution(coefs, pvals, baseline, 0.004, "loss", missing, grid, dens)


class TestDensitySvg:
    def test_baseline_line_and_dots(self, tmp_path):
        root = parse(emit_density_svg(placebo(), tmp_path / "d.svg"))
        (line,) = root.findall(f".//{NS}line[@class='baseline']")
        assert float(line.get("data-value")) == -0.0174
        assert line.get("x1") == line.get("x2")
        assert len(root.findall(f".//{NS}circle[@class='pvalue']")) == 10
        assert len(root.findall(f".//{NS}polyline[@class='kde']")) == 1
        (dashed,) = root.findall(f".//{NS}line[@class='p010']")
        assert dashed.get("stroke-dasharray") and dashed.get("y1") == dashed.get("y2")

    def test_missing_reps_skipped(self, tmp_path):
        root = parse(emit_density_svg(placebo(12, missing=2), tmp_path / "d.svg"))
        assert len(root.findall(f".//{NS}circle[@class='pvalue']")) == 10

    def test_all_missing(self, tmp_path):
        with pytest.raises(ValueError):
            emit_density_svg(placebo(5, missing=5), tmp_path / "d.svg")
