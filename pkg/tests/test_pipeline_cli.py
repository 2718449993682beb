import csv
import json
import shutil
import subprocess
import sys

import pytest

from topicdiv import cli, pipeline
from topicdiv.synthetic import SyntheticConfig, write_fixture

SMALL = SyntheticConfig(n_firms=30, n_years=4, doc_length=120)


def small_fixture(root, **edits):
    cfg = write_fixture(root, SMALL)
    text = cfg.read_text().replace("passes = 150", "passes = 30").replace("placebo_reps = 50", "placebo_reps = 10")
    for old, new in edits.items():
        assert old in text
        text = text.replace(old, new)
    cfg.write_text(text)
    return cfg


@pytest.fixture(scope="module")
def template(tmp_path_factory):
    return small_fixture(tmp_path_factory.mktemp("fixture")).parent


@pytest.fixture
def fx(template, tmp_path):
    dest = tmp_path / "fx"
    shutil.copytree(template, dest)
    return dest / "config.ini"


def run(*argv):
    return cli.main(list(argv))


def outcomes(capsys):
    out = capsys.readouterr().out
    return {line.split()[0]: line.split()[1] for line in out.splitlines() if line.strip()}


def csv_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


class TestRun:
    def test_full_run_then_skip(self, fx, capsys):
        assert run("run", "--config", str(fx)) == 0
        assert set(outcomes(capsys).values()) == {"ran"}
        out = fx.parent / "out"
        for rel in ("corpus/vocab.csv", "lda/model.bin", "lda/hpo_history.csv", "diversity/diversity.csv",
                    "panel/panel.csv", "results/results.csv", "results/results.txt",
                    "figures/box_gini.svg", "figures/placebo_baseline_gini.svg"):
            assert (out / rel).is_file(), rel
        assert (out / "diversity/diversity.csv").read_text().splitlines()[0] == "firm_id,year,gini,entropy"
        assert run("run", "--config", str(fx)) == 0
        assert set(outcomes(capsys).values()) == {"skipped"}
        records = [json.loads(line) for line in (out / "run_log.jsonl").read_text().splitlines()]
        assert [r["status"] for r in records] == ["ran"] * 6 + ["skipped"] * 6
        assert all({"stage", "duration_s", "input_hash"} <= set(r) for r in records)

    def test_changed_input_reruns_downstream_only(self, fx, capsys):
        assert run("run", "--config", str(fx)) == 0
        capsys.readouterr()
        fin = fx.parent / "financials.csv"
        rows = list(csv.reader(fin.open()))
        rows[1][rows[0].index("roa")] = "0.123"
        with fin.open("w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
        assert run("run", "--config", str(fx)) == 0
        status = outcomes(capsys)
        assert status["corpus"] == status["lda"] == status["diversity"] == "skipped"
        assert status["panel"] == status["estimation"] == "ran"

    def test_force(self, fx, capsys):
        assert run("run", "--config", str(fx)) == 0
        assert run("stage", "diversity", "--config", str(fx), "--force") == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[-1].split()[:2] == ["diversity", "ran"]

    def test_tampered_output_reruns(self, fx, capsys):
        assert run("run", "--config", str(fx)) == 0
        (fx.parent / "out/panel/panel.csv").write_text("garbage\n")
        capsys.readouterr()
        assert run("stage", "panel", "--config", str(fx)) == 0
        assert outcomes(capsys)["panel"] == "ran"

    def test_clean(self, fx, capsys):
        assert run("run", "--config", str(fx)) == 0
        assert run("clean", "--config", str(fx)) == 0
        out = fx.parent / "out"
        assert not any(out.iterdir())

    def test_jobs_and_repeat_byte_identical(self, template, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        shutil.copytree(template, a)
        shutil.copytree(template, b)
        assert run("run", "--config", str(a / "config.ini"), "--jobs", "1") == 0
        assert run("run", "--config", str(b / "config.ini"), "--jobs", "3") == 0
        assert csv_bytes(a / "out") == csv_bytes(b / "out")

    def test_seed_override(self, template, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        shutil.copytree(template, a)
        shutil.copytree(template, b)
        assert run("stage", "corpus", "--config", str(a / "config.ini")) == 0
        assert run("stage", "lda", "--config", str(a / "config.ini")) == 0
        assert run("stage", "corpus", "--config", str(b / "config.ini"), "--seed", "5") == 0
        assert run("stage", "lda", "--config", str(b / "config.ini"), "--seed", "5") == 0
        assert (a / "out/lda/model.bin").read_bytes() != (b / "out/lda/model.bin").read_bytes()

    def test_hpo_trials_written(self, tmp_path):
        cfg = small_fixture(tmp_path, **{"n_trials = 0": "n_trials = 3\nn_startup = 2\nK_min = 3\nK_max = 6\n"
                                                          "passes_min = 10\npasses_max = 20"})
        assert run("stage", "corpus", "--config", str(cfg)) == 0
        assert run("stage", "lda", "--config", str(cfg)) == 0
        rows = list(csv.DictReader((tmp_path / "out/lda/hpo_history.csv").open()))
        assert [r["trial_index"] for r in rows] == ["0", "1", "2"]
        assert all(3 <= int(r["K"]) <= 6 and 10 <= int(r["passes"]) <= 20 for r in rows)


class TestErrors:
    def test_missing_financials_names_path(self, fx, capsys):
        (fx.parent / "financials.csv").unlink()
        code = run("run", "--config", str(fx))
        assert code == 1
        assert "financials.csv" in capsys.readouterr().err

    def test_missing_config(self, tmp_path, capsys):
        assert run("run", "--config", str(tmp_path / "nope.ini")) == 1
        assert "nope.ini" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [[], ["run"], ["explode", "--config", "x"], ["stage", "nosuch", "--config", "x"],
                                      ["run", "--config", "x", "--jobs", "zero"]])
    def test_usage_errors(self, argv):
        assert run(*argv) == 1

    def test_jobs_must_be_positive(self, fx):
        assert run("run", "--config", str(fx), "--jobs", "0") == 1

    def test_bad_config_values(self, fx, capsys):
        text = fx.read_text()
        fx.write_text(text.replace("min_doc_freq = 2", "min_doc_freq = two"))
        assert run("run", "--config", str(fx)) == 1
        fx.write_text(text.replace("specs = baseline_gini,", "specs = missing_spec, baseline_gini,"))
        assert run("run", "--config", str(fx)) == 1
        assert "missing_spec" in capsys.readouterr().err

    def test_stage_failure_exit_2_keeps_artifacts(self, fx, capsys):
        fin = fx.parent / "financials.csv"
        lines = fin.read_text().splitlines()
        header = lines[0].split(",")
        drop = header.index("roa")
        fin.write_text("\n".join(",".join(c for i, c in enumerate(line.split(",")) if i != drop) for line in lines) + "\n")
        assert run("run", "--config", str(fx)) == 2
        assert "panel" in capsys.readouterr().err
        out = fx.parent / "out"
        assert (out / "diversity/diversity.csv").is_file()
        last = json.loads((out / "run_log.jsonl").read_text().splitlines()[-1])
        assert last["stage"] == "panel" and last["status"] == "failed" and "roa" in last["error"]

    def test_stage_without_upstream_fails(self, fx, capsys):
        assert run("stage", "estimation", "--config", str(fx)) == 2


def test_load_config_resolves_relative_paths(fx):
    cfg = pipeline.load_config(fx)
    assert cfg.paths["manifest"] == fx.parent / "manifest.csv"
    assert cfg.specs[2].regressors[2] == "loss×mt_positive"
    assert pipeline.load_config(fx, seed=9, jobs=2).seed == 9


def test_module_entry_point(fx):
    proc = subprocess.run([sys.executable, "-m", "topicdiv", "run", "--config", str(fx)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
