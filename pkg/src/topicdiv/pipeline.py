"""Config-driven pipeline: corpus -> lda -> diversity -> panel -> estimation -> figures.

Configuration is an INI file read with :mod:`configparser`. Relative paths
resolve against the directory holding the config file. Sections and keys::

    [run]        seed, jobs, stages (comma list; default all)
    [paths]      manifest, text_dir, lexicon, stopwords, financials,
                 competition, output_dir
    [corpus]     min_doc_freq, validation_fraction
    [hpo]        n_trials (0 = use [lda] values), gamma, n_startup,
                 n_candidates, K_min, K_max, passes_min, passes_max,
                 alpha_min, alpha_max, beta_min, beta_max
    [lda]        K, alpha, beta, passes, burn_in, samples
    [panel]      winsorize (yes/no), winsorize_tail, sample (baseline/robust)
    [estimation] specs, placebo_specs, placebo_reps
    [spec:NAME]  kind (ols/tsls/psm), outcome, regressors, sample,
                 endogenous + instruments (tsls), covariates + caliper (psm)

In ``regressors`` a term ``a*b`` denotes the interaction of ``a`` and ``b``.

Every stage records a hash of its inputs (config values, seed, upstream
file contents) under ``OUTPUT_DIR/.state``; when the hash and the recorded
output hashes still match, the stage is skipped unless forced. Each stage
appends one JSON line to ``OUTPUT_DIR/run_log.jsonl``.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import logging
import math
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from . import corpus as corpus_mod
from . import diversity as div_mod
from . import hpo, panel as panel_mod, report, topic_model
from .estimators import (
    INTERACTION,
    PlaceboDistribution,
    RegressionSpec,
    kde_curve,
    ols_fe,
    placebo_run,
    psm,
    tsls,
)

logger = logging.getLogger(__name__)

STAGES = ["corpus", "lda", "diversity", "panel", "estimation", "figures"]
STATE_DIR = ".state"
LOG_NAME = "run_log.jsonl"
ARTIFACT_DIRS = ["corpus", "lda", "diversity", "panel", "results", "figures"]

# path keys each stage needs at load time
_STAGE_PATHS = {
    "corpus": ["manifest", "text_dir"],
    "lda": [],
    "diversity": [],
    "panel": ["financials"],
    "estimation": ["financials"],
    "figures": [],
}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (exit code 1)."""


class StageError(RuntimeError):
    """A stage failed while running (exit code 2)."""


@dataclass(frozen=True)
class SpecConfig:
    name: str
    kind: str
    outcome: str
    regressors: tuple[str, ...]
    sample: str = "baseline"
    endogenous: str = ""
    instruments: tuple[str, ...] = ()
    covariates: tuple[str, ...] = ()
    caliper: float = 0.05
    treatment: str = "loss"

    def regression_spec(self) -> RegressionSpec:
        return RegressionSpec(self.outcome, self.regressors, sample=self.sample)


@dataclass
class PipelineConfig:
    path: Path
    seed: int
    jobs: int
    stages: list[str]
    paths: dict[str, Path | None]
    output_dir: Path
    min_doc_freq: int
    validation_fraction: float
    hpo_trials: int
    hpo_gamma: float
    hpo_startup: int
    hpo_candidates: int
    hpo_bounds: dict[str, tuple[float, float]]
    lda_params: dict
    burn_in: int
    samples: int
    winsorize: bool
    winsorize_tail: float
    sample_mode: str
    specs: list[SpecConfig]
    placebo_specs: list[str]
    placebo_reps: int
    raw: dict = field(default_factory=dict, repr=False)

    def section(self, *names: str) -> dict:
        return {n: self.raw.get(n, {}) for n in names}


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.replace("\n", ",").split(",") if v.strip()]


def _term(t: str) -> str:
    return INTERACTION.join(p.strip() for p in t.split("*")) if "*" in t else t


def load_config(path, seed: int | None = None, jobs: int | None = None, check_paths: bool = True) -> PipelineConfig:
    """Parse and validate a pipeline config; ``seed``/``jobs`` override the file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    base = path.parent

    def get(section, key, default=None, conv=str):
        if cp.has_option(section, key):
            raw = cp.get(section, key)
            try:
                if conv is bool:
                    return cp.getboolean(section, key)
                return conv(raw)
            except ValueError:
                raise ConfigError(f"{path}: [{section}] {key} = {raw!r} is not a valid {conv.__name__}") from None
        return default

    stages = _split_list(get("run", "stages", ",".join(STAGES)))
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise ConfigError(f"{path}: unknown stages {unknown}; choose from {STAGES}")
    paths: dict[str, Path | None] = {}
    for key in ("manifest", "text_dir", "lexicon", "stopwords", "financials", "competition"):
        v = get("paths", key)
        paths[key] = (base / v) if v else None
    out = get("paths", "output_dir", "out")
    output_dir = base / out

    bounds = {}
    for name, lo, hi in (("K", 2, 50), ("passes", 10, 200), ("alpha", 1e-3, 1.0), ("beta", 1e-3, 1.0)):
        conv = int if name in ("K", "passes") else float
        bounds[name] = (get("hpo", f"{name}_min", lo, conv), get("hpo", f"{name}_max", hi, conv))

    spec_names = _split_list(get("estimation", "specs", ""))
    specs = []
    for name in spec_names:
        sec = f"spec:{name}"
        if not cp.has_section(sec):
            raise ConfigError(f"{path}: spec {name!r} listed but section [{sec}] is missing")
        kind = get(sec, "kind", "ols")
        if kind not in ("ols", "tsls", "psm"):
            raise ConfigError(f"{path}: [{sec}] kind must be ols, tsls or psm")
        outcome = get(sec, "outcome")
        if not outcome:
            raise ConfigError(f"{path}: [{sec}] needs an outcome")
        regs = tuple(_term(t) for t in _split_list(get(sec, "regressors", "")))
        sc = SpecConfig(
            name=name,
            kind=kind,
            outcome=outcome,
            regressors=regs,
            sample=get(sec, "sample", get("panel", "sample", "baseline")),
            endogenous=get(sec, "endogenous", ""),
            instruments=tuple(_split_list(get(sec, "instruments", ""))),
            covariates=tuple(_split_list(get(sec, "covariates", ""))),
            caliper=get(sec, "caliper", 0.05, float),
            treatment=get(sec, "treatment", "loss"),
        )
        if kind == "tsls" and (not sc.endogenous or not sc.instruments):
            raise ConfigError(f"{path}: [{sec}] tsls needs endogenous and instruments")
        if kind == "psm" and not sc.covariates:
            raise ConfigError(f"{path}: [{sec}] psm needs covariates")
        if sc.sample not in ("baseline", "robust"):
            raise ConfigError(f"{path}: [{sec}] sample must be baseline or robust")
        specs.append(sc)
    placebo_specs = _split_list(get("estimation", "placebo_specs", ""))
    for name in placebo_specs:
        if name not in spec_names:
            raise ConfigError(f"{path}: placebo spec {name!r} is not in [estimation] specs")

    cfg = PipelineConfig(
        path=path,
        seed=int(seed) if seed is not None else get("run", "seed", 0, int),
        jobs=int(jobs) if jobs is not None else get("run", "jobs", 1, int),
        stages=stages,
        paths=paths,
        output_dir=output_dir,
        min_doc_freq=get("corpus", "min_doc_freq", 1, int),
        validation_fraction=get("corpus", "validation_fraction", 0.1, float),
        hpo_trials=get("hpo", "n_trials", 0, int),
        hpo_gamma=get("hpo", "gamma", 0.25, float),
        hpo_startup=get("hpo", "n_startup", 10, int),
        hpo_candidates=get("hpo", "n_candidates", 24, int),
        hpo_bounds=bounds,
        lda_params={
            "K": get("lda", "K", 10, int),
            "alpha": get("lda", "alpha", 0.1, float),
            "beta": get("lda", "beta", 0.01, float),
            "passes": get("lda", "passes", 100, int),
        },
        burn_in=get("lda", "burn_in", 50, int),
        samples=get("lda", "samples", 50, int),
        winsorize=get("panel", "winsorize", False, bool),
        winsorize_tail=get("panel", "winsorize_tail", 0.01, float),
        sample_mode=get("panel", "sample", "baseline"),
        specs=specs,
        placebo_specs=placebo_specs,
        placebo_reps=get("estimation", "placebo_reps", 0, int),
        raw={s: dict(cp.items(s)) for s in cp.sections()},
    )
    if cfg.jobs < 1:
        raise ConfigError(f"{path}: jobs must be >= 1")
    if cfg.sample_mode not in ("baseline", "robust"):
        raise ConfigError(f"{path}: [panel] sample must be baseline or robust")
    if check_paths:
        check_stage_paths(cfg, cfg.stages)
    return cfg


def check_stage_paths(cfg: PipelineConfig, stages) -> None:
    for stage in stages:
        for key in _STAGE_PATHS[stage]:
            p = cfg.paths.get(key)
            if p is None:
                raise ConfigError(f"stage {stage!r} needs [paths] {key}")
            if not p.exists():
                raise ConfigError(f"stage {stage!r}: {key} not found: {p}")
    if "corpus" in stages:
        for key in ("lexicon", "stopwords"):
            p = cfg.paths.get(key)
            if p is not None and not p.is_file():
                raise ConfigError(f"stage 'corpus': {key} not found: {p}")
    if "panel" in stages and cfg.paths.get("competition") is not None and not cfg.paths["competition"].is_file():
        raise ConfigError(f"stage 'panel': competition not found: {cfg.paths['competition']}")


# --------------------------------------------------------------------------
# hashing


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _tree_hash(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode("utf-8") + b"\0" + file_hash(p).encode("ascii"))
    return h.hexdigest()


def _hash_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# stages


@dataclass
class Stage:
    name: str
    run: Callable[[PipelineConfig], list[Path]]
    inputs: Callable[[PipelineConfig], dict]


def _out(cfg: PipelineConfig, *parts: str) -> Path:
    p = cfg.output_dir.joinpath(*parts)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _require(path: Path, stage: str) -> Path:
    if not path.is_file():
        raise StageError(f"stage {stage!r} needs {path}; run the upstream stage first")
    return path


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return path


# corpus ------------------------------------------------------------------


def _corpus_inputs(cfg):
    files = {"manifest": file_hash(cfg.paths["manifest"]), "texts": _tree_hash(cfg.paths["text_dir"])}
    for key in ("lexicon", "stopwords"):
        if cfg.paths[key] is not None:
            files[key] = file_hash(cfg.paths[key])
    return {"files": files, "corpus": cfg.section("corpus"), "seed": cfg.seed}


def run_corpus(cfg: PipelineConfig) -> list[Path]:
    raw = corpus_mod.load_corpus(cfg.paths["manifest"], cfg.paths["text_dir"])
    lex = corpus_mod.Lexicon.from_files(cfg.paths["lexicon"], cfg.paths["stopwords"])
    tokenized = [corpus_mod.tokenize(d.text, lex) for d in raw]
    vocab = corpus_mod.build_vocabulary(tokenized, cfg.min_doc_freq)
    encoded, excluded = corpus_mod.encode(tokenized, vocab, [d.doc_id for d in raw])
    split = corpus_mod.split_train_validation(encoded, cfg.validation_fraction, cfg.seed)
    in_val = {d.doc_id for d in split.validation}
    meta = {d.doc_id: d for d in raw}

    outs = [
        _write_csv(_out(cfg, "corpus", "vocab.csv"), ["token_id", "token", "doc_freq"],
                   [(i, t, int(vocab.doc_freq[i])) for i, t in enumerate(vocab.id_to_token)]),
        _write_csv(_out(cfg, "corpus", "documents.csv"), ["doc_id", "firm_id", "year", "split", "n_tokens"],
                   [(d.doc_id, meta[d.doc_id].firm_id, meta[d.doc_id].year,
                     "validation" if d.doc_id in in_val else "train", d.n_tokens) for d in encoded]),
        _write_csv(_out(cfg, "corpus", "bow.csv"), ["doc_id", "token_id", "count"],
                   [(d.doc_id, int(t), int(c)) for d in encoded for t, c in zip(d.token_ids, d.counts)]),
        _write_csv(_out(cfg, "corpus", "excluded.csv"), ["doc_id", "reason"],
                   [(doc_id, "no in-vocabulary tokens") for doc_id in excluded]),
    ]
    return outs


def _read_corpus(cfg: PipelineConfig, stage: str):
    vocab = pd.read_csv(_require(cfg.output_dir / "corpus" / "vocab.csv", stage), keep_default_na=False)
    docs = pd.read_csv(_require(cfg.output_dir / "corpus" / "documents.csv", stage), dtype={"doc_id": str, "firm_id": str})
    bow = pd.read_csv(_require(cfg.output_dir / "corpus" / "bow.csv", stage), dtype={"doc_id": str})
    groups = {k: g for k, g in bow.groupby("doc_id", sort=False)}
    encoded = {}
    for doc_id in docs["doc_id"]:
        g = groups[doc_id]
        encoded[doc_id] = corpus_mod.EncodedDocument(
            doc_id, g["token_id"].to_numpy(np.int64), g["count"].to_numpy(np.int64)
        )
    return list(vocab["token"].astype(str)), docs, encoded


# lda ---------------------------------------------------------------------


def _upstream(cfg, *rel: str) -> dict:
    out = {}
    for r in rel:
        p = cfg.output_dir / r
        out[r] = file_hash(p) if p.is_file() else None
    return out


def _lda_inputs(cfg):
    return {"upstream": _upstream(cfg, "corpus/vocab.csv", "corpus/documents.csv", "corpus/bow.csv"),
            "config": cfg.section("hpo", "lda"), "seed": cfg.seed}


def run_lda(cfg: PipelineConfig) -> list[Path]:
    tokens, docs, encoded = _read_corpus(cfg, "lda")
    train = [encoded[d] for d in docs.loc[docs["split"] == "train", "doc_id"]]
    val = [encoded[d] for d in docs.loc[docs["split"] == "validation", "doc_id"]]
    V = len(tokens)
    infer_cfg = topic_model.InferenceConfig(cfg.burn_in, cfg.samples, cfg.seed)
    hist_path = _out(cfg, "lda", "hpo_history.csv")

    if cfg.hpo_trials > 0:
        b = cfg.hpo_bounds
        space = hpo.lda_space(K=b["K"], passes=b["passes"], alpha=b["alpha"], beta=b["beta"])
        models: dict[int, topic_model.LdaModel] = {}

        def objective(params):
            hyper = topic_model.LdaHyperParams(params["K"], params["alpha"], params["beta"], params["passes"], cfg.seed)
            model = topic_model.fit_lda(train, hyper, V, tokens)
            models[len(models)] = model
            return topic_model.log_perplexity(model, val, infer_cfg)

        best, history = hpo.optimize(
            objective, space, cfg.hpo_trials, cfg.seed,
            gamma=cfg.hpo_gamma, n_startup=cfg.hpo_startup, n_candidates=cfg.hpo_candidates,
        )
        model = models[best.trial_index]
        hpo.save_history(history, hist_path)
    else:
        p = cfg.lda_params
        hyper = topic_model.LdaHyperParams(p["K"], p["alpha"], p["beta"], p["passes"], cfg.seed)
        model = topic_model.fit_lda(train, hyper, V, tokens)
        objective = topic_model.log_perplexity(model, val, infer_cfg) if val else math.nan
        _write_csv(hist_path, hpo.HISTORY_FIELDS,
                   [(0, hyper.K, hyper.passes, float(hyper.alpha), float(hyper.beta), float(objective), cfg.seed)])
    model_path = _out(cfg, "lda", "model.bin")
    topic_model.save_model(model, model_path)
    topics = _write_csv(_out(cfg, "lda", "topics.csv"), ["topic", "rank", "token", "prob"],
                        [(k, r, w, p) for k in range(model.K) for r, (w, p) in enumerate(topic_model.top_words(model, k, 10))])
    return [hist_path, model_path, topics]


# diversity ---------------------------------------------------------------


def _diversity_inputs(cfg):
    return {"upstream": _upstream(cfg, "corpus/documents.csv", "corpus/bow.csv", "lda/model.bin"),
            "config": {"burn_in": cfg.burn_in, "samples": cfg.samples}, "seed": cfg.seed}


def run_diversity(cfg: PipelineConfig) -> list[Path]:
    _, docs, encoded = _read_corpus(cfg, "diversity")
    model = topic_model.load_model(_require(cfg.output_dir / "lda" / "model.bin", "diversity"))

    def one(doc_id):
        return topic_model.infer_theta(model, encoded[doc_id], cfg.burn_in, cfg.samples, cfg.seed)

    ids = list(docs["doc_id"])
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            thetas = list(pool.map(one, ids))
    else:
        thetas = [one(d) for d in ids]
    records = [div_mod.score(f, y, th) for f, y, th in zip(docs["firm_id"], docs["year"], thetas)]
    div_path = _out(cfg, "diversity", "diversity.csv")
    div_mod.write_diversity_csv(records, div_path)
    theta_path = _write_csv(_out(cfg, "diversity", "theta.csv"), ["doc_id"] + [f"topic_{k}" for k in range(model.K)],
                            [(d, *map(float, th)) for d, th in zip(ids, thetas)])
    box_rows = []
    for metric in ("gini", "entropy"):
        for s in div_mod.annual_box_stats(records, metric):
            box_rows.append((metric, s.year, s.n, s.q1, s.median, s.q3, s.whisker_lo, s.whisker_hi,
                             " ".join(repr(o) for o in s.outliers)))
    box_path = _write_csv(_out(cfg, "diversity", "box_stats.csv"),
                          ["metric", "year", "n", "q1", "median", "q3", "whisker_lo", "whisker_hi", "outliers"], box_rows)
    return [div_path, theta_path, box_path]


# panel -------------------------------------------------------------------


def _panel_inputs(cfg):
    files = {"financials": file_hash(cfg.paths["financials"])}
    if cfg.paths["competition"] is not None:
        files["competition"] = file_hash(cfg.paths["competition"])
    return {"files": files, "upstream": _upstream(cfg, "diversity/diversity.csv"), "config": cfg.section("panel")}


def run_panel(cfg: PipelineConfig) -> list[Path]:
    fin = panel_mod.read_financials(cfg.paths["financials"], cfg.paths["competition"])
    div = div_mod.read_diversity_csv(_require(cfg.output_dir / "diversity" / "diversity.csv", "panel"))
    tail = cfg.winsorize_tail if cfg.winsorize else None
    panel, drops = panel_mod.build_panel(fin, div, tail)
    path = _out(cfg, "panel", "panel.csv")
    panel.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    tallies = dict(drops)
    for mode in ("baseline", "robust"):
        _, t = panel_mod.filter_sample(panel, mode)
        tallies.update({f"{mode}_{k}": v for k, v in t.items()})
    tpath = _write_csv(_out(cfg, "panel", "tallies.csv"), ["reason", "count"], sorted(tallies.items()))
    return [path, tpath]


def read_panel(path) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"firm_id": str})


# estimation --------------------------------------------------------------


def _estimation_inputs(cfg):
    secs = ["estimation"] + [f"spec:{s.name}" for s in cfg.specs]
    return {"upstream": _upstream(cfg, "panel/panel.csv"), "config": cfg.section(*secs),
            "sample": cfg.sample_mode, "seed": cfg.seed}


def _estimate(panel: pd.DataFrame, spec: SpecConfig):
    sample, _ = panel_mod.filter_sample(panel, spec.sample)
    if spec.kind == "ols":
        return ols_fe(sample, spec.regression_spec())
    if spec.kind == "tsls":
        return tsls(sample, spec.regression_spec(), spec.endogenous, spec.instruments)
    return psm(sample, spec.outcome, spec.covariates, spec.treatment, spec.caliper, id_column="firm_id")


def run_estimation(cfg: PipelineConfig) -> list[Path]:
    panel = read_panel(_require(cfg.output_dir / "panel" / "panel.csv", "estimation"))
    outs: list[Path] = []
    regs, labels = [], []
    for spec in cfg.specs:
        try:
            res = _estimate(panel, spec)
        except Exception as exc:
            raise StageError(f"spec {spec.name!r}: {exc}") from exc
        if spec.kind == "psm":
            outs.append(_write_psm(cfg, spec, res))
            continue
        outs.append(report.emit_table(res, _out(cfg, "results", f"{spec.name}.csv"), "csv", [spec.name]))
        outs.append(report.emit_table(res, _out(cfg, "results", f"{spec.name}.txt"), "text", [spec.name]))
        regs.append(res)
        labels.append(spec.name)
    outs.append(report.emit_table(regs, _out(cfg, "results", "results.csv"), "csv", labels))
    outs.append(report.emit_table(regs, _out(cfg, "results", "results.txt"), "text", [f"({i + 1})" for i in range(len(regs))]))

    summary = []
    by_name = {s.name: s for s in cfg.specs}
    for name in cfg.placebo_specs:
        spec = by_name[name]
        if cfg.placebo_reps < 1:
            break
        sample, _ = panel_mod.filter_sample(panel, spec.sample)
        dist = placebo_run(sample, spec.regression_spec(), cfg.placebo_reps, cfg.seed, spec.treatment, jobs=cfg.jobs)
        outs.append(_write_csv(_out(cfg, "results", f"placebo_{name}.csv"), ["rep", "coefficient", "p_value"],
                               [(r, float(c), float(p)) for r, (c, p) in enumerate(zip(dist.coefficients, dist.p_values))]))
        summary.append((name, spec.treatment, float(dist.baseline_coef), float(dist.baseline_p), dist.n_reps, dist.n_failed))
    outs.append(_write_csv(_out(cfg, "results", "placebo_summary.csv"),
                           ["spec", "treatment", "baseline_coef", "baseline_p", "n_reps", "n_failed"], summary))
    return outs


def _write_psm(cfg: PipelineConfig, spec: SpecConfig, m) -> Path:
    rows = [("att", "", float(m.att), float(m.att_se), "", "")]
    rows += [("pairs", "", m.n_pairs, "", "", ""), ("off_support", "", m.off_support_count, "", "", ""),
             ("no_match", "", m.no_match_count, "", "", "")]
    rows += [("balance", b.covariate, float(b.bias_before), float(b.bias_after), float(b.t_after), float(b.p_after))
             for b in m.balance]
    return _write_csv(_out(cfg, "results", f"{spec.name}.csv"), ["item", "covariate", "value", "se_or_after", "t", "p"], rows)


# figures -----------------------------------------------------------------


def _figures_inputs(cfg):
    rel = ["diversity/diversity.csv", "results/placebo_summary.csv"]
    rel += [f"results/placebo_{n}.csv" for n in cfg.placebo_specs]
    return {"upstream": _upstream(cfg, *rel), "version": report.__version__}


def load_placebo(cfg: PipelineConfig, name: str, row) -> PlaceboDistribution:
    df = pd.read_csv(cfg.output_dir / "results" / f"placebo_{name}.csv")
    coefs = df["coefficient"].to_numpy(float)
    pvals = df["p_value"].to_numpy(float)
    ok = np.isfinite(coefs) & np.isfinite(pvals)
    if ok.sum() >= 2 and np.ptp(coefs[ok]) > 0:
        grid, dens = kde_curve(coefs[ok])
    else:
        grid, dens = np.zeros(0), np.zeros(0)
    return PlaceboDistribution(coefs, pvals, float(row["baseline_coef"]), float(row["baseline_p"]),
                               str(row["treatment"]), int((~ok).sum()), grid, dens)


def run_figures(cfg: PipelineConfig) -> list[Path]:
    records = div_mod.read_diversity_csv(_require(cfg.output_dir / "diversity" / "diversity.csv", "figures"))
    outs = [
        report.emit_boxplot_svg(div_mod.annual_box_stats(records, "gini"), _out(cfg, "figures", "box_gini.svg"),
                                ylabel="Gini-Simpson diversity", title="Topic diversity by year (Gini-Simpson)"),
        report.emit_boxplot_svg(div_mod.annual_box_stats(records, "entropy"), _out(cfg, "figures", "box_entropy.svg"),
                                ylabel="Shannon entropy", title="Topic diversity by year (entropy)"),
    ]
    summary_path = cfg.output_dir / "results" / "placebo_summary.csv"
    if summary_path.is_file():
        summary = pd.read_csv(summary_path, dtype={"spec": str})
        for _, row in summary.iterrows():
            dist = load_placebo(cfg, row["spec"], row)
            outs.append(report.emit_density_svg(dist, _out(cfg, "figures", f"placebo_{row['spec']}.svg"),
                                                title=f"Placebo distribution: {row['spec']}"))
    return outs


STAGE_TABLE = {
    "corpus": Stage("corpus", run_corpus, _corpus_inputs),
    "lda": Stage("lda", run_lda, _lda_inputs),
    "diversity": Stage("diversity", run_diversity, _diversity_inputs),
    "panel": Stage("panel", run_panel, _panel_inputs),
    "estimation": Stage("estimation", run_estimation, _estimation_inputs),
    "figures": Stage("figures", run_figures, _figures_inputs),
}


# --------------------------------------------------------------------------
# driver


@dataclass
class StageOutcome:
    stage: str
    status: str  # "ran", "skipped" or "failed"
    duration_s: float
    input_hash: str
    outputs: dict[str, str]
    error: str = ""


def _state_path(cfg: PipelineConfig, stage: str) -> Path:
    return _out(cfg, STATE_DIR, f"{stage}.json")


def _up_to_date(cfg: PipelineConfig, stage: str, input_hash: str) -> dict | None:
    p = _state_path(cfg, stage)
    if not p.is_file():
        return None
    try:
        state = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return None
    if state.get("input_hash") != input_hash:
        return None
    for rel, h in state.get("outputs", {}).items():
        f = cfg.output_dir / rel
        if not f.is_file() or file_hash(f) != h:
            return None
    return state


def _log(cfg: PipelineConfig, record: dict) -> None:
    with open(_out(cfg, LOG_NAME), "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def run_stage(cfg: PipelineConfig, name: str, force: bool = False) -> StageOutcome:
    stage = STAGE_TABLE[name]
    t0 = time.perf_counter()
    inputs = stage.inputs(cfg)
    input_hash = _hash_json(inputs)
    state = None if force else _up_to_date(cfg, name, input_hash)
    if state is not None:
        outcome = StageOutcome(name, "skipped", time.perf_counter() - t0, input_hash, state["outputs"])
    else:
        try:
            paths = stage.run(cfg)
        except Exception as exc:
            dur = time.perf_counter() - t0
            _log(cfg, {"event": "stage", "stage": name, "status": "failed", "duration_s": round(dur, 6),
                       "input_hash": input_hash, "inputs": inputs, "error": f"{type(exc).__name__}: {exc}"})
            state_file = _state_path(cfg, name)
            if state_file.exists():
                state_file.unlink()
            raise StageError(f"stage {name!r} failed: {exc}") from exc
        outputs = {str(p.relative_to(cfg.output_dir)): file_hash(p) for p in paths}
        _state_path(cfg, name).write_text(
            json.dumps({"stage": name, "input_hash": input_hash, "outputs": outputs}, indent=1, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        outcome = StageOutcome(name, "ran", time.perf_counter() - t0, input_hash, outputs)
    _log(cfg, {"event": "stage", "stage": name, "status": outcome.status, "duration_s": round(outcome.duration_s, 6),
               "input_hash": input_hash, "inputs": inputs, "outputs": outcome.outputs})
    return outcome


def run_pipeline(cfg: PipelineConfig, stages=None, force: bool = False) -> list[StageOutcome]:
    """Run ``stages`` (default: the config's selection) in dependency order.

    Raises :class:`StageError` at the first failing stage; artifacts of the
    stages that already finished stay on disk.
    """
    stages = cfg.stages if stages is None else list(stages)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    outcomes = []
    for name in STAGES:
        if name in stages:
            outcomes.append(run_stage(cfg, name, force))
    return outcomes


def clean(cfg: PipelineConfig) -> list[Path]:
    """Remove artifacts, stage state and the run log from the output directory."""
    removed = []
    for d in ARTIFACT_DIRS + [STATE_DIR]:
        p = cfg.output_dir / d
        if p.is_dir():
            shutil.rmtree(p)
            removed.append(p)
    log = cfg.output_dir / LOG_NAME
    if log.is_file():
        log.unlink()
        removed.append(log)
    return removed
