"""Synthetic corpus + financial panel with a planted treatment effect on diversity.

Each firm-year document mixes ``K`` topics with disjoint vocabularies. Its
topic shares are drawn from a symmetric Dirichlet whose concentration is
chosen so the expected Gini-Simpson index equals a target built from a firm
effect, a year effect, the firm's loss status in the previous year and a
loss-by-moderator interaction. Fit, score and regress, and the planted
coefficients should come back.

Run ``python -m topicdiv.synthetic OUTDIR`` to write a ready-to-run fixture.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .panel import FINANCIAL_COLUMNS

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
STOPWORDS = ("the", "and", "of", "to", "in", "our", "we", "for")
PHRASES = ("social responsibility", "supply chain", "employee safety", "carbon emission", "community service")


@dataclass(frozen=True)
class SyntheticConfig:
    n_firms: int = 150
    n_years: int = 6
    first_year: int = 2010
    K: int = 5
    words_per_topic: int = 20
    doc_length: int = 300
    stopword_rate: float = 0.15
    base_gini: float = 0.55
    firm_sd: float = 0.04
    year_sd: float = 0.02
    loss_effect: float = -0.05
    interaction_effect: float = 0.04
    moderator: str = "mt_positive"
    loss_rate: float = 0.3
    seed: int = 0


@dataclass
class SyntheticData:
    config: SyntheticConfig
    documents: pd.DataFrame  # doc_id, firm_id, year, text, target_gini, true_gini
    financials: pd.DataFrame
    competition: pd.DataFrame
    topic_words: list[list[str]]


def topic_vocabulary(K: int, words_per_topic: int) -> list[list[str]]:
    """Disjoint letter-only word lists, one per topic; topic ``k < 5`` also owns a phrase."""
    syll = [c + v for c in _CONSONANTS for v in _VOWELS]
    words, i = [], 0
    for k in range(K):
        block = []
        for _ in range(words_per_topic):
            a, b = divmod(i, len(syll))
            c, a = divmod(a, len(syll))
            block.append(syll[c % len(syll)] + syll[a] + syll[b])
            i += 1
        if k < len(PHRASES):
            block[0] = PHRASES[k]
        words.append(block)
    return words


def dirichlet_concentration(target_gini: float, K: int) -> float:
    """Symmetric concentration ``a`` with E[1 - sum p^2] = target under Dir(a)."""
    top = (K - 1) / K
    if not 0.0 < target_gini < top:
        raise ValueError(f"target gini must lie in (0, {top:.4f}) for K={K}")
    return target_gini / ((K - 1) - K * target_gini)


def generate(cfg: SyntheticConfig = SyntheticConfig()) -> SyntheticData:
    rng = np.random.default_rng(cfg.seed)
    F, T = cfg.n_firms, cfg.n_years
    firms = [f"F{i:04d}" for i in range(F)]
    years = np.arange(cfg.first_year, cfg.first_year + T + 1)  # one extra year of documents for the lead outcome
    firm_fx = rng.normal(0.0, cfg.firm_sd, F)
    year_fx = rng.normal(0.0, cfg.year_sd, years.size)
    firm_loss_bias = rng.normal(0.0, 0.5, F)
    topic_words = topic_vocabulary(cfg.K, cfg.words_per_topic)

    fin_rows = []
    loss = np.zeros((F, years.size), dtype=int)
    moder = rng.normal(0.0, 1.0, (F, years.size))
    for i, firm in enumerate(firms):
        assets = math.exp(rng.normal(22.0, 1.0))
        gri = int(rng.random() < 0.4)
        fin_ind = int(i % 25 == 0)
        for t, year in enumerate(years):
            p_loss = 1.0 / (1.0 + math.exp(-(math.log(cfg.loss_rate / (1 - cfg.loss_rate)) + firm_loss_bias[i])))
            loss[i, t] = int(rng.random() < p_loss)
            assets *= math.exp(rng.normal(0.05, 0.1))
            roa = (-abs(rng.normal(0.03, 0.03)) - 1e-4) if loss[i, t] else abs(rng.normal(0.05, 0.03)) + 1e-4
            fin_rows.append({
                "firm_id": firm,
                "year": int(year),
                "net_profit": roa * assets,
                "total_assets": assets,
                "total_liabilities": assets * rng.uniform(0.2, 0.8),
                "op_cashflow": assets * rng.normal(0.05, 0.05),
                "fixed_assets_net": assets * rng.uniform(0.1, 0.5),
                "top1_share": rng.uniform(0.1, 0.7),
                "board_count": int(rng.integers(5, 15)),
                "market_value_equity": assets * rng.uniform(0.5, 2.5),
                "book_debt": assets * rng.uniform(0.1, 0.5),
                "roa": roa,
                "mt_positive": moder[i, t],
                "mt_neutral": rng.normal(0.0, 1.0),
                "mt_negative": rng.normal(0.0, 1.0),
                "salary_top3_raw": 0.0 if rng.random() < 0.02 else math.exp(rng.normal(14.0, 0.5)),
                "salary_sum_raw": math.exp(rng.normal(15.5, 0.5)),
                "sshrrat": rng.uniform(0.0, 0.1),
                "gri": gri,
                "certification": int(rng.random() < 0.3),
                "worksafety": int(rng.random() < 0.5),
                "st_flag": int(rng.random() < 0.02),
                "financial_industry": fin_ind,
                "high_competition": 0,
            })
    fin = pd.DataFrame(fin_rows, columns=FINANCIAL_COLUMNS)
    if cfg.moderator != "mt_positive":
        moder = fin[cfg.moderator].to_numpy(dtype=float).reshape(F, years.size)

    doc_rows = []
    for i, firm in enumerate(firms):
        for t, year in enumerate(years):
            target = cfg.base_gini + firm_fx[i] + year_fx[t]
            if t > 0:
                prev = loss[i, t - 1]
                target += cfg.loss_effect * prev + cfg.interaction_effect * prev * moder[i, t - 1]
            target = float(np.clip(target, 0.05, 0.75))
            theta = rng.dirichlet(np.full(cfg.K, dirichlet_concentration(target, cfg.K)))
            topics = rng.choice(cfg.K, size=cfg.doc_length, p=theta)
            picks = rng.integers(0, cfg.words_per_topic, size=cfg.doc_length)
            tokens = [topic_words[k][j] for k, j in zip(topics, picks)]
            counts = np.bincount(topics, minlength=cfg.K) / cfg.doc_length
            out = []
            for tok in tokens:
                if rng.random() < cfg.stopword_rate:
                    out.append(STOPWORDS[int(rng.integers(len(STOPWORDS)))])
                out.append(tok)
            text = _sentences(out, rng)
            doc_rows.append({
                "doc_id": f"{firm}-{year}",
                "firm_id": firm,
                "year": int(year),
                "text": text,
                "target_gini": target,
                "true_gini": float(1.0 - np.dot(counts, counts)),
            })
    comp = pd.DataFrame({"firm_id": firms, "high_competition": rng.integers(0, 2, F)})
    return SyntheticData(cfg, pd.DataFrame(doc_rows), fin, comp, topic_words)


def _sentences(words: list[str], rng: np.random.Generator) -> str:
    out, i = [], 0
    while i < len(words):
        n = int(rng.integers(8, 16))
        chunk = words[i : i + n]
        chunk[0] = chunk[0].capitalize()
        out.append(" ".join(chunk) + ".")
        i += n
    return "\n".join(" ".join(out[j : j + 4]) for j in range(0, len(out), 4)) + "\n"


DEFAULT_INI = """\
# Synthetic fixture configuration. Paths are relative to this file.
[run]
seed = {seed}
jobs = 1

[paths]
manifest = manifest.csv
text_dir = texts
lexicon = lexicon.txt
stopwords = stopwords.txt
financials = financials.csv
competition = competition.csv
output_dir = out

[corpus]
min_doc_freq = 2
validation_fraction = 0.1

[hpo]
n_trials = 0

[lda]
K = {K}
alpha = 0.1
beta = 0.01
passes = 150
burn_in = 30
samples = 30

[panel]
winsorize = no
winsorize_tail = 0.01
sample = baseline

[estimation]
specs = baseline_gini, baseline_ent, moderation_gini
placebo_specs = baseline_gini
placebo_reps = 50

[spec:baseline_gini]
outcome = y_gini
regressors = loss, size, lev, cashflow, fixed, top1, board, tobinq

[spec:baseline_ent]
outcome = y_ent
regressors = loss, size, lev, cashflow, fixed, top1, board, tobinq

[spec:moderation_gini]
outcome = y_gini
regressors = loss, {moderator}, loss*{moderator}, size, lev, cashflow, fixed, top1, board, tobinq
"""


def write_fixture(outdir, cfg: SyntheticConfig = SyntheticConfig(), ini_overrides: str = "") -> Path:
    """Write manifest, texts, word lists, financial tables and ``config.ini``.

    Returns the path of the config file.
    """
    outdir = Path(outdir)
    (outdir / "texts").mkdir(parents=True, exist_ok=True)
    data = generate(cfg)
    with open(outdir / "manifest.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["doc_id", "firm_id", "year", "filename"])
        for row in data.documents.itertuples():
            name = f"{row.doc_id}.txt"
            (outdir / "texts" / name).write_text(row.text, encoding="utf-8")
            w.writerow([row.doc_id, row.firm_id, row.year, name])
    (outdir / "lexicon.txt").write_text(
        "# multiword terms kept as single tokens\n" + "\n".join(PHRASES) + "\n", encoding="utf-8"
    )
    (outdir / "stopwords.txt").write_text("# function words\n" + "\n".join(STOPWORDS) + "\n", encoding="utf-8")
    data.financials.to_csv(outdir / "financials.csv", index=False, lineterminator="\n", float_format="%.17g")
    data.competition.to_csv(outdir / "competition.csv", index=False, lineterminator="\n")
    data.documents[["doc_id", "firm_id", "year", "target_gini", "true_gini"]].to_csv(
        outdir / "truth.csv", index=False, lineterminator="\n", float_format="%.17g"
    )
    (outdir / "truth.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    config = outdir / "config.ini"
    config.write_text(DEFAULT_INI.format(seed=cfg.seed, K=cfg.K, moderator=cfg.moderator) + ini_overrides, encoding="utf-8")
    return config


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m topicdiv.synthetic", description=__doc__.splitlines()[0])
    ap.add_argument("outdir")
    ap.add_argument("--firms", type=int, default=SyntheticConfig.n_firms)
    ap.add_argument("--years", type=int, default=SyntheticConfig.n_years)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    path = write_fixture(args.outdir, SyntheticConfig(n_firms=args.firms, n_years=args.years, seed=args.seed))
    print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
