"""LDA by collapsed Gibbs sampling, fold-in inference and held-out perplexity."""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .corpus import EncodedDocument


class TopicModelError(ValueError):
    pass


@dataclass(frozen=True)
class LdaHyperParams:
    K: int
    alpha: float
    beta: float
    passes: int
    seed: int = 0

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise TopicModelError(f"K must be a positive integer, got {self.K}")
        if not self.alpha > 0 or not self.beta > 0:
            raise TopicModelError(f"alpha and beta must be positive, got {self.alpha}, {self.beta}")
        if int(self.passes) != self.passes or self.passes < 1:
            raise TopicModelError(f"passes must be a positive integer, got {self.passes}")


@dataclass
class GibbsState:
    z: np.ndarray
    words: np.ndarray
    doc_of: np.ndarray
    ndk: np.ndarray
    nkw: np.ndarray
    nk: np.ndarray

    def check(self) -> None:
        """Raise if the count tables disagree with the assignments."""
        n_docs, n_topics = self.ndk.shape
        ndk = np.zeros_like(self.ndk)
        np.add.at(ndk, (self.doc_of, self.z), 1)
        nkw = np.zeros_like(self.nkw)
        np.add.at(nkw, (self.z, self.words), 1)
        if not (np.array_equal(ndk, self.ndk) and np.array_equal(nkw, self.nkw)):
            raise AssertionError("Gibbs count tables inconsistent with topic assignments")
        if not np.array_equal(self.nkw.sum(axis=1), self.nk):
            raise AssertionError("topic totals do not match topic-word counts")
        doc_len = np.bincount(self.doc_of, minlength=n_docs)
        if not np.array_equal(self.ndk.sum(axis=1), doc_len):
            raise AssertionError("document-topic counts do not sum to document lengths")


@dataclass(frozen=True)
class LdaModel:
    phi: np.ndarray
    hyper: LdaHyperParams
    vocab_size: int
    train_doc_count: int
    tokens: tuple[str, ...] | None = None

    @property
    def K(self) -> int:
        return self.phi.shape[0]


@dataclass(frozen=True)
class InferenceConfig:
    burn_in: int = 50
    samples: int = 50
    seed: int = 0


def _flatten(docs: Sequence[EncodedDocument]) -> tuple[np.ndarray, np.ndarray]:
    words = np.concatenate([d.expand() for d in docs]).astype(np.int64)
    doc_of = np.repeat(np.arange(len(docs), dtype=np.int64), [d.n_tokens for d in docs])
    return words, doc_of


def init_state(train: Sequence[EncodedDocument], K: int, vocab_size: int, rng: np.random.Generator) -> GibbsState:
    words, doc_of = _flatten(train)
    z = rng.integers(0, K, size=words.shape[0]).astype(np.int64)
    ndk = np.zeros((len(train), K), dtype=np.int64)
    np.add.at(ndk, (doc_of, z), 1)
    nkw = np.zeros((K, vocab_size), dtype=np.int64)
    np.add.at(nkw, (z, words), 1)
    return GibbsState(z, words, doc_of, ndk, nkw, nkw.sum(axis=1))


def fit_lda(
    train: Sequence[EncodedDocument],
    hyper: LdaHyperParams,
    vocab_size: int | None = None,
    tokens: Sequence[str] | None = None,
    debug: bool = False,
) -> LdaModel:
    """Fit topic-word distributions with ``hyper.passes`` full Gibbs sweeps.

    Parameters
    ----------
    train : sequence of EncodedDocument
        Training documents.
    hyper : LdaHyperParams
        Topic count, symmetric priors, sweep count and seed.
    vocab_size : int, optional
        V. Defaults to ``len(tokens)`` or one past the largest token id seen.
    tokens : sequence of str, optional
        Vocabulary strings, kept on the model for :func:`top_words`.
    debug : bool
        Verify count-table consistency after every sweep.

    Returns
    -------
    LdaModel
        ``phi[k, w] = (n_kw + beta) / (n_k + V beta)`` from the final state.
    """
    if len(train) == 0:
        raise TopicModelError("training set is empty")
    max_id = max(int(d.token_ids.max()) for d in train)
    if vocab_size is None:
        vocab_size = len(tokens) if tokens is not None else max_id + 1
    if max_id >= vocab_size:
        raise TopicModelError(f"token id {max_id} out of range for V={vocab_size}")
    if tokens is not None and len(tokens) != vocab_size:
        raise TopicModelError("tokens length does not match vocab_size")

    rng = np.random.default_rng(hyper.seed)
    state = init_state(train, hyper.K, vocab_size, rng)
    for _ in range(hyper.passes):
        u = rng.random(state.words.shape[0])
        kernels.gibbs_sweep(state.words, state.doc_of, state.z, state.ndk, state.nkw, state.nk, float(hyper.alpha), float(hyper.beta), u)
        if debug:
            state.check()
    phi = (state.nkw + hyper.beta) / (state.nk[:, None] + vocab_size * hyper.beta)
    return LdaModel(phi, hyper, vocab_size, len(train), tuple(tokens) if tokens is not None else None)


def doc_seed(seed: int, doc_id: str) -> int:
    """Per-document seed: the base seed xor a stable hash of the id."""
    return (int(seed) ^ zlib.crc32(doc_id.encode("utf-8"))) & 0xFFFFFFFFFFFFFFFF


def _canonical_order(phi: np.ndarray) -> np.ndarray:
    # Sampling walks topics in this order so a relabelled model draws the
    # same chain; rows that compare equal are interchangeable anyway.
    return np.lexsort(phi.T[::-1])


def infer_theta(
    model: LdaModel,
    doc: EncodedDocument,
    burn_in: int = 50,
    samples: int = 50,
    seed: int = 0,
) -> np.ndarray:
    """Topic proportions of ``doc`` by fold-in Gibbs with phi held fixed."""
    if doc.n_tokens < 1:
        raise TopicModelError(f"document {doc.doc_id!r} has no tokens")
    if samples < 1 or burn_in < 0:
        raise TopicModelError("samples must be >= 1 and burn_in >= 0")
    order = _canonical_order(model.phi)
    phi_wk = np.ascontiguousarray(model.phi[order].T)
    words = doc.expand().astype(np.int64)
    rng = np.random.default_rng(doc_seed(seed, doc.doc_id))
    z = rng.integers(0, model.K, size=words.shape[0]).astype(np.int64)
    u = rng.random((burn_in + samples, words.shape[0]))
    theta_c = kernels.foldin_theta(words, phi_wk, float(model.hyper.alpha), z, u, burn_in)
    theta = np.empty_like(theta_c)
    theta[order] = theta_c
    return theta / theta.sum()


def log_perplexity(
    model: LdaModel, docs: Sequence[EncodedDocument], infer_cfg: InferenceConfig | None = None
) -> float:
    """Per-token negative log-likelihood in nats; ``exp`` of it is perplexity."""
    cfg = infer_cfg or InferenceConfig()
    if len(docs) == 0:
        raise TopicModelError("no documents to score")
    total = 0.0
    n_tok = 0
    for doc in docs:
        theta = infer_theta(model, doc, cfg.burn_in, cfg.samples, cfg.seed)
        probs = theta @ model.phi[:, doc.token_ids]
        total += float(np.dot(doc.counts, np.log(probs)))
        n_tok += doc.n_tokens
    if n_tok < 1:
        raise TopicModelError("documents contain no tokens")
    return -total / n_tok


def perplexity(model: LdaModel, docs: Sequence[EncodedDocument], infer_cfg: InferenceConfig | None = None) -> float:
    return float(np.exp(log_perplexity(model, docs, infer_cfg)))


def top_words(model: LdaModel, topic: int, n: int) -> list[tuple[str, float]]:
    """The ``n`` most probable tokens of a topic, ties broken by token."""
    if not 0 <= topic < model.K:
        raise TopicModelError(f"topic {topic} out of range [0, {model.K})")
    if not 1 <= n <= model.vocab_size:
        raise TopicModelError(f"n must be in [1, {model.vocab_size}]")
    names = model.tokens if model.tokens is not None else tuple(str(i) for i in range(model.vocab_size))
    row = model.phi[topic]
    order = sorted(range(model.vocab_size), key=lambda w: (-row[w], names[w]))
    return [(names[w], float(row[w])) for w in order[:n]]


# --------------------------------------------------------------------------
# persistence

_MAGIC = b"TDLDA"
_VERSION = 1
_HEADER = struct.Struct("<5sHqqddqqq")


def save_model(model: LdaModel, path) -> None:
    """Binary layout: header, phi as little-endian float64, then vocab lines."""
    h = model.hyper
    tok_blob = b"" if model.tokens is None else "\n".join(model.tokens).encode("utf-8")
    header = _HEADER.pack(
        _MAGIC, _VERSION, model.K, model.vocab_size, h.alpha, h.beta, h.passes, h.seed, model.train_doc_count
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(model.phi, dtype="<f8").tobytes())
        fh.write(struct.pack("<q", -1 if model.tokens is None else len(tok_blob)))
        fh.write(tok_blob)


def load_model(path) -> LdaModel:
    data = Path(path).read_bytes()
    magic, version, K, V, alpha, beta, passes, seed, n_train = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise TopicModelError(f"{path}: not a topic model file")
    if version != _VERSION:
        raise TopicModelError(f"{path}: unsupported model version {version}")
    off = _HEADER.size
    phi = np.frombuffer(data, dtype="<f8", count=K * V, offset=off).reshape(K, V).astype(np.float64)
    off += 8 * K * V
    (n_blob,) = struct.unpack_from("<q", data, off)
    off += 8
    tokens = None
    if n_blob >= 0:
        blob = data[off : off + n_blob].decode("utf-8")
        tokens = tuple(blob.split("\n")) if V else ()
    hyper = LdaHyperParams(int(K), alpha, beta, int(passes), int(seed))
    return LdaModel(phi, hyper, int(V), int(n_train), tokens)
