"""Text models used by the strategies.

* ``Vectorizer``: TF-IDF with smoothed idf and L2-normalised rows.
* ``LinearModel``: one-vs-rest linear max-margin classifier trained with
  Pegasos stochastic sub-gradient steps.
* ``TopicModel``: LDA fitted by collapsed Gibbs sampling, plus fixing-cost
  tables per topic and per (developer, topic).

All training is seeded and deterministic.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numba
import numpy as np

from .errors import DataError, EmptyCorpus
from .model import BugRecord

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
COST_FLOOR = 0.5  # days
FOLD_IN_ITERS = 50

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop 1-char tokens and pure numbers."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 2 and not t.isdigit()]


# --- TF-IDF -----------------------------------------------------------------

@dataclass(frozen=True)
class Vectorizer:
    vocabulary: dict[str, int]
    document_frequency: tuple[int, ...]
    corpus_size: int

    @property
    def size(self) -> int:
        return len(self.vocabulary)

    @property
    def idf(self) -> np.ndarray:
        df = np.asarray(self.document_frequency, dtype=float)
        return np.log((1.0 + self.corpus_size) / (1.0 + df)) + 1.0


def fit_vectorizer(corpus: Sequence[str]) -> Vectorizer:
    if not corpus:
        raise EmptyCorpus("cannot fit a vectorizer on an empty corpus")
    df: dict[str, int] = defaultdict(int)
    for doc in corpus:
        for tok in set(tokenize(doc)):
            df[tok] += 1
    vocab = {tok: i for i, tok in enumerate(sorted(df))}
    return Vectorizer(vocabulary=vocab, document_frequency=tuple(df[t] for t in sorted(df)), corpus_size=len(corpus))


def transform(v: Vectorizer, text: str) -> dict[int, float]:
    """Sparse TF-IDF vector of ``text``; tokens outside the vocabulary are ignored."""
    counts: dict[int, int] = defaultdict(int)
    for tok in tokenize(text):
        idx = v.vocabulary.get(tok)
        if idx is not None:
            counts[idx] += 1
    if not counts:
        return {}
    idf = v.idf
    weights = {i: c * idf[i] for i, c in counts.items()}
    norm = math.sqrt(sum(w * w for w in weights.values()))
    return {i: w / norm for i, w in sorted(weights.items())}


def transform_dense(v: Vectorizer, texts: Sequence[str]) -> np.ndarray:
    out = np.zeros((len(texts), v.size))
    for row, text in enumerate(texts):
        for i, w in transform(v, text).items():
            out[row, i] = w
    return out


# --- linear classifier ------------------------------------------------------

@dataclass(frozen=True)
class LinearModel:
    """Per-class weights; the last column of ``weights`` is the bias."""

    classes: tuple
    weights: np.ndarray

    @property
    def dim(self) -> int:
        return self.weights.shape[1] - 1

    def scores(self, x: np.ndarray | Mapping[int, float]) -> np.ndarray:
        w = self.weights
        if isinstance(x, Mapping):
            s = w[:, -1].copy()
            for i, xi in x.items():
                s += w[:, i] * xi
            return s
        return w[:, :-1] @ np.asarray(x, dtype=float) + w[:, -1]


def train_classifier(
    X: np.ndarray,
    y: Sequence,
    epochs: int = 20,
    lam: float = 1e-4,
    seed: int = 0,
) -> LinearModel:
    """One-vs-rest hinge-loss training with Pegasos steps ``1 / (lam * t)``.

    The bias is folded in as a constant feature. All classes share the same
    seeded visiting order.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n != len(y):
        raise DataError("X and y disagree in length")
    classes = tuple(sorted(set(y)))
    if len(classes) < 2:
        logger.warning("single class %r: training a constant predictor", classes)
        return LinearModel(classes=classes, weights=np.zeros((len(classes), X.shape[1] + 1)))
    Xa = np.hstack([X, np.ones((n, 1))])
    index = {c: k for k, c in enumerate(classes)}
    Y = -np.ones((len(classes), n))
    for i, label in enumerate(y):
        Y[index[label], i] = 1.0
    W = np.zeros((len(classes), Xa.shape[1]))
    radius = 1.0 / math.sqrt(lam)
    rng = np.random.default_rng(seed)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            x = Xa[i]
            violated = Y[:, i] * (W @ x) < 1.0
            W *= 1.0 - 1.0 / t
            if violated.any():
                W[violated] += eta * Y[violated, i][:, None] * x[None, :]
            norms = np.linalg.norm(W, axis=1)
            over = norms > radius
            if over.any():
                W[over] *= (radius / norms[over])[:, None]
    return LinearModel(classes=classes, weights=W)


def predict_score(m: LinearModel, x) -> dict:
    return dict(zip(m.classes, (float(s) for s in m.scores(x))))


def predict(m: LinearModel, x):
    """Class with the largest score; ties go to the lowest class index."""
    return m.classes[int(np.argmax(m.scores(x)))]


# --- LDA --------------------------------------------------------------------

@numba.njit(cache=True)
def _gibbs_sweep(words, docs, z, ndk, nkw, nk, uniforms, alpha, beta, vbeta):
    K = nk.shape[0]
    p = np.empty(K)
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        k = z[i]
        ndk[d, k] -= 1
        nkw[k, w] -= 1
        nk[k] -= 1
        total = 0.0
        for j in range(K):
            total += (ndk[d, j] + alpha) * (nkw[j, w] + beta) / (nk[j] + vbeta)
            p[j] = total
        u = uniforms[i] * total
        k = 0
        while k < K - 1 and p[k] <= u:
            k += 1
        z[i] = k
        ndk[d, k] += 1
        nkw[k, w] += 1
        nk[k] += 1


@numba.njit(cache=True)
def _fold_in_sweep(words, z, nk_doc, phi, uniforms, alpha):
    K = nk_doc.shape[0]
    p = np.empty(K)
    for i in range(words.shape[0]):
        w = words[i]
        k = z[i]
        nk_doc[k] -= 1
        total = 0.0
        for j in range(K):
            total += (nk_doc[j] + alpha) * phi[j, w]
            p[j] = total
        u = uniforms[i] * total
        k = 0
        while k < K - 1 and p[k] <= u:
            k += 1
        z[i] = k
        nk_doc[k] += 1


@dataclass(frozen=True)
class TopicModel:
    vocabulary: dict[str, int]
    topic_word: np.ndarray  # K x V, rows sum to one
    alpha: float
    beta: float
    seed: int
    assignments: np.ndarray  # final topic of every training token
    doc_topic_counts: np.ndarray  # D x K
    topic_cost: dict[int, float] = field(default_factory=dict)
    developer_topic_cost: dict[tuple[str, int], float] = field(default_factory=dict)
    developer_cost: dict[str, float] = field(default_factory=dict)
    corpus_cost: float = 1.0

    @property
    def n_topics(self) -> int:
        return self.topic_word.shape[0]

    def doc_topics(self) -> np.ndarray:
        """Dominant topic of every training document."""
        return np.argmax(self.doc_topic_counts, axis=1)


def fit_lda(
    corpus: Sequence[str],
    n_topics: int = 20,
    alpha: float | None = None,
    beta: float = 0.01,
    iters: int = 500,
    seed: int = 0,
) -> TopicModel:
    """Collapsed Gibbs sampling; ``alpha`` defaults to 50 / n_topics."""
    if n_topics < 1:
        raise DataError("n_topics must be at least 1")
    if not corpus:
        raise EmptyCorpus("cannot fit LDA on an empty corpus")
    alpha = 50.0 / n_topics if alpha is None else alpha
    tokenized = [tokenize(doc) for doc in corpus]
    vocab = {tok: i for i, tok in enumerate(sorted({t for doc in tokenized for t in doc}))}
    if not vocab:
        raise EmptyCorpus("corpus has no usable tokens")
    words = np.array([vocab[t] for doc in tokenized for t in doc], dtype=np.int64)
    docs = np.array([d for d, doc in enumerate(tokenized) for _ in doc], dtype=np.int64)
    V, D, K = len(vocab), len(corpus), n_topics

    rng = np.random.default_rng(seed)
    z = rng.integers(0, K, size=words.shape[0]).astype(np.int64)
    ndk = np.zeros((D, K), dtype=np.int64)
    nkw = np.zeros((K, V), dtype=np.int64)
    nk = np.zeros(K, dtype=np.int64)
    np.add.at(ndk, (docs, z), 1)
    np.add.at(nkw, (z, words), 1)
    np.add.at(nk, z, 1)
    for _ in range(iters):
        _gibbs_sweep(words, docs, z, ndk, nkw, nk, rng.random(words.shape[0]), alpha, beta, V * beta)

    phi = (nkw + beta) / (nk[:, None] + V * beta)
    return TopicModel(
        vocabulary=vocab, topic_word=phi, alpha=alpha, beta=beta, seed=seed,
        assignments=z, doc_topic_counts=ndk,
    )


def dominant_topic(tm: TopicModel, text: str) -> int | None:
    """Most frequent topic after folding ``text`` in against the fixed topics.

    Returns None when no token of ``text`` is in the model vocabulary. The
    sampler is reseeded on every call, so the answer depends on the text only.
    """
    words = np.array([tm.vocabulary[t] for t in tokenize(text) if t in tm.vocabulary], dtype=np.int64)
    if words.size == 0:
        return None
    K = tm.n_topics
    if K == 1:
        return 0
    rng = np.random.default_rng(tm.seed)
    z = rng.integers(0, K, size=words.shape[0]).astype(np.int64)
    nk_doc = np.bincount(z, minlength=K).astype(np.int64)
    for _ in range(FOLD_IN_ITERS):
        _fold_in_sweep(words, z, nk_doc, tm.topic_word, rng.random(words.shape[0]), tm.alpha)
    return int(np.argmax(nk_doc))


def fit_costs(tm: TopicModel, bugs: Iterable[BugRecord]) -> TopicModel:
    """Attach mean fixing-cost tables learnt from resolved, assigned bugs."""
    per_topic: dict[int, list[int]] = defaultdict(list)
    per_dev_topic: dict[tuple[str, int], list[int]] = defaultdict(list)
    per_dev: dict[str, list[int]] = defaultdict(list)
    everything: list[int] = []
    for bug in sorted(bugs, key=lambda b: b.id):
        days = bug.fixing_days()
        if days is None:
            continue
        everything.append(days)
        topic = dominant_topic(tm, bug.text)
        if topic is not None:
            per_topic[topic].append(days)
        if bug.assignee:
            per_dev[bug.assignee].append(days)
            if topic is not None:
                per_dev_topic[(bug.assignee, topic)].append(days)
    return replace(
        tm,
        topic_cost={k: _avg(v) for k, v in sorted(per_topic.items())},
        developer_topic_cost={k: _avg(v) for k, v in sorted(per_dev_topic.items())},
        developer_cost={k: _avg(v) for k, v in sorted(per_dev.items())},
        corpus_cost=_avg(everything) if everything else 1.0,
    )


def _avg(values: list[int]) -> float:
    return sum(values) / len(values)


def estimate_cost(tm: TopicModel, topic: int | None, developer: str | None = None) -> float:
    """Fixing cost in days, falling back (dev, topic) -> dev -> topic -> corpus."""
    if developer is not None:
        if topic is not None and (developer, topic) in tm.developer_topic_cost:
            return max(COST_FLOOR, tm.developer_topic_cost[(developer, topic)])
        if developer in tm.developer_cost:
            return max(COST_FLOOR, tm.developer_cost[developer])
    if topic is not None and topic in tm.topic_cost:
        return max(COST_FLOOR, tm.topic_cost[topic])
    return max(COST_FLOOR, tm.corpus_cost)


def gaussian_cost(median: float, sigma: float, seed: int | np.random.Generator | None = None) -> float:
    """Draw a fixing time from N(median, sigma^2), clamped below at half a day."""
    if sigma == 0:
        return max(COST_FLOOR, float(median))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return max(COST_FLOOR, float(rng.normal(median, sigma)))


# --- persistence ------------------------------------------------------------

def model_to_json(model: Vectorizer | LinearModel | TopicModel) -> dict:
    if isinstance(model, Vectorizer):
        return {
            "type": "vectorizer", "version": MODEL_FORMAT_VERSION,
            "vocabulary": model.vocabulary, "document_frequency": list(model.document_frequency),
            "corpus_size": model.corpus_size,
        }
    if isinstance(model, LinearModel):
        return {
            "type": "linear", "version": MODEL_FORMAT_VERSION,
            "classes": list(model.classes), "weights": model.weights.tolist(),
        }
    if isinstance(model, TopicModel):
        return {
            "type": "topics", "version": MODEL_FORMAT_VERSION,
            "vocabulary": model.vocabulary, "topic_word": model.topic_word.tolist(),
            "alpha": model.alpha, "beta": model.beta, "seed": model.seed,
            "assignments": model.assignments.tolist(), "doc_topic_counts": model.doc_topic_counts.tolist(),
            "topic_cost": {str(k): v for k, v in model.topic_cost.items()},
            "developer_topic_cost": [[d, k, v] for (d, k), v in model.developer_topic_cost.items()],
            "developer_cost": model.developer_cost, "corpus_cost": model.corpus_cost,
        }
    raise TypeError(f"cannot serialise {type(model).__name__}")


def model_from_json(obj: Mapping) -> Vectorizer | LinearModel | TopicModel:
    if obj.get("version") != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model format version {obj.get('version')!r}")
    kind = obj.get("type")
    if kind == "vectorizer":
        return Vectorizer(dict(obj["vocabulary"]), tuple(obj["document_frequency"]), int(obj["corpus_size"]))
    if kind == "linear":
        return LinearModel(tuple(obj["classes"]), np.asarray(obj["weights"], dtype=float))
    if kind == "topics":
        return TopicModel(
            vocabulary=dict(obj["vocabulary"]),
            topic_word=np.asarray(obj["topic_word"], dtype=float),
            alpha=float(obj["alpha"]), beta=float(obj["beta"]), seed=int(obj["seed"]),
            assignments=np.asarray(obj["assignments"], dtype=np.int64),
            doc_topic_counts=np.asarray(obj["doc_topic_counts"], dtype=np.int64),
            topic_cost={int(k): float(v) for k, v in obj["topic_cost"].items()},
            developer_topic_cost={(d, int(k)): float(v) for d, k, v in obj["developer_topic_cost"]},
            developer_cost={k: float(v) for k, v in obj["developer_cost"].items()},
            corpus_cost=float(obj["corpus_cost"]),
        )
    raise DataError(f"unknown model type {kind!r}")


def save_model(path: str | Path, model) -> None:
    Path(path).write_text(json.dumps(model_to_json(model)), encoding="utf-8")


def load_model(path: str | Path):
    return model_from_json(json.loads(Path(path).read_text(encoding="utf-8")))
