"""TF-IDF lexical retriever over a small in-memory corpus."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

_TERM = re.compile(r"[a-z0-9]+")


def terms(text: str) -> list[str]:
    return _TERM.findall(text.lower())


@dataclass
class Corpus:
    documents: list[tuple[str, str]]
    df: Counter = field(init=False)
    _index: dict | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        ids = [d for d, _ in self.documents]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate doc_id in corpus")
        self.df = Counter()
        for _, text in self.documents:
            self.df.update(set(terms(text)))

    def __len__(self) -> int:
        return len(self.documents)

    def text(self, doc_id: str) -> str:
        return self._build()["texts"][doc_id]

    def _build(self) -> dict:
        if self._index is not None:
            return self._index
        # rows sorted by doc_id so a stable sort on score breaks ties by id
        docs = sorted(self.documents)
        vocab = {t: i for i, t in enumerate(sorted(self.df))}
        n = len(docs)
        idf = np.array([np.log((1 + n) / (1 + self.df[t])) + 1.0 for t in sorted(self.df)])
        rows, cols, vals = [], [], []
        for r, (_, text) in enumerate(docs):
            for t, c in Counter(terms(text)).items():
                rows.append(r)
                cols.append(vocab[t])
                vals.append(c * idf[vocab[t]])
        mat = sparse.csr_matrix((vals, (rows, cols)), shape=(n, len(vocab)), dtype=np.float64)
        norms = np.sqrt(np.asarray(mat.multiply(mat).sum(axis=1)).ravel())
        mat = sparse.diags(1.0 / np.where(norms > 0, norms, 1.0)) @ mat
        self._index = {
            "ids": [d for d, _ in docs],
            "texts": dict(docs),
            "vocab": vocab,
            "idf": idf,
            "matrix": mat.tocsr(),
        }
        return self._index

    def _query_matrix(self, queries: list[str]):
        index = self._build()
        vocab, idf = index["vocab"], index["idf"]
        rows, cols, vals = [], [], []
        for r, q in enumerate(queries):
            for t, c in Counter(terms(q)).items():
                if t in vocab:
                    rows.append(r)
                    cols.append(vocab[t])
                    vals.append(c * idf[vocab[t]])
        qm = sparse.csr_matrix((vals, (rows, cols)), shape=(len(queries), len(vocab)), dtype=np.float64)
        norms = np.sqrt(np.asarray(qm.multiply(qm).sum(axis=1)).ravel())
        return sparse.diags(1.0 / np.where(norms > 0, norms, 1.0)) @ qm


def retrieve_topk(corpus: Corpus, query: str, k: int) -> list[str]:
    """Doc ids by descending TF-IDF cosine; ties go to the lower doc_id."""
    return retrieve_topk_many(corpus, [query], k)[0]


def retrieve_topk_many(corpus: Corpus, queries: list[str], k: int, chunk: int = 256) -> list[list[str]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(corpus) == 0:
        raise ValueError("cannot retrieve from an empty corpus")
    index = corpus._build()
    ids = index["ids"]
    k = min(k, len(ids))
    out = []
    for start in range(0, len(queries), chunk):
        qm = corpus._query_matrix(queries[start : start + chunk])
        scores = (qm @ index["matrix"].T).toarray()
        order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
        out.extend([[ids[j] for j in row] for row in order])
    return out
