"""Vocabulary, tf-idf weighting, sparse vectors and cosine similarity.

Weighting follows the classic max-tf / log2 idf scheme:

    tf(t, d) = count(t, d) / max_count(d)
    idf(t)   = log2(n_docs / df(t))
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .textprep import TermSequence
from .utils import ParameterError, RecordParseError


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    index: Mapping[str, int]
    document_frequency: tuple[int, ...]
    n_docs: int

    @classmethod
    def from_frequencies(cls, frequencies: Mapping[str, int], n_docs: int):
        terms = tuple(sorted(frequencies))
        return cls(
            terms=terms,
            index={term: i for i, term in enumerate(terms)},
            document_frequency=tuple(frequencies[t] for t in terms),
            n_docs=n_docs,
        )

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.index


def build_vocabulary(docs: Sequence[TermSequence], min_df: int = 2) -> Vocabulary:
    """Terms appearing in at least `min_df` distinct documents,
    indexed in lexicographic order"""
    if min_df < 1:
        raise ParameterError(f"min_df must be >= 1, got {min_df}")

    df = Counter()
    for doc in docs:
        df.update(set(doc.terms))
    return Vocabulary.from_frequencies(
        {term: count for term, count in df.items() if count >= min_df},
        len(docs),
    )


class SparseVector:
    """Sorted (index, weight) pairs with no stored zeros"""

    __slots__ = ("indices", "weights")

    def __init__(self, indices=(), weights=()):
        indices = np.asarray(indices, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if indices.shape != weights.shape:
            raise ParameterError("indices and weights differ in length")
        if indices.size:
            order = np.argsort(indices, kind="stable")
            indices, weights = indices[order], weights[order]
            if np.any(np.diff(indices) == 0):
                raise ParameterError("duplicate indices in sparse vector")
            keep = weights != 0
            indices, weights = indices[keep], weights[keep]
        self.indices = indices
        self.weights = weights

    @classmethod
    def from_dict(cls, mapping: Mapping[int, float]) -> SparseVector:
        items = sorted(mapping.items())
        return cls([i for i, _ in items], [w for _, w in items])

    def to_dict(self) -> dict[int, float]:
        return dict(zip(self.indices.tolist(), self.weights.tolist()))

    def __len__(self) -> int:
        return int(self.indices.size)

    def __bool__(self) -> bool:
        return bool(self.indices.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return np.array_equal(self.indices, other.indices) and np.array_equal(
            self.weights, other.weights
        )

    def __repr__(self) -> str:
        return f"SparseVector({self.to_dict()!r})"

    @property
    def max_index(self) -> int:
        return int(self.indices[-1]) if self.indices.size else -1

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.weights, self.weights)))

    def dot(self, other: SparseVector) -> float:
        _, mine, theirs = np.intersect1d(
            self.indices, other.indices, assume_unique=True, return_indices=True
        )
        return float(np.dot(self.weights[mine], other.weights[theirs]))

    def scaled(self, alpha: float) -> SparseVector:
        return SparseVector(self.indices, self.weights * alpha)

    def normalized(self) -> SparseVector:
        norm = self.norm()
        return self.scaled(1.0 / norm) if norm > 0 else self

    def dense(self, dim: int) -> np.ndarray:
        out = np.zeros(dim)
        out[self.indices] = self.weights
        return out


def stack_rows(vectors: Sequence[SparseVector], dim: int) -> sp.csr_matrix:
    """Vectors as the rows of a len(vectors) x dim CSR matrix"""
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    np.cumsum([len(v) for v in vectors], out=indptr[1:])
    if vectors:
        indices = np.concatenate([v.indices for v in vectors])
        data = np.concatenate([v.weights for v in vectors])
    else:
        indices, data = np.zeros(0, dtype=np.int64), np.zeros(0)
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


@dataclass(frozen=True)
class TfIdfModel:
    vocab: Vocabulary
    idf: np.ndarray

    @classmethod
    def from_vocabulary(cls, vocab: Vocabulary) -> TfIdfModel:
        if len(vocab):
            idf = np.log2(vocab.n_docs / np.asarray(vocab.document_frequency, float))
        else:
            idf = np.zeros(0)
        # log2(N/N) may come out as -0.0
        return cls(vocab, np.maximum(idf, 0.0))

    @classmethod
    def fit(cls, docs: Sequence[TermSequence], min_df: int = 2) -> TfIdfModel:
        return cls.from_vocabulary(build_vocabulary(docs, min_df))

    def __len__(self) -> int:
        return len(self.vocab)

    def dumps(self) -> str:
        """JSON lines: {"n_docs"} header, then {"term", "df"} per index"""
        lines = [json.dumps({"n_docs": self.vocab.n_docs})]
        lines.extend(
            json.dumps({"term": term, "df": df}, ensure_ascii=False)
            for term, df in zip(self.vocab.terms, self.vocab.document_frequency)
        )
        return "".join(f"{line}\n" for line in lines)

    @classmethod
    def loads(cls, text: str) -> TfIdfModel:
        try:
            header, *records = [json.loads(line) for line in text.splitlines()]
            frequencies = {rec["term"]: int(rec["df"]) for rec in records}
            n_docs = int(header["n_docs"])
        except (ValueError, KeyError, TypeError) as e:
            raise RecordParseError(f"malformed tf-idf model: {e}") from None
        return cls.from_vocabulary(Vocabulary.from_frequencies(frequencies, n_docs))


def tfidf_vector(doc: TermSequence | Iterable[str], model: TfIdfModel) -> SparseVector:
    terms = doc.terms if isinstance(doc, TermSequence) else tuple(doc)
    counts = Counter(terms)
    if not counts:
        return SparseVector()

    max_count = max(counts.values())
    index = model.vocab.index
    weights = {}
    for term, count in counts.items():
        i = index.get(term)
        if i is not None:
            weights[i] = count / max_count * model.idf[i]
    return SparseVector.from_dict(weights)


def cosine(a: SparseVector, b: SparseVector) -> float:
    na, nb = a.norm(), b.norm()
    if na == 0 or nb == 0:
        return 0.0
    # clip rounding noise so cosine(v, v) stays within [0, 1]
    return min(1.0, max(0.0, a.dot(b) / (na * nb)))


def term_document_matrix(
    docs: Sequence[TermSequence], model: TfIdfModel
) -> sp.csc_matrix:
    """|V| x n_docs matrix of unit-length tf-idf columns (zero columns kept)"""
    columns = [tfidf_vector(doc, model).normalized() for doc in docs]
    return stack_rows(columns, len(model)).T.tocsc()


def idf_value(n_docs: int, df: int) -> float:
    return max(0.0, math.log2(n_docs / df))
