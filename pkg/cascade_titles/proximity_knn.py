"""k-NN over cluster meta-documents, served from an inverted index.

Each cluster is collapsed into one meta-document holding the summed title
term counts of its members. A query is the tf x idf weighted terms of the
incoming posting; meta-documents are ranked by cosine similarity of raw
tf x idf vectors.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from panpath import PanPath

from .corpus import Document, DocumentSet
from .textprep import TermSequence, TextPipeline
from .title_cluster import ClusterSet
from .utils import (
    DegenerateInputError,
    ParameterError,
    RecordParseError,
    ValidationError,
)
from .vectorspace import idf_value

# scores are compared at this precision so that float summation order
# never reorders equal scores
SCORE_DIGITS = 12


@dataclass(frozen=True)
class MetaDocument:
    label: str
    term_counts: Mapping[str, int]


@dataclass(frozen=True)
class Query:
    terms: tuple[tuple[str, float], ...] = ()

    def __len__(self) -> int:
        return len(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)


@dataclass(frozen=True)
class ProximityIndex:
    meta_docs: tuple[MetaDocument, ...]
    postings: Mapping[str, tuple[tuple[int, int], ...]]
    doc_frequency: Mapping[str, int]
    idf: Mapping[str, float]
    norms: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.meta_docs)

    @property
    def labels(self) -> list[str]:
        return [meta.label for meta in self.meta_docs]

    def meta_vector(self, meta_id: int) -> dict[str, float]:
        """Raw tf x idf weights of a meta-document"""
        return {
            term: count * self.idf[term]
            for term, count in self.meta_docs[meta_id].term_counts.items()
            if self.idf[term] > 0
        }

    def dump(self) -> dict[str, str]:
        meta = "".join(
            json.dumps(
                {
                    "id": i,
                    "label": m.label,
                    "term_counts": dict(sorted(m.term_counts.items())),
                },
                ensure_ascii=False,
            )
            + "\n"
            for i, m in enumerate(self.meta_docs)
        )
        postings = "".join(
            json.dumps(
                {
                    "term": term,
                    "df": self.doc_frequency[term],
                    "idf": self.idf[term],
                    "postings": [list(p) for p in self.postings[term]],
                },
                ensure_ascii=False,
            )
            + "\n"
            for term in sorted(self.postings)
        )
        return {"meta_docs.jsonl": meta, "postings.jsonl": postings}

    async def save(self, directory: str | PanPath) -> None:
        directory = PanPath(directory)
        await directory.a_mkdir(parents=True, exist_ok=True)
        for name, text in self.dump().items():
            await directory.joinpath(name).a_write_text(text)

    @classmethod
    def loads(cls, texts: Mapping[str, str]) -> ProximityIndex:
        """Rebuild from dumped files; the stored idf table is kept frozen"""
        try:
            meta_docs = []
            for line in texts["meta_docs.jsonl"].splitlines():
                record = json.loads(line)
                meta_docs.append(
                    MetaDocument(
                        record["label"],
                        {t: int(c) for t, c in record["term_counts"].items()},
                    )
                )
            idf = {}
            for line in texts["postings.jsonl"].splitlines():
                record = json.loads(line)
                idf[record["term"]] = float(record["idf"])
        except (ValueError, KeyError, TypeError) as e:
            raise RecordParseError(f"malformed proximity index: {e}") from None
        return index_meta_documents(meta_docs, idf=idf)

    @classmethod
    async def load(cls, directory: str | PanPath) -> ProximityIndex:
        directory = PanPath(directory)
        texts = {}
        for name in ("meta_docs.jsonl", "postings.jsonl"):
            texts[name] = await directory.joinpath(name).a_read_text()
        return cls.loads(texts)


def index_meta_documents(
    meta_docs: Sequence[MetaDocument],
    idf: Mapping[str, float] | None = None,
) -> ProximityIndex:
    """Postings, document frequencies and norms over meta-documents.

    With `idf` given, that table is used as is (terms missing from it
    weigh 0) instead of being derived from `meta_docs`.
    """
    postings: dict[str, list[tuple[int, int]]] = {}
    for meta_id, meta in enumerate(meta_docs):
        for term, count in sorted(meta.term_counts.items()):
            postings.setdefault(term, []).append((meta_id, count))

    doc_frequency = {term: len(plist) for term, plist in postings.items()}
    if idf is None:
        idf = {
            term: idf_value(len(meta_docs), df) for term, df in doc_frequency.items()
        }
    else:
        idf = {term: float(idf.get(term, 0.0)) for term in postings}

    norms = tuple(
        math.sqrt(
            sum((count * idf[term]) ** 2 for term, count in meta.term_counts.items())
        )
        for meta in meta_docs
    )
    return ProximityIndex(
        meta_docs=tuple(meta_docs),
        postings={term: tuple(plist) for term, plist in sorted(postings.items())},
        doc_frequency=doc_frequency,
        idf=idf,
        norms=norms,
    )


def build_index(
    clusters: ClusterSet,
    docs: DocumentSet,
    pipeline: TextPipeline | None = None,
) -> ProximityIndex:
    """One meta-document per cluster from its members' title terms

    Raises:
        DegenerateInputError: for a ClusterSet without clusters
        ValidationError: when a member id is not in `docs`
    """
    if not len(clusters):
        raise DegenerateInputError("cannot index an empty cluster set")

    pipeline = pipeline or TextPipeline()
    by_id = docs.by_id
    cache: dict[str, Counter] = {}
    meta_docs = []
    for cluster in clusters.clusters:
        counts = Counter()
        for member in cluster.member_ids:
            if member not in by_id:
                raise ValidationError(
                    f"cluster {cluster.label.phrase!r} member {member!r} "
                    "is not in the document set"
                )
            if member not in cache:
                cache[member] = Counter(pipeline.terms(by_id[member].title).terms)
            counts.update(cache[member])
        meta_docs.append(MetaDocument(cluster.label.phrase, dict(counts)))
    return index_meta_documents(meta_docs)


def query_terms(doc: Document | TermSequence, pipeline: TextPipeline) -> TermSequence:
    if isinstance(doc, TermSequence):
        return doc
    return pipeline.terms(doc.title, doc.id)


def build_query(
    doc: Document | TermSequence,
    index: ProximityIndex,
    min_tf: int = 1,
    pipeline: TextPipeline | None = None,
) -> Query:
    """Indexed terms seen at least `min_tf` times, weighted tf x idf"""
    if min_tf < 1:
        raise ParameterError(f"min_tf must be >= 1, got {min_tf}")

    counts = Counter(query_terms(doc, pipeline or TextPipeline()).terms)
    terms = []
    for term, count in sorted(counts.items()):
        if count < min_tf or term not in index.idf:
            continue
        weight = count * index.idf[term]
        if weight > 0:
            terms.append((term, weight))
    return Query(tuple(terms))


def rank(scores: Mapping[int, float], labels: Sequence[str], k: int):
    """Top k (label, score) by descending score, ties by label"""
    ordered = sorted(
        ((round(score, SCORE_DIGITS), labels[m]) for m, score in scores.items()),
        key=lambda pair: (-pair[0], pair[1]),
    )
    return [(label, score) for score, label in ordered[:k]]


def score_query(query: Query, index: ProximityIndex) -> dict[int, float]:
    """Cosine of the query against every meta-document it touches"""
    if not query:
        return {}

    dots: dict[int, float] = {}
    for term, weight in query.terms:
        idf = index.idf[term]
        for meta_id, count in index.postings[term]:
            dots[meta_id] = dots.get(meta_id, 0.0) + weight * count * idf

    query_norm = math.sqrt(sum(w * w for _, w in query.terms))
    return {
        meta_id: min(1.0, dot / (query_norm * index.norms[meta_id]))
        for meta_id, dot in dots.items()
        if dot > 0
    }


def classify_knn(
    index: ProximityIndex,
    doc: Document | TermSequence,
    k: int = 5,
    min_tf: int = 1,
    pipeline: TextPipeline | None = None,
) -> list[tuple[str, float]]:
    """Ranked (label, score) of the k most similar meta-documents.

    An empty list is a no-match (abstention), not an error.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    query = build_query(doc, index, min_tf, pipeline)
    return rank(score_query(query, index), index.labels, k)
