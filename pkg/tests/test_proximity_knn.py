import math

import numpy as np
import pytest

from cascade_titles.corpus import Document, DocumentSet
from cascade_titles.proximity_knn import (
    MetaDocument,
    ProximityIndex,
    build_index,
    build_query,
    classify_knn,
    index_meta_documents,
)
from cascade_titles.textprep import TermSequence
from cascade_titles.title_cluster import Cluster, ClusterLabel, ClusterSet
from cascade_titles.utils import (
    DegenerateInputError,
    ParameterError,
    ValidationError,
)
from cascade_titles.vectorspace import SparseVector


def cluster(phrase, *members):
    return Cluster(
        ClusterLabel(phrase, SparseVector([0], [1.0]), 0),
        members,
        tuple(1.0 for _ in members),
    )


def terms(*words):
    return TermSequence(tuple(words))


@pytest.fixture
def two_topics():
    return index_meta_documents(
        [
            MetaDocument("java", {"java": 1}),
            MetaDocument("developer", {"developer": 1}),
        ]
    )


def test_build_index_sums_member_titles():
    docs = DocumentSet.from_documents(
        [Document("a", "Java Developer"), Document("b", "java engineer")]
    )
    index = build_index(ClusterSet((cluster("java", "a", "b"),)), docs)
    assert index.meta_docs[0].term_counts == {
        "java": 2,
        "developer": 1,
        "engineer": 1,
        "java developer": 1,
        "java engineer": 1,
    }
    # a single meta-document carries no discriminating weight
    assert all(value == 0.0 for value in index.idf.values())


def test_build_index_postings():
    docs = DocumentSet.from_documents(
        [Document("a", "nurse"), Document("b", "clerk"), Document("c", "nurse")]
    )
    clusters = ClusterSet((cluster("nurse", "a", "c"), cluster("clerk", "b")))
    index = build_index(clusters, docs)
    assert index.postings == {"clerk": ((1, 1),), "nurse": ((0, 2),)}
    assert index.doc_frequency == {"clerk": 1, "nurse": 1}
    assert index.idf == {"clerk": 1.0, "nurse": 1.0}
    assert index.labels == ["nurse", "clerk"]


def test_shared_term_has_zero_idf():
    index = index_meta_documents(
        [MetaDocument("a", {"x": 1, "y": 1}), MetaDocument("b", {"x": 2})]
    )
    assert index.idf["x"] == 0.0
    assert index.idf["y"] == 1.0
    assert index.meta_vector(1) == {}


def test_build_index_errors():
    docs = DocumentSet.from_documents([Document("a", "nurse")])
    with pytest.raises(DegenerateInputError):
        build_index(ClusterSet(), docs)
    with pytest.raises(ValidationError):
        build_index(ClusterSet((cluster("nurse", "missing"),)), docs)


def test_build_query(two_topics):
    query = build_query(
        terms("java", "java", "java", "developer", "developer", "of"),
        two_topics,
        min_tf=2,
    )
    assert query.terms == (("developer", 2.0), ("java", 3.0))
    assert not build_query(terms("java", "developer"), two_topics, min_tf=2)
    assert build_query(terms("java"), two_topics).terms == (("java", 1.0),)
    with pytest.raises(ParameterError):
        build_query(terms("java"), two_topics, min_tf=0)


def test_classify_knn(two_topics):
    assert classify_knn(two_topics, terms("java"), k=5) == [("java", 1.0)]
    assert classify_knn(two_topics, terms("nurse")) == []
    ranked = classify_knn(two_topics, terms("java", "java", "developer"))
    assert [label for label, _ in ranked] == ["java", "developer"]
    assert ranked[0][1] == pytest.approx(2 / math.sqrt(5))
    with pytest.raises(ParameterError):
        classify_knn(two_topics, terms("java"), k=0)


def test_classify_knn_ties_by_label():
    index = index_meta_documents(
        [
            MetaDocument("b", {"x": 1}),
            MetaDocument("a", {"x": 1}),
            MetaDocument("c", {"y": 1}),
        ]
    )
    assert classify_knn(index, terms("x"), k=1) == [("a", 1.0)]
    assert classify_knn(index, terms("x")) == [("a", 1.0), ("b", 1.0)]


def brute_force(index, query_seq, k, min_tf):
    vocab = sorted(index.postings)
    position = {t: i for i, t in enumerate(vocab)}
    counts = {}
    for term in query_seq.terms:
        counts[term] = counts.get(term, 0) + 1
    q = np.zeros(len(vocab))
    for term, count in counts.items():
        if term in position and count >= min_tf:
            q[position[term]] = count * index.idf[term]

    scored = []
    for meta in index.meta_docs:
        m = np.zeros(len(vocab))
        for term, count in meta.term_counts.items():
            m[position[term]] = count * index.idf[term]
        denominator = np.linalg.norm(q) * np.linalg.norm(m)
        score = float(q @ m / denominator) if denominator > 0 else 0.0
        if score > 0:
            scored.append((round(score, 12), meta.label))
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [(label, score) for score, label in scored[:k]]


def test_classify_knn_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(30):
        words = [f"w{i}" for i in range(int(rng.integers(5, 200)))]
        metas = []
        for m in range(int(rng.integers(1, 50))):
            if metas and rng.random() < 0.1:
                metas.append(MetaDocument(f"label{m:03d}", dict(metas[-1].term_counts)))
                continue
            chosen = rng.choice(words, int(rng.integers(1, 6)), replace=False)
            metas.append(
                MetaDocument(
                    f"label{m:03d}", {str(t): int(rng.integers(1, 4)) for t in chosen}
                )
            )
        index = index_meta_documents(metas)
        for _ in range(5):
            query = terms(*(str(t) for t in rng.choice(words, 6)))
            k = int(rng.integers(1, 8))
            min_tf = int(rng.integers(1, 3))
            got = classify_knn(index, query, k=k, min_tf=min_tf)
            expected = brute_force(index, query, k, min_tf)
            assert [label for label, _ in got] == [label for label, _ in expected]
            for (_, score), (_, oracle) in zip(got, expected):
                assert score == pytest.approx(oracle, abs=1e-9)
            scores = [score for _, score in got]
            assert all(0 < s <= 1 for s in scores)
            assert scores == sorted(scores, reverse=True)


def test_frozen_idf_ignores_new_meta_documents(two_topics):
    grown = index_meta_documents(
        [*two_topics.meta_docs, MetaDocument("nurse", {"nurse": 3})],
        idf=two_topics.idf,
    )
    query = terms("java", "developer", "developer")
    assert classify_knn(grown, query) == classify_knn(two_topics, query)
    assert grown.idf["nurse"] == 0.0


async def test_index_save_load(workdir, two_topics):
    await two_topics.save(workdir / "index")
    loaded = await ProximityIndex.load(workdir / "index")
    assert loaded.labels == two_topics.labels
    assert loaded.idf == two_topics.idf
    query = terms("java", "developer")
    assert classify_knn(loaded, query) == classify_knn(two_topics, query)
