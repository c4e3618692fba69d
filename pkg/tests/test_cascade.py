import json
import logging
import statistics
import time

import numpy as np
import pytest

from cascade_titles.cascade import (
    CascadeModel,
    ProximityModel,
    Vertical,
    balance_undersample,
    gold_group,
    load_model,
    resolve_group,
    train_cascade,
    train_flat,
)
from cascade_titles.config import Settings
from cascade_titles.corpus import Document, DocumentSet, parse_soc_code
from cascade_titles.linear_svm import LinearModel
from cascade_titles.proximity_knn import (
    MetaDocument,
    classify_knn,
    index_meta_documents,
)
from cascade_titles.textprep import TextPipeline
from cascade_titles.title_cluster import ClusterSet
from cascade_titles.utils import (
    DegenerateInputError,
    ModelIntegrityError,
    ParameterError,
)
from cascade_titles.vectorspace import TfIdfModel, Vocabulary

from .conftest import make_documents

HEALTHCARE = {"healthcare": (29, 31)}


@pytest.fixture(scope="module")
def corpus():
    return DocumentSet.from_documents(make_documents())


@pytest.fixture(scope="module")
def model(corpus):
    return train_cascade(corpus)


def test_resolve_group():
    assert resolve_group(29, HEALTHCARE) == "healthcare"
    assert resolve_group(31, HEALTHCARE) == "healthcare"
    assert resolve_group(15, HEALTHCARE) == "15"
    assert resolve_group(29, {}) == "29"
    assert gold_group(Document("a", "x"), HEALTHCARE) is None


def test_balance_undersample_exact():
    rng = np.random.default_rng(0)
    for trial in range(50):
        docs = []
        for major in (15, 29, 31, 43):
            for j in range(int(rng.integers(0, 20))):
                docs.append(
                    Document(
                        f"{major}-{j}",
                        "title",
                        gold_soc=parse_soc_code(f"{major}-1011.00"),
                    )
                )
        docs.append(Document("unlabeled", "title"))
        order = rng.permutation(len(docs))
        data = DocumentSet.from_documents(docs[i] for i in order)
        base = int(rng.integers(1, 15))

        balanced = balance_undersample(data, base, seed=trial, aliases=HEALTHCARE)
        for group in ("15", "healthcare", "43"):
            size = sum(1 for d in data if gold_group(d, HEALTHCARE) == group)
            got = sum(1 for d in balanced if gold_group(d, HEALTHCARE) == group)
            assert got == min(size, base)

        position = {doc.id: i for i, doc in enumerate(data)}
        kept = [position[doc.id] for doc in balanced]
        assert kept == sorted(kept)
        assert "unlabeled" not in balanced.by_id
        again = balance_undersample(data, base, seed=trial, aliases=HEALTHCARE)
        assert again == balanced


def test_balance_undersample_errors(corpus):
    with pytest.raises(ParameterError):
        balance_undersample(corpus, 0)
    with pytest.raises(DegenerateInputError):
        balance_undersample(DocumentSet.from_documents([Document("a", "x")]), 10)


def test_train_cascade_groups(model):
    assert model.groups == ("15", "healthcare")
    assert model.coarse.classes == (0, 1)
    assert sorted(model.verticals) == ["15", "healthcare"]
    assert sorted(model.verticals["15"].clusters.labels) == [
        "administrator",
        "architect",
        "developer",
        "programmer",
    ]
    assert len(model.verticals["healthcare"].clusters) == 4


def test_classify_routes_into_one_vertical(model, corpus):
    for doc in corpus:
        prediction = model.classify(doc)
        assert prediction.coarse_group == gold_group(doc, model.aliases)
        assert set(prediction.coarse_scores) == {"15", "healthcare"}
        vertical = model.verticals[prediction.coarse_group]
        expected = classify_knn(
            vertical.index, doc, model.settings.k, model.settings.min_tf, model.pipeline
        )
        assert list(prediction.fine_titles) == expected
        assert not prediction.abstained


def test_classify_fine_titles(model):
    doc = Document("q", "Senior Java Developer")
    prediction = model.classify(doc, k=1)
    assert prediction.coarse_group == "15"
    assert [label for label, _ in prediction.fine_titles] == ["developer"]


def test_small_group_abstains(caplog):
    docs = make_documents(groups=("15",)) + make_documents(
        groups=("43",), sizes=(4, 3, 1, 1), seed=1
    )
    settings = Settings(min_group_size=10)
    with caplog.at_level(logging.WARNING, logger="cascade_titles"):
        model = train_cascade(DocumentSet.from_documents(docs), settings)
    assert "group 43 has 9 documents (< 10), no vertical" in caplog.text
    assert sorted(model.verticals) == ["15"]

    predictions = [model.classify(doc) for doc in docs]
    routed = [p for p in predictions if p.coarse_group == "43"]
    assert routed
    assert all(p.abstained and p.fine_titles == () for p in routed)


def test_train_cascade_needs_two_groups():
    docs = DocumentSet.from_documents(make_documents(groups=("15",)))
    with pytest.raises(DegenerateInputError):
        train_cascade(docs)


def test_train_cascade_crammer_singer(corpus):
    model = train_cascade(corpus, Settings(strategy="crammer_singer"))
    assert model.coarse.strategy == "crammer_singer"
    for doc in corpus:
        assert model.classify(doc).coarse_group == gold_group(doc, model.aliases)


def test_train_cascade_deterministic(corpus, model):
    again = train_cascade(corpus)
    assert again.coarse.dumps() == model.coarse.dumps()
    for key, vertical in model.verticals.items():
        assert again.verticals[key].clusters.dump() == vertical.clusters.dump()
        assert again.verticals[key].index.dump() == vertical.index.dump()


def test_classify_latency():
    rng = np.random.default_rng(0)
    words = [f"w{i}" for i in range(500)]
    metas = [
        MetaDocument(
            f"title{m}",
            {str(w): int(rng.integers(1, 5)) for w in rng.choice(words, 5, False)},
        )
        for m in range(2000)
    ]
    vertical = Vertical(ClusterSet(), index_meta_documents(metas))
    model = CascadeModel(
        coarse=LinearModel((0, 1), rng.standard_normal((2, len(words)))),
        features=TfIdfModel.from_vocabulary(
            Vocabulary.from_frequencies({w: 1 for w in words}, 2)
        ),
        groups=("15", "29"),
        verticals={"15": vertical, "29": vertical},
        aliases={},
        settings=Settings(),
        pipeline=TextPipeline(),
    )
    doc = Document("q", "w1 w17 w230 w5", description="w6 w7 w499")

    timings = []
    for _ in range(100):
        start = time.perf_counter()
        prediction = model.classify(doc)
        timings.append(time.perf_counter() - start)
    assert prediction.fine_titles
    assert statistics.median(timings) <= 0.1


async def test_save_load_model(workdir, model, corpus):
    directory = workdir / "cascade_model"
    await model.save(directory)
    loaded = await load_model(directory)
    assert isinstance(loaded, CascadeModel)
    assert loaded.groups == model.groups
    assert loaded.settings == model.settings
    for doc in corpus:
        assert loaded.classify(doc) == model.classify(doc)

    manifest = json.loads(await (directory / "manifest.json").a_read_text())
    assert manifest["kind"] == "cascade"
    assert manifest["format_version"] == 1
    assert "coarse/model.txt" in manifest["checksums"]


async def test_save_is_reproducible(workdir, model):
    await model.save(workdir / "first")
    await model.save(workdir / "second")
    names = ("manifest.json", "coarse/model.txt", "verticals/15/index/postings.jsonl")
    for name in names:
        first = await (workdir / "first" / name).a_read_text()
        assert first == await (workdir / "second" / name).a_read_text()


async def test_load_model_integrity(workdir, model):
    directory = workdir / "tampered"
    await model.save(directory)
    path = directory / "coarse" / "model.txt"
    text = await path.a_read_text()
    await path.a_write_text(text.replace("w 0 ", "w 0 1.0 ", 1))
    with pytest.raises(ModelIntegrityError, match="checksum mismatch"):
        await load_model(directory)

    await model.save(directory)
    await (directory / "manifest.json").a_write_text("{not json")
    with pytest.raises(ModelIntegrityError, match="corrupted manifest"):
        await load_model(directory)

    empty = workdir / "not_a_model"
    await empty.a_mkdir(parents=True, exist_ok=True)
    with pytest.raises(ModelIntegrityError):
        await load_model(empty)
    with pytest.raises(FileNotFoundError):
        await load_model(workdir / "nowhere")


async def test_load_model_manifest_fields_are_checked(workdir, model):
    directory = workdir / "tampered_manifest"
    await model.save(directory)
    path = directory / "manifest.json"
    original = json.loads(await path.a_read_text())

    manifest = json.loads(json.dumps(original))
    manifest["groups"] = manifest["groups"][::-1]
    await path.a_write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    with pytest.raises(ModelIntegrityError, match="checksum mismatch for manifest"):
        await load_model(directory)

    manifest = json.loads(json.dumps(original))
    manifest["params"]["k"] = 1
    await path.a_write_text(json.dumps(manifest))
    with pytest.raises(ModelIntegrityError, match="checksum mismatch for manifest"):
        await load_model(directory)

    manifest = json.loads(json.dumps(original))
    del manifest["manifest_checksum"]
    await path.a_write_text(json.dumps(manifest))
    with pytest.raises(ModelIntegrityError, match="corrupted manifest"):
        await load_model(directory)

    # formatting is free, content is not
    await path.a_write_text(json.dumps(original))
    assert (await load_model(directory)).groups == model.groups


async def test_flat_model(workdir):
    docs = DocumentSet.from_documents(make_documents(groups=("43",)))
    flat = train_flat(docs)
    assert len(flat.clusters) == 4
    prediction = flat.classify(Document("q", "payroll coordinator"))
    assert prediction.coarse_group is None
    assert prediction.fine_titles[0][0] == "coordinator"

    await flat.save(workdir / "flat")
    loaded = await load_model(workdir / "flat")
    assert isinstance(loaded, ProximityModel)
    assert loaded.classify(Document("q", "front desk")) == flat.classify(
        Document("q", "front desk")
    )
