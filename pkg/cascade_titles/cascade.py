"""Coarse SOC group SVM routed into per-group title k-NN verticals.

A model directory looks like:

    manifest.json              format version, kind, groups, aliases, params,
                               verticals and a sha256 of every other file
    stopwords.txt
    coarse/model.txt           LinearModel
    coarse/features.jsonl      TfIdfModel of the coarse features
    verticals/<group>/clusters/{labels.tsv,memberships.tsv,unassigned.txt}
    verticals/<group>/index/{meta_docs.jsonl,postings.jsonl}

A flat proximity model ("proximity" kind, written by `cluster`) holds the
ClusterSet files at its top level and the index under index/.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from panpath import PanPath

from .config import Settings
from .corpus import Document, DocumentSet, major_group_name
from .linear_svm import (
    LinearModel,
    predict,
    train_crammer_singer_matrix,
    train_ova_matrix,
)
from .proximity_knn import ProximityIndex, build_index, classify_knn
from .textprep import StopList, TextPipeline, load_stoplist
from .title_cluster import ClusterParams, ClusterSet, cluster_corpus
from .utils import (
    CascadeTitlesError,
    DegenerateInputError,
    ModelIntegrityError,
    ParameterError,
    checksum,
    logger,
)
from .vectorspace import SparseVector, TfIdfModel, stack_rows, tfidf_vector

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
MANIFEST_DIGEST = "manifest_checksum"
CLUSTER_FILES = ("labels.tsv", "memberships.tsv", "unassigned.txt")
INDEX_FILES = ("meta_docs.jsonl", "postings.jsonl")


@dataclass(frozen=True)
class Vertical:
    clusters: ClusterSet
    index: ProximityIndex


@dataclass(frozen=True)
class CascadePrediction:
    """coarse_group is None for a flat proximity model"""

    coarse_group: str | None
    coarse_scores: Mapping[str, float] = field(default_factory=dict)
    fine_titles: tuple[tuple[str, float], ...] = ()

    @property
    def abstained(self) -> bool:
        return not self.fine_titles


@dataclass(frozen=True)
class CascadeModel:
    coarse: LinearModel
    features: TfIdfModel
    groups: tuple[str, ...]
    verticals: Mapping[str, Vertical]
    aliases: Mapping[str, tuple[int, ...]]
    settings: Settings
    pipeline: TextPipeline

    kind = "cascade"

    def classify(self, doc: Document, k: int | None = None) -> CascadePrediction:
        return classify(self, doc, k)

    async def save(self, directory: str | PanPath) -> None:
        files = {"stopwords.txt": self.pipeline.stops.dump()}
        files["coarse/model.txt"] = self.coarse.dumps()
        files["coarse/features.jsonl"] = self.features.dumps()
        verticals = {}
        for key, vertical in sorted(self.verticals.items()):
            for name, text in vertical.clusters.dump().items():
                files[f"verticals/{key}/clusters/{name}"] = text
            for name, text in vertical.index.dump().items():
                files[f"verticals/{key}/index/{name}"] = text
            verticals[key] = {
                "clusters": len(vertical.clusters),
                "documents": len(vertical.clusters.member_ids),
            }
        manifest = {
            "groups": list(self.groups),
            "aliases": {k: list(v) for k, v in sorted(self.aliases.items())},
            "verticals": verticals,
        }
        await _write_model(directory, self.kind, manifest, self.settings, files)


@dataclass(frozen=True)
class ProximityModel:
    """Single-stage classifier: k-NN over the clusters of a whole corpus"""

    clusters: ClusterSet
    index: ProximityIndex
    settings: Settings
    pipeline: TextPipeline

    kind = "proximity"

    def classify(self, doc: Document, k: int | None = None) -> CascadePrediction:
        return classify_flat(self, doc, k)

    async def save(self, directory: str | PanPath) -> None:
        files = {"stopwords.txt": self.pipeline.stops.dump()}
        files.update(self.clusters.dump())
        for name, text in self.index.dump().items():
            files[f"index/{name}"] = text
        manifest = {"clusters": len(self.clusters)}
        await _write_model(directory, self.kind, manifest, self.settings, files)


def resolve_group(major: int, aliases: Mapping[str, Sequence[int]]) -> str:
    """Alias name of a major group, else the group number itself"""
    for name, groups in aliases.items():
        if major in groups:
            return name
    return str(major)


def group_title(key: str, aliases: Mapping[str, Sequence[int]]) -> str:
    if key in aliases:
        return " + ".join(major_group_name(g) or str(g) for g in aliases[key])
    return major_group_name(int(key)) if key.isdigit() else ""


def gold_group(doc: Document, aliases: Mapping[str, Sequence[int]]) -> str | None:
    if doc.gold_soc is None:
        return None
    return resolve_group(doc.gold_soc.major, aliases)


def balance_undersample(
    data: DocumentSet,
    base_count: int,
    seed: int = 0,
    aliases: Mapping[str, Sequence[int]] | None = None,
) -> DocumentSet:
    """Cap every (alias-resolved) group at `base_count` labeled documents.

    Larger groups are sampled uniformly without replacement; the output
    keeps input order. Unlabeled documents are dropped.
    """
    if base_count < 1:
        raise ParameterError(f"base_count must be >= 1, got {base_count}")

    aliases = aliases or {}
    positions: dict[str, list[int]] = {}
    for pos, doc in enumerate(data):
        group = gold_group(doc, aliases)
        if group is not None:
            positions.setdefault(group, []).append(pos)
    if not positions:
        raise DegenerateInputError("no labeled documents to balance")

    rng = np.random.default_rng(seed)
    keep: list[int] = []
    for group in sorted(positions):
        members = positions[group]
        if len(members) > base_count:
            members = rng.choice(members, size=base_count, replace=False).tolist()
            logger.debug("group %s under-sampled to %d", group, base_count)
        keep.extend(members)
    return data.take(keep)


def pipeline_for(settings: Settings, stops: StopList | None = None) -> TextPipeline:
    if stops is None:
        return TextPipeline(exceptions=settings.exceptions)
    return TextPipeline(stops=stops, exceptions=settings.exceptions)


async def load_pipeline(settings: Settings) -> TextPipeline:
    """Pipeline over the configured stop word file, or the bundled one"""
    return pipeline_for(settings, await load_stoplist(settings.stopwords))


def cluster_params(settings: Settings) -> ClusterParams:
    return ClusterParams(
        min_title_freq=settings.min_title_freq,
        quality_q=settings.quality_q,
        threshold=settings.threshold,
        max_labels=settings.max_labels,
        min_df=settings.min_df,
        text_field=settings.cluster_text,
        svd_tol=settings.svd_tol,
        svd_max_iter=settings.svd_max_iter,
        seed=settings.seed,
    )


def coarse_vector(doc: Document, model: CascadeModel) -> SparseVector:
    terms = model.pipeline.terms(doc.text(model.settings.coarse_text), doc.id)
    return tfidf_vector(terms, model.features).normalized()


def build_vertical(
    docs: DocumentSet, settings: Settings, pipeline: TextPipeline
) -> Vertical:
    clusters = cluster_corpus(docs, cluster_params(settings), pipeline)
    return Vertical(clusters, build_index(clusters, docs, pipeline))


def train_cascade(
    data: DocumentSet,
    settings: Settings = Settings(),
    pipeline: TextPipeline | None = None,
) -> CascadeModel:
    """Balance, fit the coarse SVM on full postings and cluster every
    group's titles into a vertical.

    Raises:
        DegenerateInputError: with fewer than 2 labeled groups
    """
    pipeline = pipeline or pipeline_for(settings)
    aliases = settings.aliases
    labeled = data.labeled
    groups = tuple(sorted({gold_group(doc, aliases) for doc in labeled}))
    if len(groups) < 2:
        raise DegenerateInputError(
            f"training needs labeled documents of at least 2 groups, got {len(groups)}"
        )

    balanced = balance_undersample(labeled, settings.base_count, settings.seed, aliases)
    terms = [pipeline.terms(doc.text(settings.coarse_text), doc.id) for doc in balanced]
    features = TfIdfModel.fit(terms, settings.min_df)
    if not len(features):
        raise DegenerateInputError("no coarse feature survives the min-df filter")

    X = stack_rows(
        [tfidf_vector(seq, features).normalized() for seq in terms], len(features)
    )
    class_of = {group: i for i, group in enumerate(groups)}
    y = np.asarray([class_of[gold_group(doc, aliases)] for doc in balanced])
    logger.debug(
        "training coarse %s SVM: %d documents, %d features, %d groups",
        settings.strategy,
        X.shape[0],
        X.shape[1],
        len(groups),
    )
    if settings.strategy == "crammer_singer":
        coarse = train_crammer_singer_matrix(
            X,
            y,
            C=settings.C,
            max_iters=settings.max_iters,
            n_classes=len(groups),
            bias=settings.bias,
            seed=settings.seed,
        )
    else:
        coarse = train_ova_matrix(
            X,
            y,
            C=settings.C,
            tol=settings.tol,
            max_iters=settings.max_iters,
            n_classes=len(groups),
            bias=settings.bias,
            seed=settings.seed,
            solver=settings.solver,
        )

    verticals = {}
    for group in groups:
        docs = labeled.subset(d for d in labeled if gold_group(d, aliases) == group)
        if len(docs) < settings.min_group_size:
            logger.warning(
                "group %s has %d documents (< %d), no vertical",
                group,
                len(docs),
                settings.min_group_size,
            )
            continue
        try:
            verticals[group] = build_vertical(docs, settings, pipeline)
        except DegenerateInputError as e:
            logger.warning("group %s: %s, no vertical", group, e)

    return CascadeModel(
        coarse=coarse,
        features=features,
        groups=groups,
        verticals=verticals,
        aliases=dict(aliases),
        settings=settings,
        pipeline=pipeline,
    )


def train_flat(
    data: DocumentSet,
    settings: Settings = Settings(),
    pipeline: TextPipeline | None = None,
) -> ProximityModel:
    """Cluster a whole corpus and index it, no coarse stage"""
    pipeline = pipeline or pipeline_for(settings)
    vertical = build_vertical(data, settings, pipeline)
    return ProximityModel(vertical.clusters, vertical.index, settings, pipeline)


def classify(
    cascade: CascadeModel, doc: Document, k: int | None = None
) -> CascadePrediction:
    """Coarse argmax routing, then k-NN inside the routed vertical only.

    A group without a vertical yields an abstention that still reports
    the coarse group.
    """
    k = cascade.settings.k if k is None else k
    cls, scores = predict(cascade.coarse, coarse_vector(doc, cascade))
    group = cascade.groups[cls]
    coarse_scores = {
        cascade.groups[c]: float(s) for c, s in zip(cascade.coarse.classes, scores)
    }

    vertical = cascade.verticals.get(group)
    if vertical is None:
        return CascadePrediction(group, coarse_scores)
    fine = classify_knn(
        vertical.index, doc, k, cascade.settings.min_tf, cascade.pipeline
    )
    return CascadePrediction(group, coarse_scores, tuple(fine))


def classify_flat(
    model: ProximityModel, doc: Document, k: int | None = None
) -> CascadePrediction:
    k = model.settings.k if k is None else k
    fine = classify_knn(model.index, doc, k, model.settings.min_tf, model.pipeline)
    return CascadePrediction(None, {}, tuple(fine))


def _canonical(manifest: Mapping) -> str:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":"))


async def _write_model(
    directory: str | PanPath,
    kind: str,
    manifest: dict,
    settings: Settings,
    files: Mapping[str, str],
) -> None:
    directory = PanPath(directory)
    manifest = {
        **manifest,
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "params": settings.to_dict(),
        "checksums": {name: checksum(text) for name, text in sorted(files.items())},
    }
    manifest[MANIFEST_DIGEST] = checksum(_canonical(manifest))
    for name, text in sorted(files.items()):
        path = directory.joinpath(name)
        await path.parent.a_mkdir(parents=True, exist_ok=True)
        await path.a_write_text(text)
    await directory.joinpath(MANIFEST).a_write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


async def _read_model(directory: str | PanPath) -> tuple[dict, dict[str, str]]:
    """Manifest and every file it lists, checksums verified"""
    directory = PanPath(directory)
    if not await directory.a_exists():
        raise FileNotFoundError(2, "No such file or directory", str(directory))
    manifest_path = directory.joinpath(MANIFEST)
    if not await manifest_path.a_exists():
        raise ModelIntegrityError(f"{directory}: no {MANIFEST}, not a model directory")
    try:
        manifest = json.loads(await manifest_path.a_read_text())
        manifest_digest = manifest.pop(MANIFEST_DIGEST)
        expected = dict(manifest["checksums"])
        version = manifest["format_version"]
    except (ValueError, KeyError, TypeError, AttributeError) as e:
        raise ModelIntegrityError(
            f"{manifest_path}: corrupted manifest ({e})"
        ) from None
    if checksum(_canonical(manifest)) != manifest_digest:
        raise ModelIntegrityError(f"{manifest_path}: checksum mismatch for {MANIFEST}")
    if version != FORMAT_VERSION:
        raise ModelIntegrityError(f"{manifest_path}: unsupported format {version!r}")

    texts = {}
    for name, digest in sorted(expected.items()):
        path = directory.joinpath(name)
        if not await path.a_exists():
            raise ModelIntegrityError(f"{directory}: missing {name}")
        try:
            text = await path.a_read_text()
        except UnicodeDecodeError:
            raise ModelIntegrityError(f"{directory}: {name} is not UTF-8") from None
        if checksum(text) != digest:
            raise ModelIntegrityError(f"{directory}: checksum mismatch for {name}")
        texts[name] = text
    return manifest, texts


def _subtree(texts: Mapping[str, str], prefix: str, names: Sequence[str]) -> dict:
    return {name: texts[f"{prefix}{name}"] for name in names}


async def load_model(directory: str | PanPath) -> CascadeModel | ProximityModel:
    """Load a cascade or flat proximity model directory

    Raises:
        ModelIntegrityError: on a missing, corrupted or tampered file
    """
    manifest, texts = await _read_model(directory)
    try:
        settings = Settings.from_mapping(manifest["params"])
        pipeline = pipeline_for(settings, StopList.parse(texts["stopwords.txt"]))
        if manifest["kind"] == ProximityModel.kind:
            return ProximityModel(
                clusters=ClusterSet.loads(_subtree(texts, "", CLUSTER_FILES)),
                index=ProximityIndex.loads(_subtree(texts, "index/", INDEX_FILES)),
                settings=settings,
                pipeline=pipeline,
            )
        if manifest["kind"] != CascadeModel.kind:
            raise ValueError(f"unknown model kind {manifest['kind']!r}")

        verticals = {}
        for key in sorted(manifest["verticals"]):
            prefix = f"verticals/{key}/"
            verticals[key] = Vertical(
                ClusterSet.loads(_subtree(texts, f"{prefix}clusters/", CLUSTER_FILES)),
                ProximityIndex.loads(_subtree(texts, f"{prefix}index/", INDEX_FILES)),
            )
        return CascadeModel(
            coarse=LinearModel.loads(texts["coarse/model.txt"]),
            features=TfIdfModel.loads(texts["coarse/features.jsonl"]),
            groups=tuple(manifest["groups"]),
            verticals=verticals,
            aliases={k: tuple(v) for k, v in manifest["aliases"].items()},
            settings=settings,
            pipeline=pipeline,
        )
    except (CascadeTitlesError, ValueError, KeyError, TypeError) as e:
        raise ModelIntegrityError(f"{directory}: unusable model ({e})") from None
