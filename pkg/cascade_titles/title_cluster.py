"""Label-first title clustering.

The tf-idf term-document matrix is decomposed with a truncated SVD; each
retained left-singular vector names a cluster after its dominant term, and
documents join every cluster whose label they resemble closely enough.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from panpath import PanPath

from .corpus import DocumentSet
from .textprep import TextPipeline, normalize
from .utils import (
    ConvergenceError,
    DegenerateInputError,
    ParameterError,
    RecordParseError,
    logger,
)
from .vectorspace import (
    SparseVector,
    TfIdfModel,
    Vocabulary,
    cosine,
    term_document_matrix,
)

# spectra closer than this (relative) are treated as one degenerate block
_DEGENERATE_RTOL = 1e-8
_EIGEN_RTOL = 1e-12
_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class SvdResult:
    left_vectors: np.ndarray
    singular_values: np.ndarray
    rank_k: int
    right_vectors: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.rank_k


@dataclass(frozen=True)
class ClusterLabel:
    phrase: str
    label_vector: SparseVector
    source_component: int


@dataclass(frozen=True)
class Cluster:
    label: ClusterLabel
    member_ids: tuple[str, ...]
    similarities: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.member_ids)


@dataclass(frozen=True)
class ClusterSet:
    clusters: tuple[Cluster, ...] = ()
    other_bucket: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.clusters)

    @property
    def labels(self) -> list[str]:
        return [cluster.label.phrase for cluster in self.clusters]

    @property
    def member_ids(self) -> set[str]:
        return {m for cluster in self.clusters for m in cluster.member_ids}

    def size_histogram(self) -> list[tuple[str, int]]:
        """Cluster counts per size bucket (1, 2-4, 5-9, 10-49, ...)"""
        buckets = [(1, 1), (2, 4), (5, 9), (10, 49), (50, 99), (100, 499)]
        buckets.append((500, None))
        out = []
        for low, high in buckets:
            n = sum(
                1
                for c in self.clusters
                if len(c) >= low and (high is None or len(c) <= high)
            )
            out.append((f"{low}+" if high is None else f"{low}-{high}", n))
        return out

    async def save(self, directory: str | PanPath) -> None:
        """labels.tsv, memberships.tsv and unassigned.txt under `directory`"""
        directory = PanPath(directory)
        await directory.a_mkdir(parents=True, exist_ok=True)
        for name, text in self.dump().items():
            await directory.joinpath(name).a_write_text(text)

    def dump(self) -> dict[str, str]:
        labels, members = [], []
        for label_id, cluster in enumerate(self.clusters):
            label = cluster.label
            term_index = int(label.label_vector.indices[0])
            labels.append(
                f"{label_id}\t{label.source_component}\t{term_index}\t{label.phrase}\n"
            )
            members.extend(
                f"{doc_id}\t{label_id}\t{sim!r}\n"
                for doc_id, sim in zip(cluster.member_ids, cluster.similarities)
            )
        return {
            "labels.tsv": "".join(labels),
            "memberships.tsv": "".join(members),
            "unassigned.txt": "".join(f"{doc_id}\n" for doc_id in self.other_bucket),
        }

    @classmethod
    async def load(cls, directory: str | PanPath) -> ClusterSet:
        directory = PanPath(directory)
        texts = {}
        for name in ("labels.tsv", "memberships.tsv", "unassigned.txt"):
            texts[name] = await directory.joinpath(name).a_read_text()
        return cls.loads(texts)

    @classmethod
    def loads(cls, texts: dict[str, str]) -> ClusterSet:
        try:
            labels = []
            for line in texts["labels.tsv"].splitlines():
                _, component, term_index, phrase = line.split("\t", 3)
                labels.append(
                    ClusterLabel(
                        phrase=phrase,
                        label_vector=SparseVector([int(term_index)], [1.0]),
                        source_component=int(component),
                    )
                )
            members: list[list[tuple[str, float]]] = [[] for _ in labels]
            for line in texts["memberships.tsv"].splitlines():
                doc_id, label_id, sim = line.split("\t")
                members[int(label_id)].append((doc_id, float(sim)))
        except (ValueError, IndexError) as e:
            raise RecordParseError(f"malformed cluster set: {e}") from None

        return cls(
            clusters=tuple(
                Cluster(
                    label,
                    tuple(m for m, _ in pairs),
                    tuple(s for _, s in pairs),
                )
                for label, pairs in zip(labels, members)
            ),
            other_bucket=tuple(texts["unassigned.txt"].split()),
        )


def _power_iterate(
    matrix: sp.spmatrix,
    found: np.ndarray,
    rng: np.random.Generator,
    tol: float,
    max_iter: int,
    floor: float,
) -> tuple[np.ndarray, float] | None:
    """Dominant eigenpair of MᵀM restricted to the complement of `found`.

    Returns None once nothing is left outside the found subspace.
    """
    n = matrix.shape[1]

    def deflate(vec):
        if found.shape[1]:
            vec = vec - found @ (found.T @ vec)
        return vec

    vec = deflate(rng.standard_normal(n))
    norm = np.linalg.norm(vec)
    if norm <= 1e-12:
        return None
    vec /= norm

    eigen = 0.0
    residual = np.inf
    for _ in range(max_iter):
        nxt = deflate(matrix.T @ (matrix @ vec))
        new_eigen = float(vec @ nxt)
        norm = np.linalg.norm(nxt)
        if norm <= floor:
            return None
        residual = np.linalg.norm(nxt - new_eigen * vec)
        nxt /= norm
        change = np.linalg.norm(nxt - vec)
        vec = nxt
        if change < tol or abs(new_eigen - eigen) <= _EIGEN_RTOL * abs(new_eigen):
            return vec, new_eigen
        eigen = new_eigen

    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations", residual
    )


def _canonical_rotation(
    left: np.ndarray, right: np.ndarray, sigma: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Fix the basis inside blocks of equal singular values.

    Any rotation of a degenerate block is a valid decomposition; pick the
    one whose columns line up, in turn, with the largest remaining rows
    (ties to the lowest row index), and make each column's peak positive.
    """
    left, right = left.copy(), right.copy()
    start = 0
    k = sigma.size
    while start < k:
        stop = start + 1
        while (
            stop < k
            and sigma[start] - sigma[stop] <= _DEGENERATE_RTOL * max(sigma[start], 1.0)
        ):
            stop += 1

        if stop - start > 1:
            block_l, block_r = left[:, start:stop], right[:, start:stop]
            basis = np.eye(stop - start)
            columns = []
            for _ in range(stop - start):
                rows = block_l @ basis
                norms = np.linalg.norm(rows, axis=1)
                peak = np.flatnonzero(norms >= norms.max() * (1 - _TIE_RTOL))[0]
                direction = rows[peak] / norms[peak]
                columns.append(basis @ direction)
                _, _, vt = np.linalg.svd(direction[None, :])
                basis = basis @ vt[1:].T
            rotation = np.column_stack(columns)
            left[:, start:stop] = block_l @ rotation
            right[:, start:stop] = block_r @ rotation
        start = stop

    for j in range(k):
        peak = np.argmax(np.abs(left[:, j]))
        if left[peak, j] < 0:
            left[:, j] = -left[:, j]
            right[:, j] = -right[:, j]
    return left, right


def truncated_svd(
    matrix: sp.spmatrix | np.ndarray,
    quality_q: float = 0.9,
    tol: float = 1e-9,
    max_iter: int = 1000,
    seed: int = 0,
) -> SvdResult:
    """Leading singular triplets by power iteration with deflation.

    Triplets are extracted until their squared singular values cover
    `quality_q` of the squared Frobenius norm; `rank_k` is the smallest
    such count.

    Raises:
        ParameterError: when quality_q is outside (0, 1]
        DegenerateInputError: for a zero matrix
        ConvergenceError: when a triplet does not settle within max_iter
    """
    if not 0 < quality_q <= 1:
        raise ParameterError(f"quality_q must be in (0, 1], got {quality_q}")

    matrix = sp.csc_matrix(matrix, dtype=np.float64)
    total = float(matrix.multiply(matrix).sum())
    if total <= 0:
        raise DegenerateInputError("cannot decompose a zero matrix")

    # iterate on the smaller Gram matrix
    transposed = matrix.shape[0] < matrix.shape[1]
    work = matrix.T.tocsc() if transposed else matrix
    n = work.shape[1]

    rng = np.random.default_rng(seed)
    found = np.zeros((n, 0))
    captured = 0.0
    floor = 1e-12 * total
    while found.shape[1] < min(work.shape) and captured < quality_q * total * (
        1 - 1e-12
    ):
        pair = _power_iterate(work, found, rng, tol, max_iter, floor)
        if pair is None:
            break
        vec, eigen = pair
        found = np.column_stack([found, vec])
        captured += max(eigen, 0.0)

    # Rayleigh-Ritz on the found subspace
    u_small, sigma, wt = np.linalg.svd(work @ found, full_matrices=False)
    right = found @ wt.T
    left = u_small
    if transposed:
        left, right = right, left

    cumulative = np.cumsum(sigma**2)
    rank_k = int(np.searchsorted(cumulative, quality_q * total * (1 - 1e-12)) + 1)
    rank_k = min(rank_k, sigma.size)

    left, right = _canonical_rotation(left, right, sigma)
    logger.debug(
        "svd: %d of %d components kept (%.3f of the energy)",
        rank_k,
        sigma.size,
        cumulative[rank_k - 1] / total,
    )
    return SvdResult(
        left_vectors=left[:, :rank_k],
        singular_values=sigma[:rank_k],
        rank_k=rank_k,
        right_vectors=right[:, :rank_k],
    )


def induce_labels(
    svd: SvdResult, vocab: Vocabulary, max_labels: int
) -> list[ClusterLabel]:
    """Name each leading component after its largest-magnitude term"""
    if not len(vocab):
        raise DegenerateInputError("cannot induce labels from an empty vocabulary")

    labels = []
    seen = set()
    for component in range(min(svd.rank_k, max_labels)):
        weights = np.abs(svd.left_vectors[:, component])
        # indices are in lexicographic term order: the first tie wins
        peak = int(np.flatnonzero(weights >= weights.max() * (1 - _TIE_RTOL))[0])
        phrase = vocab.terms[peak]
        if phrase in seen:
            continue
        seen.add(phrase)
        labels.append(
            ClusterLabel(
                phrase=phrase,
                label_vector=SparseVector([peak], [1.0]),
                source_component=component,
            )
        )
    return labels


def assign_documents(
    docs: Sequence[tuple[str, SparseVector]],
    labels: Sequence[ClusterLabel],
    threshold: float,
) -> ClusterSet:
    """Every document joins every cluster it resembles by >= threshold"""
    if not 0 < threshold <= 1:
        raise ParameterError(f"threshold must be in (0, 1], got {threshold}")

    members: list[list[tuple[str, float]]] = [[] for _ in labels]
    other = []
    for doc_id, vector in docs:
        joined = False
        for i, label in enumerate(labels):
            sim = cosine(vector, label.label_vector)
            if sim >= threshold:
                members[i].append((doc_id, sim))
                joined = True
        if not joined:
            other.append(doc_id)

    return ClusterSet(
        clusters=tuple(
            Cluster(label, tuple(d for d, _ in pairs), tuple(s for _, s in pairs))
            for label, pairs in zip(labels, members)
        ),
        other_bucket=tuple(other),
    )


@dataclass(frozen=True)
class ClusterParams:
    min_title_freq: int = 4
    quality_q: float = 0.9
    threshold: float = 0.2
    max_labels: int = 100
    min_df: int = 2
    text_field: str = "title"
    svd_tol: float = 1e-9
    svd_max_iter: int = 1000
    seed: int = 0


def _flat_corpus_clusters(
    ids: Sequence[str], terms, model: TfIdfModel, threshold: float
) -> ClusterSet:
    """A corpus whose terms all occur everywhere is one topic: label it by
    its most frequent term and score documents on raw term counts."""
    counts = Counter(t for seq in terms for t in seq.terms if t in model.vocab)
    if not counts:
        raise DegenerateInputError("no vocabulary term survives in the corpus")
    best = max(counts.values())
    phrase = min(t for t, c in counts.items() if c == best)
    index = model.vocab.index
    label = ClusterLabel(phrase, SparseVector([index[phrase]], [1.0]), 0)

    vectors = []
    for doc_id, seq in zip(ids, terms):
        tf = Counter(t for t in seq.terms if t in index)
        vectors.append(
            (doc_id, SparseVector.from_dict({index[t]: c for t, c in tf.items()}))
        )
    return assign_documents(vectors, [label], threshold)


def cluster_corpus(
    docs: DocumentSet,
    params: ClusterParams = ClusterParams(),
    pipeline: TextPipeline | None = None,
) -> ClusterSet:
    """Title-frequency filter -> terms -> tf-idf matrix -> SVD -> labels ->
    assignment.

    Raises:
        DegenerateInputError: when no document survives the title filter
    """
    pipeline = pipeline or TextPipeline()
    title_counts = Counter(normalize(doc.title, pipeline.exceptions) for doc in docs)
    kept = [
        doc
        for doc in docs
        if title_counts[normalize(doc.title, pipeline.exceptions)]
        >= params.min_title_freq
    ]
    if not kept:
        raise DegenerateInputError(
            f"no title occurs at least {params.min_title_freq} times"
        )
    logger.debug(
        "clustering %d of %d documents (min title frequency %d)",
        len(kept),
        len(docs),
        params.min_title_freq,
    )

    ids = [doc.id for doc in kept]
    terms = [pipeline.terms(doc.text(params.text_field), doc.id) for doc in kept]
    model = TfIdfModel.fit(terms, params.min_df)
    if not len(model):
        raise DegenerateInputError("empty vocabulary after the min-df filter")

    matrix = term_document_matrix(terms, model)
    if matrix.nnz == 0:
        return _flat_corpus_clusters(ids, terms, model, params.threshold)

    svd = truncated_svd(
        matrix,
        params.quality_q,
        tol=params.svd_tol,
        max_iter=params.svd_max_iter,
        seed=params.seed,
    )
    labels = induce_labels(svd, model.vocab, params.max_labels)
    return assign_documents(list(zip(ids, _columns(matrix))), labels, params.threshold)


def _columns(matrix: sp.csc_matrix) -> list[SparseVector]:
    return [
        SparseVector(
            matrix.indices[matrix.indptr[j] : matrix.indptr[j + 1]],
            matrix.data[matrix.indptr[j] : matrix.indptr[j + 1]],
        )
        for j in range(matrix.shape[1])
    ]
