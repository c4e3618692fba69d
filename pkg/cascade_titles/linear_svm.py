"""Linear L2-loss SVM: binary solvers, one-vs-all and Crammer-Singer.

Binary objective (squared hinge):

    f(w) = 1/2 ||w||^2 + C * sum_i max(1 - y_i w'x_i, 0)^2

Crammer-Singer objective:

    1/2 sum_c ||w_c||^2 + C * sum_i max(0, 1 + max_{r != y_i} w_r'x_i - w_{y_i}'x_i)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from panpath import PanPath

from .utils import (
    DegenerateInputError,
    ParameterError,
    RecordParseError,
    logger,
)
from .vectorspace import SparseVector, stack_rows

FORMAT = "cascade_titles-linear-1"
STRATEGIES = ("ova", "crammer_singer")
SOLVERS = ("primal_cd", "dual_cd")


@dataclass(frozen=True)
class LabeledInstance:
    x: SparseVector
    y: int


@dataclass(frozen=True)
class LinearModel:
    """Per-class weight rows over n_features (+1 bias column)"""

    classes: tuple[int, ...]
    weights: np.ndarray
    C: float = 1.0
    bias: bool = False
    strategy: str = "ova"

    @property
    def n_features(self) -> int:
        return self.weights.shape[1] - int(self.bias)

    def dumps(self) -> str:
        header = [
            f"# format={FORMAT}",
            f"# classes={','.join(map(str, self.classes))}",
            f"# n_features={self.n_features}",
            f"# C={self.C!r}",
            f"# strategy={self.strategy}",
            f"# bias={int(self.bias)}",
        ]
        rows = [
            "w {} {}".format(cls, " ".join(repr(float(v)) for v in row))
            for cls, row in zip(self.classes, self.weights)
        ]
        return "".join(f"{line}\n" for line in header + rows)

    @classmethod
    def loads(cls, text: str) -> LinearModel:
        meta, rows = {}, []
        try:
            for line in text.splitlines():
                if line.startswith("#"):
                    key, value = line[1:].strip().split("=", 1)
                    meta[key] = value
                elif line.startswith("w "):
                    _, _, values = line.split(" ", 2)
                    rows.append([float(v) for v in values.split()])
            if meta.get("format") != FORMAT:
                raise ValueError(f"unknown format {meta.get('format')!r}")
            bias = bool(int(meta["bias"]))
            classes = tuple(int(c) for c in meta["classes"].split(","))
            weights = np.asarray(rows, dtype=np.float64).reshape(
                len(classes), int(meta["n_features"]) + int(bias)
            )
            return cls(classes, weights, float(meta["C"]), bias, meta["strategy"])
        except (ValueError, KeyError) as e:
            raise RecordParseError(f"malformed linear model: {e}") from None

    async def save(self, path: str | PanPath) -> None:
        await PanPath(path).a_write_text(self.dumps())

    @classmethod
    async def load(cls, path: str | PanPath) -> LinearModel:
        return cls.loads(await PanPath(path).a_read_text())


@dataclass(frozen=True)
class BinaryFit:
    """Result of a binary training run"""

    weights: np.ndarray
    converged: bool
    epochs: int
    history: tuple[float, ...] = field(default=())


def _check_dims(w: np.ndarray, x: SparseVector) -> None:
    if x.max_index >= w.shape[-1]:
        raise ParameterError(
            f"feature index {x.max_index} out of range for {w.shape[-1]} weights"
        )


def _check_C(C: float) -> None:
    if not C > 0:
        raise ParameterError(f"C must be > 0, got {C}")


def _check_iters(max_iters: int) -> None:
    if max_iters < 1:
        raise ParameterError(f"max_iters must be >= 1, got {max_iters}")


def _design(data: Sequence[LabeledInstance], n_features: int | None):
    if n_features is None:
        n_features = max((inst.x.max_index for inst in data), default=-1) + 1
    for inst in data:
        if inst.x.max_index >= n_features:
            raise ParameterError(
                f"feature index {inst.x.max_index} out of range for "
                f"{n_features} features"
            )
    X = stack_rows([inst.x for inst in data], n_features)
    y = np.asarray([inst.y for inst in data], dtype=np.int64)
    return X, y


def l2_hinge_loss(w: np.ndarray, x: SparseVector, y: int) -> float:
    _check_dims(w, x)
    margin = y * float(np.dot(w[x.indices], x.weights))
    return max(1.0 - margin, 0.0) ** 2


def _objective(w: np.ndarray, X: sp.csr_matrix, y: np.ndarray, C: float) -> float:
    slack = np.maximum(1.0 - y * (X @ w), 0.0)
    return 0.5 * float(w @ w) + C * float(slack @ slack)


def _gradient(w: np.ndarray, X: sp.csr_matrix, y: np.ndarray, C: float) -> np.ndarray:
    slack = np.maximum(1.0 - y * (X @ w), 0.0)
    return w - 2.0 * C * (X.T @ (y * slack))


def objective(w: np.ndarray, data: Sequence[LabeledInstance], C: float) -> float:
    _check_C(C)
    w = np.asarray(w, dtype=np.float64)
    X, y = _design(data, w.size)
    return _objective(w, X, y, C)


def gradient(w: np.ndarray, data: Sequence[LabeledInstance], C: float) -> np.ndarray:
    _check_C(C)
    w = np.asarray(w, dtype=np.float64)
    X, y = _design(data, w.size)
    return _gradient(w, X, y, C)


def _primal_cd(X, y, C, tol, max_iters, rng, sigma=0.01, beta=0.5):
    """Coordinate descent on the primal with a sufficient-decrease line
    search; every accepted step lowers the objective."""
    X = sp.csc_matrix(X)
    n_features = X.shape[1]
    w = np.zeros(n_features)
    slack = np.ones(X.shape[0])  # 1 - y_i w'x_i
    history = [_objective(w, X, y, C)]

    for epoch in range(1, max_iters + 1):
        for j in rng.permutation(n_features):
            start, stop = X.indptr[j], X.indptr[j + 1]
            if start == stop:
                continue
            rows = X.indices[start:stop]
            xj = X.data[start:stop]
            yx = y[rows] * xj
            b = slack[rows]
            active = b > 0
            d1 = w[j] - 2.0 * C * float(np.dot(yx[active], b[active]))
            d2 = 1.0 + 2.0 * C * float(np.dot(xj[active], xj[active]))
            if abs(d1) <= 1e-12:
                continue

            d = -d1 / d2
            base = np.maximum(b, 0.0)
            base = float(base @ base)
            step = d
            for _ in range(60):
                moved = np.maximum(b - step * yx, 0.0)
                change = (
                    0.5 * ((w[j] + step) ** 2 - w[j] ** 2)
                    + C * (float(moved @ moved) - base)
                )
                if change <= -sigma * step * step:
                    break
                step *= beta
            else:
                continue
            w[j] += step
            slack[rows] = b - step * yx

        history.append(_objective(w, X, y, C))
        if history[-2] - history[-1] < tol:
            return w, True, epoch, history
    return w, False, max_iters, history


def _dual_cd(X, y, C, tol, max_iters, rng):
    """Dual coordinate descent over instances (L2 loss, no upper bound)"""
    X = sp.csr_matrix(X)
    n = X.shape[0]
    w = np.zeros(X.shape[1])
    alpha = np.zeros(n)
    diag = 0.5 / C
    q = np.asarray(X.multiply(X).sum(axis=1)).ravel() + diag
    history = [_objective(w, X, y, C)]

    for epoch in range(1, max_iters + 1):
        for i in rng.permutation(n):
            start, stop = X.indptr[i], X.indptr[i + 1]
            cols = X.indices[start:stop]
            xy = X.data[start:stop] * y[i]
            grad = float(np.dot(w[cols], xy)) - 1.0 + diag * alpha[i]
            projected = min(grad, 0.0) if alpha[i] == 0 else grad
            if abs(projected) <= 1e-12:
                continue
            new_alpha = max(alpha[i] - grad / q[i], 0.0)
            w[cols] += (new_alpha - alpha[i]) * xy
            alpha[i] = new_alpha

        history.append(_objective(w, X, y, C))
        if abs(history[-2] - history[-1]) < tol:
            return w, True, epoch, history
    return w, False, max_iters, history


def _fit_binary(X, y, C, tol, max_iters, seed, solver) -> BinaryFit:
    _check_iters(max_iters)
    if solver not in SOLVERS:
        raise ParameterError(f"unknown solver {solver!r}, expected one of {SOLVERS}")
    rng = np.random.default_rng(seed)
    fit = _primal_cd if solver == "primal_cd" else _dual_cd
    w, converged, epochs, history = fit(X, y.astype(np.float64), C, tol, max_iters, rng)
    if not converged:
        logger.warning(
            "binary SVM did not converge in %d epochs (last decrease %.3g)",
            max_iters,
            history[-2] - history[-1],
        )
    return BinaryFit(w, converged, epochs, tuple(history))


def train_binary(
    data: Sequence[LabeledInstance],
    C: float = 1.0,
    tol: float = 1e-6,
    max_iters: int = 1000,
    n_features: int | None = None,
    seed: int = 0,
    solver: str = "primal_cd",
) -> BinaryFit:
    """Minimize the L2-SVM objective for labels in {-1, +1}

    Raises:
        DegenerateInputError: unless both classes are present
    """
    _check_C(C)
    X, y = _design(data, n_features)
    if not (np.any(y == 1) and np.any(y == -1)):
        raise DegenerateInputError("binary training needs both +1 and -1 labels")
    return _fit_binary(X, y, C, tol, max_iters, seed, solver)


def _with_bias(X: sp.spmatrix) -> sp.csr_matrix:
    return sp.hstack([X, np.ones((X.shape[0], 1))], format="csr")


def _present_classes(y: np.ndarray, n_classes: int | None) -> list[int]:
    declared = range(n_classes) if n_classes is not None else sorted(set(y.tolist()))
    present = sorted(set(y.tolist()))
    for cls in declared:
        if cls not in present:
            logger.warning("class %s has no training instances, skipped", cls)
    classes = [cls for cls in declared if cls in present]
    if len(classes) < 2:
        raise DegenerateInputError(
            f"multiclass training needs at least 2 classes, got {len(classes)}"
        )
    return classes


def train_ova_matrix(
    X: sp.spmatrix,
    y: np.ndarray,
    C: float = 1.0,
    tol: float = 1e-6,
    max_iters: int = 1000,
    n_classes: int | None = None,
    bias: bool = False,
    seed: int = 0,
    solver: str = "primal_cd",
) -> LinearModel:
    _check_C(C)
    y = np.asarray(y, dtype=np.int64)
    classes = _present_classes(y, n_classes)
    X = _with_bias(X) if bias else sp.csr_matrix(X)

    rows = []
    for offset, cls in enumerate(classes):
        target = np.where(y == cls, 1, -1)
        fit = _fit_binary(X, target, C, tol, max_iters, seed + offset, solver)
        rows.append(fit.weights)
    return LinearModel(tuple(classes), np.vstack(rows), C, bias, "ova")


def train_ova(
    data: Sequence[LabeledInstance],
    C: float = 1.0,
    tol: float = 1e-6,
    max_iters: int = 1000,
    n_features: int | None = None,
    n_classes: int | None = None,
    bias: bool = False,
    seed: int = 0,
    solver: str = "primal_cd",
) -> LinearModel:
    """One binary L2-SVM per class (that class +1, the rest -1)"""
    X, y = _design(data, n_features)
    return train_ova_matrix(X, y, C, tol, max_iters, n_classes, bias, seed, solver)


def _cs_subproblem(A: float, B: np.ndarray, yi: int, C: float) -> np.ndarray:
    """Closed-form update of one instance's dual variables"""
    D = B.copy()
    D[yi] += A * C
    D = np.sort(D)[::-1]
    beta = D[0] - A * C
    r = 1
    while r < D.size and beta < r * D[r]:
        beta += D[r]
        r += 1
    beta /= r
    alpha = np.minimum(0.0, (beta - B) / A)
    alpha[yi] = min(C, (beta - B[yi]) / A)
    return alpha


def crammer_singer_loss(W: np.ndarray, x: SparseVector, y: int) -> float:
    """max(0, 1 + max_{r != y} w_r'x - w_y'x)"""
    _check_dims(W, x)
    scores = W[:, x.indices] @ x.weights
    rivals = np.delete(scores, y)
    return max(0.0, 1.0 + float(rivals.max()) - float(scores[y]))


def _cs_objective(W, X, y, C) -> float:
    scores = np.asarray(X @ W.T)
    own = scores[np.arange(len(y)), y]
    scores[np.arange(len(y)), y] = -np.inf
    hinge = np.maximum(0.0, 1.0 + scores.max(axis=1) - own)
    return 0.5 * float(np.sum(W * W)) + C * float(hinge.sum())


def train_crammer_singer_matrix(
    X: sp.spmatrix,
    y: np.ndarray,
    C: float = 1.0,
    tol: float = 1e-3,
    max_iters: int = 1000,
    n_classes: int | None = None,
    bias: bool = False,
    seed: int = 0,
) -> LinearModel:
    """Sequential dual method: one instance's class block at a time"""
    _check_C(C)
    _check_iters(max_iters)
    y = np.asarray(y, dtype=np.int64)
    classes = _present_classes(y, n_classes)
    position = {cls: i for i, cls in enumerate(classes)}
    keep = np.isin(y, classes)
    X = sp.csr_matrix(_with_bias(X) if bias else X)[keep]
    y = np.asarray([position[cls] for cls in y[keep]], dtype=np.int64)

    n, n_features = X.shape
    k = len(classes)
    W = np.zeros((k, n_features))
    alpha = np.zeros((n, k))
    sq_norms = np.asarray(X.multiply(X).sum(axis=1)).ravel()
    rng = np.random.default_rng(seed)

    converged = False
    for epoch in range(1, max_iters + 1):
        violation = 0.0
        for i in rng.permutation(n):
            A = sq_norms[i]
            if A <= 0:
                continue
            start, stop = X.indptr[i], X.indptr[i + 1]
            cols, vals = X.indices[start:stop], X.data[start:stop]
            G = W[:, cols] @ vals + 1.0
            G[y[i]] -= 1.0
            upper = np.zeros(k)
            upper[y[i]] = C
            free = alpha[i] < upper
            if free.any():
                violation = max(violation, float(G.max() - G[free].min()))
            B = G - A * alpha[i]
            new = _cs_subproblem(A, B, int(y[i]), C)
            delta = new - alpha[i]
            moved = np.abs(delta) > 1e-12
            if moved.any():
                W[np.ix_(moved, cols)] += np.outer(delta[moved], vals)
                alpha[i] = new
        if violation < tol:
            converged = True
            break

    if not converged:
        logger.warning(
            "Crammer-Singer SVM did not converge in %d epochs (violation %.3g)",
            max_iters,
            violation,
        )
    logger.debug(
        "Crammer-Singer: %d epochs, objective %.6g",
        epoch,
        _cs_objective(W, X, y, C),
    )
    return LinearModel(tuple(classes), W, C, bias, "crammer_singer")


def train_crammer_singer(
    data: Sequence[LabeledInstance],
    C: float = 1.0,
    tol: float = 1e-3,
    max_iters: int = 1000,
    n_features: int | None = None,
    n_classes: int | None = None,
    bias: bool = False,
    seed: int = 0,
) -> LinearModel:
    X, y = _design(data, n_features)
    return train_crammer_singer_matrix(X, y, C, tol, max_iters, n_classes, bias, seed)


def decision_scores(model: LinearModel, x: SparseVector) -> np.ndarray:
    if x.max_index >= model.n_features:
        raise ParameterError(
            f"feature index {x.max_index} out of range for "
            f"{model.n_features} features"
        )
    scores = model.weights[:, x.indices] @ x.weights
    if model.bias:
        scores = scores + model.weights[:, -1]
    return scores


def predict(model: LinearModel, x: SparseVector) -> tuple[int, np.ndarray]:
    """argmax_c w_c'x with the full score vector; ties go to the
    smallest class id"""
    scores = decision_scores(model, x)
    # classes are ascending, so argmax's first hit is the smallest id
    return model.classes[int(np.argmax(scores))], scores
