"""Adaptive semi-supervised classifiers over a learned invariant graph.

Two instantiations of the same regularized objective: squared loss with a
closed-form coefficient solve, and hinge loss through its box-constrained
dual. Both expand the decision function over all source samples via the
Representer theorem, so a trained model carries its coefficient matrix,
per-class bias, and the training features needed to kernelize new points.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .graph import DomainDataset, gaussian_affinity
from .nystrom import InvariantGraph


class SingularSystemError(RuntimeError):
    """The training linear system was singular or numerically unsolvable."""


class DualNonConvergence(RuntimeError):
    """SMO exhausted its pass budget before meeting the KKT tolerance."""


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel bandwidth for the Gram matrix."""

    bandwidth: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError(f"bandwidth must be > 0; got {self.bandwidth}")


@dataclass(frozen=True)
class RegularizationConfig:
    """lambda1 weights model complexity, lambda2 the geometric adaptation."""

    lambda1: float
    lambda2: float

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("regularization weights must be nonnegative")


@dataclass
class AdaptiveModel:
    """Representer-expansion classifier: score = coefficients' K(train, x) + bias."""

    coefficients: np.ndarray      # (n_s, C)
    bias: np.ndarray              # (C,), zero for the squared-loss model
    training_features: np.ndarray  # (m, n_s)
    kernel: KernelConfig
    kind: str                     # "rls" or "svm"
    reg: RegularizationConfig

    def __post_init__(self):
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("non-finite model coefficients")
        if self.coefficients.shape[0] != self.training_features.shape[1]:
            raise ValueError("one coefficient row per training sample required")


def gram(features: np.ndarray, kernel: KernelConfig) -> np.ndarray:
    """Gaussian Gram matrix over the sample columns: symmetric PSD, unit diagonal."""
    return gaussian_affinity(features, features, kernel.bandwidth)


def median_bandwidth(features: np.ndarray) -> float:
    """Median pairwise distance, a scale heuristic for raw (unstandardized) features."""
    x = np.asarray(features, dtype=float)
    sq = (
        np.sum(x * x, axis=0)[:, None]
        + np.sum(x * x, axis=0)[None, :]
        - 2.0 * (x.T @ x)
    )
    np.maximum(sq, 0.0, out=sq)
    d = np.sqrt(sq[np.triu_indices(x.shape[1], k=1)])
    med = float(np.median(d)) if d.size else 1.0
    return med if med > 0 else 1.0


def one_hot_labels(dataset: DomainDataset) -> np.ndarray:
    """Label matrix (C, n) with y_c = 1 when the sample's label is c, else 0.

    Unknown labels give all-zero columns; the labeled selector masks them
    out of every loss anyway.
    """
    c = dataset.n_classes
    y = np.zeros((c, dataset.n_samples))
    known = dataset.labels >= 0
    y[dataset.labels[known], np.flatnonzero(known)] = 1.0
    return y


def _training_pieces(source: DomainDataset, graph: InvariantGraph | None,
                     reg: RegularizationConfig, kernel: KernelConfig):
    source.require_training_layout()
    l = source.n_labeled
    if l < 1:
        raise ValueError("training requires at least one labeled sample")
    if graph is None and reg.lambda2 != 0.0:
        raise ValueError("lambda2 > 0 requires an invariant graph")
    if graph is not None and graph.matrix.shape[0] != source.n_samples:
        raise ValueError("invariant graph size must match the source sample count")
    k = gram(source.features, kernel)
    return l, k


def train_rls(source: DomainDataset, graph: InvariantGraph | None,
              reg: RegularizationConfig, kernel: KernelConfig) -> AdaptiveModel:
    """Closed-form squared-loss training.

    Solves ((J + lambda2*l*Lbar) K + lambda1*l*I) alpha = J Y' as a single
    LU-factorized linear system (no explicit inverse), where J selects the
    leading labeled block and Y is the one-hot label matrix. With lambda2=0
    this is exactly kernel ridge regression on the labeled block.
    """
    l, k = _training_pieces(source, graph, reg, kernel)
    n = source.n_samples
    j_diag = np.zeros(n)
    j_diag[:l] = 1.0

    a = j_diag[:, None] * k
    if reg.lambda2 != 0.0:
        a = a + (reg.lambda2 * l) * (graph.matrix @ k)
    a[np.diag_indices(n)] += reg.lambda1 * l

    rhs = one_hot_labels(source).T
    rhs[l:, :] = 0.0
    try:
        lu, piv = scipy.linalg.lu_factor(a)
        alpha = scipy.linalg.lu_solve((lu, piv), rhs)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError(
            f"singular training system (cond ~ {np.linalg.cond(a):.3e})") from exc
    if not np.all(np.isfinite(alpha)):
        raise SingularSystemError(
            f"training system numerically singular (cond ~ {np.linalg.cond(a):.3e})")
    return AdaptiveModel(
        coefficients=alpha,
        bias=np.zeros(alpha.shape[1]),
        training_features=source.features.copy(),
        kernel=kernel,
        kind="rls",
        reg=reg,
    )


def rls_objective(alpha: np.ndarray, source: DomainDataset,
                  graph: InvariantGraph | None, reg: RegularizationConfig,
                  kernel: KernelConfig) -> float:
    """Training objective of the squared-loss model, for audits.

    (1/l) ||(Y - alpha'K) J||_F^2 + lambda1 tr(alpha'K alpha)
                                  + lambda2 tr(alpha'K Lbar K alpha).
    """
    l = source.n_labeled
    k = gram(source.features, kernel)
    y = one_hot_labels(source)
    resid = (y - alpha.T @ k)[:, :l]
    value = float(np.sum(resid * resid)) / l
    ka = k @ alpha
    value += reg.lambda1 * float(np.sum(alpha * ka))
    if reg.lambda2 != 0.0:
        value += reg.lambda2 * float(np.sum(ka * (graph.matrix @ ka)))
    return value


@dataclass
class SmoInfo:
    iterations: int
    passes: int
    max_violation: float
    objective_per_pass: list[float]


def smo_solve(q: np.ndarray, y: np.ndarray, box: float,
              tol: float = 1e-5, max_passes: int = 200) -> tuple[np.ndarray, SmoInfo]:
    """Maximize sum(beta) - 0.5 beta'Q beta s.t. y'beta = 0, 0 <= beta <= box.

    Pairwise coordinate ascent on the maximal-violating pair. One pass is
    len(y) pair updates; iteration stops when the largest KKT violation
    falls below ``tol``.
    """
    l = y.size
    beta = np.zeros(l)
    grad = -np.ones(l)  # gradient of the minimization form 0.5 b'Qb - sum(b)
    eps = 1e-12
    history: list[float] = []
    iters = 0
    max_updates = max_passes * l

    def dual_value():
        return float(beta.sum() - 0.5 * (beta @ (q @ beta)))

    violation = np.inf
    while iters < max_updates:
        up = ((y > 0) & (beta < box - eps)) | ((y < 0) & (beta > eps))
        low = ((y > 0) & (beta > eps)) | ((y < 0) & (beta < box - eps))
        if not up.any() or not low.any():
            violation = 0.0
            break
        crit = -y * grad
        i = int(np.flatnonzero(up)[np.argmax(crit[up])])
        j = int(np.flatnonzero(low)[np.argmin(crit[low])])
        violation = crit[i] - crit[j]
        if violation <= tol:
            break
        curv = max(q[i, i] + q[j, j] - 2.0 * y[i] * y[j] * q[i, j], 1e-12)
        delta = violation / curv
        # Box limits along the feasible pair direction (+y_i e_i, -y_j e_j).
        delta = min(delta,
                    (box - beta[i]) if y[i] > 0 else beta[i],
                    beta[j] if y[j] > 0 else (box - beta[j]))
        beta[i] += y[i] * delta
        beta[j] -= y[j] * delta
        grad += delta * (y[i] * q[:, i] - y[j] * q[:, j])
        iters += 1
        if iters % l == 0:
            history.append(dual_value())
    else:
        raise DualNonConvergence(
            f"SMO exceeded {max_passes} passes (violation {violation:.3e})")
    history.append(dual_value())
    return beta, SmoInfo(iterations=iters, passes=iters // l + 1,
                         max_violation=float(max(violation, 0.0)),
                         objective_per_pass=history)


def train_svm(source: DomainDataset, graph: InvariantGraph | None,
              reg: RegularizationConfig, kernel: KernelConfig) -> AdaptiveModel:
    """Hinge-loss training through the Lagrange dual, one-vs-rest per class.

    Per class the dual Hessian is Yhat Jhat K (2*lambda1 I +
    2*lambda2 Lbar K)^{-1} Jhat' Yhat over the labeled block; the dual is
    solved by SMO under sum(beta_i y_i) = 0, 0 <= beta <= 1/l, and the
    expansion coefficients are recovered through the same LU factorization.
    A one-vs-rest split whose labeled block is single-class yields a
    constant scorer for that class (with a warning).
    """
    l, k = _training_pieces(source, graph, reg, kernel)
    n = source.n_samples
    c = source.n_classes

    b_mat = 2.0 * reg.lambda1 * np.eye(n)
    if reg.lambda2 != 0.0:
        b_mat += 2.0 * reg.lambda2 * (graph.matrix @ k)
    try:
        lu_piv = scipy.linalg.lu_factor(b_mat)
        s = scipy.linalg.lu_solve(lu_piv, k, trans=1).T  # K B^{-1}
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError(
            f"singular dual system (cond ~ {np.linalg.cond(b_mat):.3e})") from exc
    s_ll = 0.5 * (s[:l, :l] + s[:l, :l].T)

    labels = source.labels[:l]
    alpha = np.zeros((n, c))
    bias = np.zeros(c)
    box = 1.0 / l
    for cls in range(c):
        y = np.where(labels == cls, 1.0, -1.0)
        if np.all(y > 0) or np.all(y < 0):
            warnings.warn(
                f"one-vs-rest split for class {cls} has single-class labels; "
                "returning a constant scorer for it", RuntimeWarning)
            bias[cls] = 1.0 if y[0] > 0 else -1.0
            continue
        q = s_ll * np.outer(y, y)
        beta, _ = smo_solve(q, y, box)
        rhs = np.zeros(n)
        rhs[:l] = y * beta
        alpha[:, cls] = scipy.linalg.lu_solve(lu_piv, rhs)
        bias[cls] = _kkt_bias(k, alpha[:, cls], y, beta, box, l)

    return AdaptiveModel(
        coefficients=alpha,
        bias=bias,
        training_features=source.features.copy(),
        kernel=kernel,
        kind="svm",
        reg=reg,
    )


def _kkt_bias(k, alpha_col, y, beta, box, l):
    """Bias from the KKT conditions of the hinge dual.

    Free support vectors pin y_i (f_i + b) = 1 exactly; with none at hand,
    bound constraints leave an interval for b and its midpoint is used.
    """
    f = (k @ alpha_col)[:l]
    margin = y - f  # candidate b values: b = y_i - f_i on free vectors
    eps = 1e-8
    free = (beta > eps) & (beta < box - eps)
    if free.any():
        return float(margin[free].mean())
    lo, hi = -np.inf, np.inf
    for i in range(l):
        if (beta[i] <= eps and y[i] > 0) or (beta[i] >= box - eps and y[i] < 0):
            lo = max(lo, margin[i])
        else:
            hi = min(hi, margin[i])
    if np.isfinite(lo) and np.isfinite(hi):
        return float(0.5 * (lo + hi))
    if np.isfinite(lo):
        return float(lo)
    if np.isfinite(hi):
        return float(hi)
    return 0.0


def decision_scores(model: AdaptiveModel, queries: np.ndarray) -> np.ndarray:
    """Per-class scores (C, q) of the Representer expansion on query columns."""
    queries = np.asarray(queries, dtype=float)
    if queries.shape[0] != model.training_features.shape[0]:
        raise ValueError(
            f"query feature dimension {queries.shape[0]} does not match "
            f"training dimension {model.training_features.shape[0]}")
    cross = gaussian_affinity(model.training_features, queries,
                              model.kernel.bandwidth)
    return model.coefficients.T @ cross + model.bias[:, None]


def predict(model: AdaptiveModel, queries: np.ndarray) -> np.ndarray:
    """Predicted dense class ids; ties resolve to the lowest class index."""
    return np.argmax(decision_scores(model, queries), axis=0)


def save_model_record(model: AdaptiveModel, path) -> None:
    """Write the flat numeric model record.

    Line 1: kind. Line 2: bandwidth lambda1 lambda2. Line 3: n_s C.
    Then n_s lines of C coefficients (row-major), then one line of C biases.
    """
    n, c = model.coefficients.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{model.kind}\n")
        fh.write(f"{model.kernel.bandwidth:.17g} {model.reg.lambda1:.17g} "
                 f"{model.reg.lambda2:.17g}\n")
        fh.write(f"{n} {c}\n")
        for row in model.coefficients:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        fh.write(" ".join(f"{v:.17g}" for v in model.bias) + "\n")


def load_model_record(path) -> dict:
    """Read back a flat model record written by :func:`save_model_record`."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    kind = lines[0]
    bandwidth, lambda1, lambda2 = (float(t) for t in lines[1].split())
    n, c = (int(t) for t in lines[2].split())
    coef = np.array([[float(t) for t in lines[3 + i].split()] for i in range(n)])
    bias = np.array([float(t) for t in lines[3 + n].split()])
    if coef.shape != (n, c) or bias.shape != (c,):
        raise ValueError("malformed model record")
    return {"kind": kind, "bandwidth": bandwidth, "lambda1": lambda1,
            "lambda2": lambda2, "coefficients": coef, "bias": bias}
