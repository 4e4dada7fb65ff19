"""Gaussian affinity graphs, unnormalized Laplacians, and their spectra.

Everything here is dense: the intended scale is a few thousand samples,
where the cubic eigendecomposition is cheap and sparsity buys nothing.
All functions are pure; datasets and graphs are never mutated in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

UNKNOWN_LABEL = -1


@dataclass
class DomainDataset:
    """A single domain: features plus (possibly partial) labels.

    Parameters
    ----------
    features : ndarray, shape (m, n)
        One sample per column.
    labels : ndarray of int, shape (n,)
        Dense class ids in [0, C); ``UNKNOWN_LABEL`` (-1) marks unknowns.
    labeled_mask : ndarray of bool, shape (n,)
        True where the label is visible to training.
    name : str
        Free-form tag used in logs and result tables.
    label_names : tuple of int, optional
        Original label values, indexed by dense id. None means the dense
        ids are the original values.
    true_labels : ndarray of int, optional
        Ground truth retained after masking, for evaluation only. Training
        code must never read this field.
    """

    features: np.ndarray
    labels: np.ndarray
    labeled_mask: np.ndarray
    name: str = ""
    label_names: tuple[int, ...] | None = None
    true_labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.labeled_mask = np.asarray(self.labeled_mask, dtype=bool)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-d (m, n); got shape {self.features.shape}")
        n = self.features.shape[1]
        if n < 1:
            raise ValueError("dataset needs at least one sample")
        if self.labels.shape != (n,) or self.labeled_mask.shape != (n,):
            raise ValueError("labels and labeled_mask must have one entry per sample")
        if not np.all(np.isfinite(self.features)):
            raise ValueError(f"non-finite feature values in dataset {self.name!r}")
        if np.any(self.labels[self.labeled_mask] < 0):
            raise ValueError("labeled_mask marks a sample whose label is unknown")

    @property
    def n_samples(self) -> int:
        return self.features.shape[1]

    @property
    def n_features(self) -> int:
        return self.features.shape[0]

    @property
    def n_labeled(self) -> int:
        return int(self.labeled_mask.sum())

    @property
    def n_classes(self) -> int:
        if self.label_names is not None:
            return len(self.label_names)
        known = self.labels[self.labels >= 0]
        if known.size == 0:
            raise ValueError("cannot infer class count from a fully unlabeled dataset")
        return int(known.max()) + 1

    def fully_labeled(self) -> bool:
        return bool(self.labeled_mask.all())

    def require_training_layout(self):
        """Check the labeled-first column ordering the selector matrices assume."""
        l = self.n_labeled
        if not self.labeled_mask[:l].all():
            raise ValueError("training requires all labeled columns before unlabeled ones")


@dataclass(frozen=True)
class GraphLaplacian:
    """Unnormalized Laplacian L = D - W of a dense Gaussian affinity graph."""

    matrix: np.ndarray
    sigma: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class CrossDomainBlock:
    """Source-rows x target-columns block of a joint two-domain Laplacian.

    The joint degree matrix is diagonal, so the block is entrywise the
    negated cross-domain affinity: every entry is <= 0.
    """

    matrix: np.ndarray


@dataclass(frozen=True)
class GraphSpectrum:
    """Truncated eigensystem of a Laplacian, eigenvalues sorted descending."""

    eigenvectors: np.ndarray  # (n, r), column-orthonormal
    eigenvalues: np.ndarray   # (r,), descending, all > 0 after truncation

    @property
    def rank(self) -> int:
        return self.eigenvalues.size


def gaussian_affinity(features_a: np.ndarray, features_b: np.ndarray,
                      sigma: float = 1.0) -> np.ndarray:
    """Pairwise Gaussian affinities exp(-||a_i - b_j||^2 / (2 sigma^2)).

    Parameters
    ----------
    features_a : ndarray, shape (m, p)
    features_b : ndarray, shape (m, q)
        Samples are columns; both matrices must share the feature dimension m.
    sigma : float
        Kernel bandwidth, > 0.

    Returns
    -------
    ndarray, shape (p, q), entries in (0, 1].
    """
    a = np.asarray(features_a, dtype=float)
    b = np.asarray(features_b, dtype=float)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("feature matrices must be 2-d (features x samples)")
    if a.shape[0] != b.shape[0]:
        raise ValueError(
            f"feature dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    if not (np.isfinite(sigma) and sigma > 0):
        raise ValueError(f"sigma must be a positive real; got {sigma}")
    if not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
        raise ValueError("non-finite feature values")

    # ||a-b||^2 = ||a||^2 + ||b||^2 - 2 a.b; clip round-off negatives.
    sq = (
        np.sum(a * a, axis=0)[:, None]
        + np.sum(b * b, axis=0)[None, :]
        - 2.0 * (a.T @ b)
    )
    np.maximum(sq, 0.0, out=sq)
    if a is b:
        np.fill_diagonal(sq, 0.0)
    return np.exp(-sq / (2.0 * sigma * sigma))


def laplacian(features: np.ndarray, sigma: float = 1.0) -> GraphLaplacian:
    """Build L = D - W with W the Gaussian affinity matrix of the samples.

    D is diagonal with D_ii = sum_j W_ij, so each row of L sums to zero and
    the unit self-affinity cancels out of the diagonal.
    """
    w = gaussian_affinity(features, features, sigma)
    lap = np.diag(w.sum(axis=1)) - w
    lap = 0.5 * (lap + lap.T)
    return GraphLaplacian(matrix=lap, sigma=sigma)


def joint_laplacian_blocks(source: DomainDataset, target: DomainDataset,
                           sigma: float = 1.0) -> tuple[GraphLaplacian, CrossDomainBlock]:
    """Laplacian over the concatenation [source, target] plus its cross block.

    Columns are ordered source-first, target-second; the returned block is
    L[0:n_s, n_s:] of the joint Laplacian, i.e. the negated cross affinity.
    """
    if source.n_features != target.n_features:
        raise ValueError(
            f"feature dimension mismatch: source {source.n_features}, "
            f"target {target.n_features}")
    stacked = np.hstack([source.features, target.features])
    lap = laplacian(stacked, sigma)
    n_s = source.n_samples
    return lap, CrossDomainBlock(matrix=lap.matrix[:n_s, n_s:].copy())


def eigendecompose(lap: GraphLaplacian, rank_tolerance: float = 1e-8) -> GraphSpectrum:
    """Full symmetric eigendecomposition with descending order and rank cut.

    Eigenpairs with eigenvalue < rank_tolerance * max_eigenvalue are dropped;
    every Laplacian is singular (the all-ones null vector), and downstream
    use inverts the retained eigenvalues, so the cut realizes pseudo-inverse
    semantics. An all-zero Laplacian yields an empty spectrum (rank 0).

    Each eigenvector is sign-normalized so its largest-magnitude entry is
    positive, making the output deterministic.
    """
    m = np.asarray(lap.matrix, dtype=float)
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m - m.T).max() > 1e-8 * scale:
        raise ValueError("eigendecompose requires a symmetric matrix (beyond 1e-8)")
    vals, vecs = scipy.linalg.eigh(m)  # ascending
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    max_val = vals[0] if vals.size else 0.0
    if max_val <= 0.0:
        keep = np.zeros(0, dtype=int)
    else:
        keep = np.flatnonzero(vals >= rank_tolerance * max_val)
    vals = vals[keep]
    vecs = np.ascontiguousarray(vecs[:, keep])
    for j in range(vecs.shape[1]):
        pivot = np.argmax(np.abs(vecs[:, j]))
        if vecs[pivot, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return GraphSpectrum(eigenvectors=vecs, eigenvalues=vals)


def copy_with(dataset: DomainDataset, **changes) -> DomainDataset:
    """Dataclass replace() that keeps validation on the new instance."""
    return replace(dataset, **changes)
