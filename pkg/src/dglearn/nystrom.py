"""Cross-domain eigenvector extrapolation and invariant-graph learning.

The target spectrum is extrapolated onto the source samples through the
cross-domain Laplacian block, the free eigenvalues of the resulting
plastic graph are fit to the source Laplacian by a small damped-cone QP,
and the minimizer defines the domain-invariant graph used as a manifold
regularizer by the classifiers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qp as qp_solver
from .graph import CrossDomainBlock, GraphLaplacian, GraphSpectrum


class DegenerateTargetGraph(ValueError):
    """Target spectrum is empty: the target graph has no usable eigenpairs."""


@dataclass(frozen=True)
class ExtrapolatedBasis:
    """Estimated source-side eigenvectors, one column per retained target pair.

    Columns are generally NOT orthonormal; extrapolation does not preserve
    orthonormality.
    """

    matrix: np.ndarray  # (n_s, r)

    @property
    def rank(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class SpectrumQp:
    """Quadratic program whose minimizer is the invariant-graph spectrum.

    q_matrix is the entrywise square of the basis Gram matrix (PSD by the
    Schur product theorem), r_vector holds the per-column quadratic forms
    against the source Laplacian, and z_matrix = I - damping * superdiag(1)
    encodes the eigenvalue-decay constraints.
    """

    q_matrix: np.ndarray
    r_vector: np.ndarray
    z_matrix: np.ndarray
    damping: float


@dataclass(frozen=True)
class InvariantGraph:
    """Learned source-sized graph: basis * diag(spectrum) * basis'."""

    matrix: np.ndarray
    learned_eigenvalues: np.ndarray


def extrapolate_basis(cross_block: CrossDomainBlock,
                      target_spectrum: GraphSpectrum) -> ExtrapolatedBasis:
    """Extrapolate target eigenvectors to source samples.

    Computes cross_block @ eigenvectors @ diag(1/eigenvalues) over the
    retained target eigenpairs.
    """
    if target_spectrum.rank == 0:
        raise DegenerateTargetGraph(
            "target spectrum is empty; cannot extrapolate a basis")
    block = np.asarray(cross_block.matrix, dtype=float)
    vecs = target_spectrum.eigenvectors
    vals = target_spectrum.eigenvalues
    if block.shape[1] != vecs.shape[0]:
        raise ValueError(
            f"cross block has {block.shape[1]} target columns but the "
            f"spectrum lives on {vecs.shape[0]} target points")
    basis = block @ (vecs / vals[None, :])
    if not np.all(np.isfinite(basis)):
        raise DegenerateTargetGraph(
            "extrapolated basis has non-finite entries "
            "(near-singular target spectrum)")
    return ExtrapolatedBasis(matrix=basis)


def assemble_qp(basis: ExtrapolatedBasis, source_lap: GraphLaplacian,
                damping: float) -> SpectrumQp:
    """Assemble the spectrum-fitting QP for a basis and source Laplacian."""
    if not (np.isfinite(damping) and damping >= 1.0):
        raise ValueError(f"damping must be >= 1; got {damping}")
    b = basis.matrix
    if b.shape[0] != source_lap.n:
        raise ValueError(
            f"basis has {b.shape[0]} rows but the source Laplacian is "
            f"{source_lap.n}x{source_lap.n}")
    gram = b.T @ b
    q = gram * gram
    q = 0.5 * (q + q.T)
    lb = source_lap.matrix @ b
    r_vec = np.sum(b * lb, axis=0)
    r = basis.rank
    z = np.eye(r) - damping * np.eye(r, k=1)
    return SpectrumQp(q_matrix=q, r_vector=r_vec, z_matrix=z, damping=damping)


def solve_spectrum_qp(spectrum_qp: SpectrumQp, tol: float = 1e-8,
                      max_iter: int | None = None) -> qp_solver.QpSolution:
    """Solve the assembled QP; returns the full certified solution."""
    return qp_solver.solve(spectrum_qp.q_matrix, spectrum_qp.r_vector,
                           spectrum_qp.damping, tol=tol, max_iter=max_iter)


def learn_spectrum(spectrum_qp: SpectrumQp) -> np.ndarray:
    """Learned eigenvalues: the minimizer of the assembled QP."""
    return solve_spectrum_qp(spectrum_qp).point


def build_invariant_graph(basis: ExtrapolatedBasis, learned: np.ndarray,
                          damping: float = 1.0) -> InvariantGraph:
    """Assemble basis * diag(learned) * basis', symmetrized.

    ``learned`` must be feasible for the damped cone: nonnegative and with
    each eigenvalue at least ``damping`` times the next, within 1e-6.
    """
    learned = np.asarray(learned, dtype=float)
    if learned.shape != (basis.rank,):
        raise ValueError(
            f"expected {basis.rank} eigenvalues, got shape {learned.shape}")
    tol = 1e-6 * max(1.0, float(np.abs(learned).max()) if learned.size else 1.0)
    if learned.size and learned.min() < -tol:
        raise ValueError(f"infeasible spectrum: min value {learned.min():.3e} < 0")
    if learned.size > 1:
        gap = learned[:-1] - damping * learned[1:]
        if gap.min() < -tol:
            raise ValueError(
                f"infeasible spectrum: damping constraint violated by {-gap.min():.3e}")
    m = (basis.matrix * learned[None, :]) @ basis.matrix.T
    m = 0.5 * (m + m.T)
    return InvariantGraph(matrix=m, learned_eigenvalues=learned)
