"""Domain-invariant graph learning for semi-supervised domain adaptation."""

from .classifier import (AdaptiveModel, KernelConfig, RegularizationConfig,
                         decision_scores, gram, predict, train_rls, train_svm)
from .data import (LabelMaskPolicy, SyntheticShiftSpec, generate_shift_pair,
                   load_dataset, mask_labels, save_dataset, standardize)
from .experiments import (ExperimentConfig, ResultRecord, run_grid,
                          run_pipeline, sensitivity_sweep)
from .graph import (CrossDomainBlock, DomainDataset, GraphLaplacian,
                    GraphSpectrum, eigendecompose, gaussian_affinity,
                    joint_laplacian_blocks, laplacian)
from .nystrom import (ExtrapolatedBasis, InvariantGraph, SpectrumQp,
                      assemble_qp, build_invariant_graph, extrapolate_basis,
                      learn_spectrum)
from .qp import QpSolution, project_damped_cone
from .qp import solve as solve_qp

__version__ = "0.1.0"

__all__ = [
    "AdaptiveModel", "CrossDomainBlock", "DomainDataset", "ExperimentConfig",
    "ExtrapolatedBasis", "GraphLaplacian", "GraphSpectrum", "InvariantGraph",
    "KernelConfig", "LabelMaskPolicy", "QpSolution", "RegularizationConfig",
    "ResultRecord", "SpectrumQp", "SyntheticShiftSpec", "assemble_qp",
    "build_invariant_graph", "decision_scores", "eigendecompose",
    "extrapolate_basis", "gaussian_affinity", "generate_shift_pair", "gram",
    "joint_laplacian_blocks", "laplacian", "learn_spectrum", "load_dataset",
    "mask_labels", "predict", "project_damped_cone", "run_grid",
    "run_pipeline", "save_dataset", "sensitivity_sweep", "solve_qp",
    "standardize", "train_rls", "train_svm",
]
