"""Multi-view kernel completion: jointly fill entire missing rows/columns
of several kernel matrices by learning within-view reconstruction weights
and between-view convex-combination relationships."""

from .baselines import KnnConfig, knn_impute
from .data import KernelMatrix, MultiViewDataset, ViewMask, apply_mask
from .harness import AreReport, ExperimentPlan, are, eigenspectrum, emit_tables, run_experiment
from .io import load_dataset, save_dataset
from .kernels import KernelKind, compute_kernel, normalize_kernel
from .numerics import (
    LineSearchConfig,
    SimplexQPProblem,
    backtracking_step,
    project_psd,
    project_simplex,
    prox_l21_row,
    solve_simplex_ls,
)
from .solvers import (
    CompletionResult,
    SolverConfig,
    fit,
    fit_app,
    fit_embd_hm,
    fit_embd_ht,
    fit_sdp,
    l21_norm,
    loss_between_kernels,
    loss_between_weights,
    loss_within,
    reconstruct_kernel,
)
from .synthetic import MissingnessPlan, ToyRecipe, generate_toy, induce_missing

__all__ = [
    "AreReport",
    "CompletionResult",
    "ExperimentPlan",
    "KernelKind",
    "KernelMatrix",
    "KnnConfig",
    "LineSearchConfig",
    "MissingnessPlan",
    "MultiViewDataset",
    "SimplexQPProblem",
    "SolverConfig",
    "ToyRecipe",
    "ViewMask",
    "apply_mask",
    "are",
    "backtracking_step",
    "compute_kernel",
    "eigenspectrum",
    "emit_tables",
    "fit",
    "fit_app",
    "fit_embd_hm",
    "fit_embd_ht",
    "fit_sdp",
    "generate_toy",
    "induce_missing",
    "knn_impute",
    "l21_norm",
    "load_dataset",
    "loss_between_kernels",
    "loss_between_weights",
    "loss_within",
    "normalize_kernel",
    "project_psd",
    "project_simplex",
    "prox_l21_row",
    "reconstruct_kernel",
    "run_experiment",
    "save_dataset",
    "solve_simplex_ls",
]
