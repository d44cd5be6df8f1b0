"""Bayesian multicategory support vector machine.

MAP training of the multi-class hinge objective, a data-augmentation
MCMC sampler over the full hierarchical model, and posterior-averaged
prediction, with leave-one-out and random-split benchmark protocols and
a batch CLI.
"""

__version__ = "0.1.0"

from .data import EvalResult, RawDataset, StandardizationStats, leave_one_out, load_csv, random_splits, standardize
from .kernels import (
    AugmentedKernel,
    CenteringMatrix,
    KernelMatrix,
    build_kernel_matrix,
    chol_solve_spd,
    gaussian_kernel,
    log_pseudo_det,
    pseudo_inverse,
)
from .map_fit import MapConfig, map_fit, primal_objective
from .model import (
    Coefficients,
    Hyperparams,
    LatentState,
    TrainingSet,
    alt_class_probabilities,
    complete_Z,
    hinge,
    log_prior_W,
    log_prior_beta,
    neg_log_likelihood,
)
from .predict import Prediction, classify, classify_batch, decision_values, posterior_not_class_scores
from .sampler import (
    ChainState,
    KernelWorkspace,
    PosteriorSamples,
    SamplerSchedule,
    draw_betas,
    draw_sigma2,
    draw_tau,
    init_state,
    mh_update_theta,
    mh_update_z,
    run_chain,
)

__all__ = [name for name in dir() if not name.startswith("_")]
