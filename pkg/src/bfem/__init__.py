"""Bayesian Fisher-EM: clustering in a discriminative latent subspace."""

from .exceptions import *  # noqa: F401,F403
from .fisher import fstep_odv, fstep_svd, soft_between_scatter, total_scatter
from .inference import (
    FitConfig,
    FitResult,
    aitken_converged,
    elbo,
    empirical_bayes,
    fit,
    initialize,
    m_step,
    predict,
    predict_tau,
    ve_step,
    ve_step_mu,
    ve_step_tau,
)
from .denoise import GrayImage, denoise_image, extract_patches, read_pgm, reconstruct_image, write_pgm
from .io import load_model, read_labels, read_matrix, save_model, write_labels, write_matrix
from .kmeans import kmeans
from .metrics import ari, psnr, snr_db
from .model import (
    ALL_SPECS,
    SPEC_CODES,
    Dims,
    Hyperparams,
    ModelParams,
    SigmaStructure,
    SubmodelSpec,
    VariationalState,
    enforce_constraints,
    free_param_count,
    marginal_covariance,
)
from .selection import SelectionResult, icl, select
from .simulate import gen_chang, gen_subspace

__version__ = "0.1.0"
