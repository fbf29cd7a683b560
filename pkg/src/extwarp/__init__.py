"""Nonstationary spatial extremal dependence via deep compositional warpings.

Brown-Resnick r-Pareto processes whose semivariogram is evaluated on a
learned bijective deformation of the spatial domain, fitted by weighted
least squares on conditional exceedance probabilities or by gradient
score matching, with exact/rejection simulators, GPD margins and
bootstrap uncertainty.
"""

import jax

# Double precision everywhere; the derivative certifications and the
# Cholesky-based intensity require float64.
jax.config.update("jax_enable_x64", True)

from .geometry import AffineRecord, LocationSet, pairwise_distances, rescale_unit_square
from .risk import RiskSpec
from .dependence import BrMatrix, VariogramParams, br_matrix, semivariogram, theoretical_cep
from .warp import (
    AwUnit,
    MtUnit,
    RbfUnit,
    SrRbfUnit,
    WarpStack,
    architecture_preset,
    injectivity_check,
    stack_from_config,
)
from .margins import GpdFit, fit_gpd, fit_margins, gpd_cdf, ks_test, to_pareto_scale
from .empirics import CepMatrix, ExceedanceSet, cep_vs_distance, empirical_cep, extract_exceedances
from .losses import (
    GsmConfig,
    WlsConfig,
    br_log_intensity,
    grad_log_intensity,
    gsm_event_score,
    gsm_loss,
    hess_diag_log_intensity,
    regularized_loss,
    wls_loss,
)
from .fit import AdamState, BootstrapResult, FitConfig, FitResult, adam_step, bootstrap, fit
from .simulate import (
    SimConfig,
    extremal_function,
    gaussian_increments,
    simulate_rpareto,
    simulate_rpareto_rejection,
    simulate_site_pareto,
    simulate_sum_pareto,
)

__version__ = "0.1.0"
