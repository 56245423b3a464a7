"""B-spline copula estimation: penalized EM fitting, selection, sampling."""

from .basis import BasisSystem, basis_integrals, build_uniform_basis, design_matrix, \
    eval_bspline, eval_cdf, eval_density
from .copula import CopulaModel, ParamTensor, cdf, density, diagonal_model, \
    independence_model, load_model, model_from_arrays, save_model, validate
from .em import FitConfig, FitReport, ScadParams, e_step, fit, fit_nd, init_param, \
    m_step, mean_loglik, penalized_loglik, scad, scad_deriv, solve_multipliers
from .margins import MarginalModel, ecdf_rescaled, fit_margin, joint_density, \
    kde_density, normal_cdf, normal_quantile, pseudo_observations
from .sample import SamplerConfig, SamplerStats, baker_trivariate, generate_study_data, \
    max_density, rejection_sample, trivariate_block_model, uniform_ks_statistic
from .select import SelectionGrid, SelectionReport, cross_validate, mse, \
    mse_joint_density, pseudo_aic, select_size

__all__ = [name for name in dir() if not name.startswith("_")]
