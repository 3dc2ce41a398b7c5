"""Operator Dickman distributions D(Q, nu): sampling, characteristic
functions, moments, closure operations and Monte Carlo verification."""

from .core import (
    CFGrid,
    DickmanDistribution,
    LevyWedge,
    SampleBatch,
    convolve,
    covariance,
    finite_atom_decomposition,
    levy_wedge_mass,
    log_cf,
    mean,
    reduce_to_scalar,
    sample,
    selfdecomp_factor_logcf,
    standard_grid,
)
from .linalg import OperatorMatrix, lyapunov_solve, matrix_exp, matrix_power, validate_mplus
from .measures import (
    Atoms,
    ExponentialRadial,
    UniformSphere,
    VonMises,
    cf_amplitude,
    delta,
    parse_measure,
    sample_amplitude,
    spherical_bessel_Y,
    von_mises_density,
)
from .stats import TestReport, cf_distance, empirical_cf, energy_test, ks_test_1d
from .univariate import (
    alpha_d,
    density_convolution_check,
    dickman_density,
    gd_log_cf,
    gd_sample,
    rho_ode_solve,
)

__version__ = "0.1.0"
