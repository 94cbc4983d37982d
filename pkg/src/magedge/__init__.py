"""magedge: magnetic-phase perturbations of lattice operators and their spectral edges."""

from .magnetic_phase import (
    ConstantField,
    GeneralField,
    SlowlyVaryingField,
    FieldSpec,
    Triangle,
    QuadratureRule,
    unit_field_matrix,
    flux_triangle,
    transverse_gauge_phase,
    slowly_varying_phase,
    cocycle_defect,
    area_bound_certificate,
)
from .lattice_operator import (
    Box,
    GeneralKernel,
    HoppingSymbol,
    PeierlsBuilder,
    PeierlsMatrix,
    SymbolTail,
    build_peierls_matrix,
    gauge_conjugation_check,
    recenter_kernel,
    schur_alpha_norm,
    weighted_l1,
)
from .spectral import (
    ConvergenceError,
    EdgeResult,
    SpectrumReport,
    dense_cap,
    edge,
    full_spectrum,
    truncation_study,
)
from .scaling_analysis import (
    EdgeSweep,
    FitReport,
    ModulusBound,
    ScalingCertificate,
    SweepError,
    dyadic_depth,
    fit_power,
    fit_power_log,
    midconvex_defect,
    midconvex_modulus,
    midpoint_telescope,
    norm_sweep,
    sweep_edges,
    verify_scaling_bound,
)
from .regularization import (
    Mollifier,
    autoconvolution,
    linear_term_integral,
    mollified_kernel,
    mollifier_difference_bound,
    schur_difference_certificate,
)
from .scenarios import SCENARIOS, get_scenario

__version__ = "0.1.0"
