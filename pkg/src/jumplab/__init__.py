"""Numerical laboratory for symmetric jump-diffusions.

The package builds models of the form "uniformly elliptic divergence-form
diffusion + symmetric jump kernel", simulates their paths, computes
deterministic lattice heat kernels, and verifies two-sided heat-kernel
envelopes, exit/hitting estimates, Harnack ratios and Hoelder moduli
at desk scale.
"""

from .scaling import (
    MixtureMeasure,
    ScaleFunction,
    check_scaling_conditions,
    mixed_stable_phi,
    power_scale,
    scale_from_record,
    scale_to_record,
)
from .kernels import (
    DiffusionField,
    JumpKernel,
    Model,
    ModelError,
    ValidationError,
    check_j_integrability,
    check_j_lower_bound,
    check_ujs,
    check_uniform_ellipticity,
    divergence_drift,
    jump_intensity_tail,
    small_jump_moments,
)
from .models import MODEL_ZOO, load_model, model_from_record, model_to_record
from .bounds import (
    EnvelopeConstants,
    RegionReport,
    classify_region,
    crossover_radius,
    davies_minimized_bound,
    davies_truncated_bound,
    envelope,
    gaussian_situation_form,
    optimized_F,
    p_c,
    p_j,
    polynomial_situation_form,
    region_sweep,
)
from .oracle import (
    HeatVector,
    LatticeGenerator,
    build_generator,
    chapman_kolmogorov_check,
    evolve,
    evolve_many,
    form_comparability_check,
    killed_kernel,
    killed_kernel_many,
    weighted_poincare_check,
)
from .simulator import (
    PathEnsemble,
    SimConfig,
    exit_statistics,
    hitting_tail,
    levy_system_check,
    sample_big_jump,
    simulate_paths,
)
from . import estimators

__version__ = "0.1.0"
