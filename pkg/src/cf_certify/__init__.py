"""Cornish-Fisher quantile approximations with certified error intervals."""

from .bounds import (
    Bracket,
    CertifiedQuantile,
    Theorem,
    alpha_window,
    cf_coefficients,
    cornish_fisher_quantile,
    first_order_u_of_x,
    theorem1_bracket,
    theorem1_certify,
    theorem2_certify,
    theorem3_certify,
)
from .distributions import Kind, LimitDistribution
from .edgeworth import (
    ChiSquaredMixture,
    DensityFactor,
    EdgeworthModel,
    Polynomial,
    approx_cdf,
    build_correlation_model,
    build_hotelling_t0sq_model,
    build_transformed_model,
    first_order_model,
    mixture_to_density_factor,
)
from .transforms import (
    CorrelationCubic,
    HotellingSqrt,
    IdentityTransform,
    MonotoneTransform,
    NumericInverse,
    build_hotelling_transform,
)

__version__ = "0.1.0"
