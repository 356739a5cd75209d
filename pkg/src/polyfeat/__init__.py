"""polyfeat: low-dimensional polynomial feature maps for function families.

Learns nonlinear feature maps g(x) = G^T Phi(x) over a polynomial
dictionary by minimizing a quadratic surrogate of the gradient-projection
loss, which reduces to a symmetric-definite generalized eigenproblem.
Also ships grouped/tensorized variants (two-group SVD, HOSVD), a kernel
ridge regression stage, and a reproducible benchmark harness.
"""

__version__ = "0.1.0"

from .bench import ExperimentConfig, UaOracle, feature_rank_demo, run_baseline, run_experiment, run_sur
from .grouped import (
    CoefficientTensor,
    GroupBasis,
    GroupPartition,
    bilinear_error,
    grouped_gradient_loss,
    hosvd,
    hosvd_near_optimality_check,
    project_coefficients,
    two_group_svd,
)
from .losses import (
    LossReport,
    deviation_bound,
    gradient_loss,
    loss_report,
    projection_norm_identity,
    projector,
    regression_error,
    surrogate_loss,
    truncated_gradient_loss,
)
from .polybasis import FeatureMap, PolynomialBasis, PolynomialMap, orthonormalize
from .regression import KrrModel, cross_validate, krr_fit, krr_predict
from .sampling import BoxDomain, TensorizedSample, build_tensorized, latin_hypercube, sample_uniform
from .surrogate import (
    ConditionalSpectrum,
    GradientOracle,
    SurrogatePencil,
    assemble_pencil,
    estimate_conditional_spectrum,
    minimize_surrogate,
    tail_energy,
)

__all__ = [name for name in dir() if not name.startswith("_")]
