"""Explicit negative-weight adversary matrices for the k-orthogonal-array problem."""

__version__ = "0.1.0"

from .arrays import (
    ArrayAssignment,
    OrthogonalArray,
    distinctness_array,
    evaluate_f,
    ksum_array,
    verify_oa,
)
from .construction import (
    AdversaryInstance,
    AlphaSchedule,
    LegalColumnMask,
    build_alphas,
    build_F,
    build_gamma_tilde,
    build_gamma_tilde_1,
    build_gtilde,
    delta_hadamard,
    legal_mask,
    make_instance,
    restrict_columns,
)
from .hamming import EigenBasis, elementary_projectors, make_eigenbasis, weight_projector
from .operators import InvalidParameterError, StructuredOperator, TooLargeError, apply, dense
from .reduction import certify_reduction, symmetrize
from .spectral import (
    LemmaReport,
    NormResult,
    adversary_value,
    lemma_bounds,
    spectral_norm_dense,
    spectral_norm_iter,
    witness_lower_bound,
)
