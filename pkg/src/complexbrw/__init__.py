"""Complex additive martingales of branching random walks.

Simulation of the walk and its martingales, classification of complex
parameters into convergence regions, and empirical convergence diagnostics.
"""
from .exceptions import (
    BRWError, ConfigError, DimensionMismatch, DomainError, InsufficientData, InvalidModel,
    MonotonicityViolation, NoUnitEigenvalue, NotNormalized, PopulationCapExceeded,
    SearchExhausted, ZeroTransform,
)
from .models import (
    DIVERGENT, GaussianBinary, LatticePathological, OffspringModel, TableModel, laplace_mc,
    make_model,
)
from .charfun import alpha_root, c3_check, f_ratio, log_moment_functional, ratio_curve
from .classifier import Region, RegionVerdict, check_c2, classify, classify_many, prop1_conditions
from .simulator import (
    Generation, MartingaleTrace, martingale, run, simulate_ensemble, step, sup_weight_tail,
    truncated_run, w_martingale,
)
from .spine import SpinePath, dri_check, duality_check, ladder_epochs, spine_expectation, spine_sample
from .tvfun import TVFunction, ell, phi, select_u0
from .similarity import (
    Similarity, SimilarityModel, complex_to_similarity, compose, mean_matrix_eigvec,
    vector_martingale,
)
from .diagnostics import convergence_verdict, fixed_point_selfconsistency, tail_survey
from .phase import GridSpec, PhaseGrid, phase_raster, render

__version__ = "0.1.0"
