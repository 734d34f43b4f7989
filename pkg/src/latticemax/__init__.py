"""Discrete Hardy-Littlewood ball averages on Z^d with matrix-valued data.

Modules: ``lattice`` (ball counts), ``multiplier`` (ball Fourier multiplier and
its approximants), ``torus`` (fields on Z_M^d), ``ncmax`` (noncommutative
maximal norms), ``maxop`` (dyadic maximal experiments), ``ergodic`` (finite
dynamical systems) and ``cli`` (batch runner).
"""

from .errors import (BudgetExceededError, ConfigError, CoverageGapError, EmbeddingError,
                     EnumerationCapError, InequalityViolation, LatticeMaxError, NotHermitianError,
                     RegimeError, ShapeMismatchError)
from .lattice import BallSpec, ball_volume, count_ball, count_volume_report, enumerate_ball
from .multiplier import (SampleSpec, exp_sum_multiplier, exp_sum_multiplier_batch, verify_decay_bound,
                         verify_origin_bound, verify_small_scale_approx)
from .torus import (TorusField, convolve_ball, dft, frequency_split, heat_semigroup, idft, laplacian,
                    modulate)
from .ncmax import cr_norm, field_lp_norm, field_maximal_norm, majorant_norm, schatten_norm
from .maxop import (DominationCheck, RegimeConfig, dyadic_radii, large_scale_domination_check,
                    maximal_family, maximal_ratio_experiment)
from .ergodic import (ShiftSystem, apply_action, bau_projection_search, ergodic_average,
                      fixed_point_expectation, transference_check)

__version__ = "0.1.0"
