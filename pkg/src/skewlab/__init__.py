"""Hyperbolic toral skew products over rotations and Sturmian shifts.

Exact orbit arithmetic, specification shadowing, entropy estimates from
separated sets, and constructions of points with oscillating Birkhoff
averages.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .numerics import Mode, NumericsContext, DOUBLE
from .driving import (RotationNumber, CircleAngle, SturmianState, RotationDriver,
                      SturmianDriver, make_driver, rotate, sturmian_symbol)
from .fiber import (TorusPoint, HyperbolicMatrix, CAT_MAP, AffineFiberFamily,
                    PositiveCocycleFamily, eigen_split, torus_distance, apply_fiber,
                    finite_time_splitting)
from .fixed import FixedPoint
from .orbit import (SkewSystem, Observable, BirkhoffTrace, iterate, orbit_array,
                    bowen_distance, birkhoff_sums, birkhoff_trace, batch_averages)
from .shadow import (Specification, GapBudget, gap_function, shadow_specification,
                     verify_shadowing, ShadowResult)
from .entropy import (CandidateGrid, SeparatedSet, DeviationQuery, RateFit, max_separated,
                      deviation_count, certify_separated, entropy_rate, lyapunov_exponent)
from .moran import (MoranSchedule, IrregularCertificate, DenseVariantResult, build_schedule,
                    construct_irregular, construct_dense_variant)
