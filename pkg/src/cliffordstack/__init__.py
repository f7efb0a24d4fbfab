"""Stacked Clifford-torus surfaces in the 3-sphere.

Numerical realization of N-fold torus stackings joined by catenoidal necks:
balancing of the neck radii, explicit assembly of the initial surfaces,
exact curvature and Killing-flux evaluation, inversion of the linearized
operator modulo its extended substitute kernel, and the outer parameter
relaxation loop.
"""

from .balancing import (StackConfig, BalancedLayout, NonConvergenceError,
                        poly_eval, gamma_root, limit_ratios, solve_balance,
                        stack_layout)
from .charts import (phi_map, pullback_metric, killing_field,
                     killing_field_ambient, group_enumerate, SymmetryElement)
from .cutoffs import Cutoff, cutoff_eval, smoothstep
from .surface import SurfaceAtlas, ChartPoint, height_profile, reparam_lambda
from .extrinsic import (GeometryJet, ExtrinsicData, DecayNormSpec, jet_eval,
                        extrinsic, perturbed_extrinsic, jacobi_apply,
                        weighted_norm)

__version__ = "0.1.0"
