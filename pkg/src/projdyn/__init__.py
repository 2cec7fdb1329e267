"""Constrained multibody dynamics through nullspace projection.

The package solves the forward dynamics of holonomically constrained
mechanical systems without Lagrange multipliers: an SVD-based projector
splits force and motion into components along and across the constraint
manifold, and an invertible constraint inertia closes the equations of
motion even where the constraint Jacobian loses rank.  On top of the
solver sit constraint-force recovery, a drift-corrected fixed-step
simulator, and a family of projected inverse-dynamics controllers.
"""

from .errors import (InvalidInputError, InvalidMetricError,
                     InvalidParameterError, ProjdynError,
                     ProjectionFailureError, RankDeficientError,
                     ScenarioError, SingularInertiaError,
                     TaskSingularityError, UncontrollableError)
from .projection import (MetricTensor, ProjectionData, curvature_product,
                         decompose, pseudo_inverse, reflection,
                         weighted_projection)
from .systems import (GeneralizedState, MechanicalSystem, TaskMap,
                      circle_state, fd_jacobian, fd_jacobian_rate,
                      make_particle_on_circle, make_slider_crank,
                      slider_crank_state)
from .dynamics import (DynamicsSolution, ModelTerms,
                       constraint_force, constraint_inertia_parameterized,
                       constraint_inertia_skew, constraint_inertia_symmetric,
                       coupling_map, forward_dynamics,
                       forward_dynamics_classical, is_decoupled, model_terms)
from .simulate import (ConstantPolicy, NRResult, SimConfig, TrajectoryLog,
                       nr_project, simulate, step, zero_policy)
from .control import (DesiredMotion, ForceControlPolicy, ForceGains,
                      HybridPolicy, MotionGains, PassiveJointMap,
                      PassiveJointPolicy, PidcPolicy, controllability_check,
                      force_control, hybrid_control, passive_joint_control,
                      passive_joint_map, pidc, weighted_pidc)
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"
