"""Constrained LQ optimal control: steady states with KKT certificates,
dissipativity storage functions and measure-turnpike checks."""
from .analysis import (analyze, control_gain_m0, has_unit_modulus_unobservable, is_detectable,
                       kernel_basis_steady, steady_cost_positive_definite,
                       unobservable_eigenvalues)
from .constraints import Box, ConstraintSet, FullSpace, Halfspace, NormBox, SecondOrderCone
from .dissipativity import (StorageCertificate, build_storage, certify, find_storage_matrix,
                            lmi_margin, max_dissipation_rate, verify_strict_dissipativity)
from .errors import (ConfigError, DimensionError, HypothesisViolatedError, InfeasibleError,
                     InfeasibleSteadyStateError, LQTurnpikeError, NoFeasibleRateError,
                     NonConvergenceError, NotDecayingError, NotPDError, NotPSDError,
                     SingularReducedHessianError, StorageInfeasibleError)
from .model import Problem, Trajectory, is_admissible, rollout, stage_cost
from .ocp import brute_oracle, condense, solve_ocp
from .scenarios import SCENARIOS, cone_feedback, example_cone, example_rotation_box
from .steady import (global_steady_state, kkt_certificate, solve_steady_state, verify_kkt)
from .turnpike import (build_witness, cost_gap_bound, exceedance_count, fit_exponential_decay,
                       regularize_control, simulate_policy, turnpike_bound, turnpike_scan)

__version__ = "0.1.0"
