"""combprep: load multivariate functions into quantum registers.

Classical toolkit that compresses grid-discretized functions into matrix
product / comb tensor networks via cross interpolation, trains shallow
comb-like circuits along a warm-started interpolation schedule, compiles
them to native ZZ rotations with calibrated depolarizing noise, and runs the
measurement statistics pipeline.
"""

from .ansatz import Circuit, Su4Gate, build_comb_ansatz, su4_unitary
from .comb import CombTN, mps_to_comb
from .crossinterp import BuildResult, CrossResult, build_target, tci_error, tt_cross
from .errors import (CapacityError, ConfigError, ConvergenceError,
                     EvaluationError, StateError)
from .grids import (GridSpec, TargetSpec, decode_bits, eval_target, gaussian_spec,
                    normalized_state, ricker_spec, student_t_spec,
                    target_derivative_norm, values_on_grid)
from .measure import (ShotTable, covariance_experiment, eps_max, exact_grid_moments,
                      moments)
from .mps import MPS, fidelity, mps_amplitude, mps_overlap, mps_sample, mps_truncate
from .native import (NativeCircuit, compile_native, count_two_qubit, export_qasm,
                     parse_qasm, prune)
from .noise import (NoiseModel, depol_rate, noisy_gradient, noisy_infidelity_exact,
                    noisy_infidelity_mc)
from .pivotfit import PivotSet, cci_cost, grow_pivots, propose_pivots, run_cci
from .sim import (DenseBackend, GradientReport, MpsBackend, gradient, gradient_scan,
                  infidelity, run)
from .training import (Adam, IqspTrace, Schedule, delta_lambda_bound,
                       noise_aware_finetune, optimize_step, run_iqsp)

__version__ = "0.1.0"
