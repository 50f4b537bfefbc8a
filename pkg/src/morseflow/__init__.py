"""Random dynamical systems on compact boxes: pullback limits, attractor-repeller
pairs, Morse decompositions and entrance-time Lyapunov functions."""

from ._accel import BACKEND
from .cocycle import (CocycleSystem, PolyField, StateBox, cocycle_residual, double_well, flow, inverse_flow,
                      make_system)
from .config import ScenarioConfig, load, parse, serialize
from .errors import (ConfigurationError, DomainError, EmptySetError, FiltrationError, HorizonError, MisuseError,
                     MorseflowError, PartitionMismatchError)
from .lyapunov import (ExtendedTime, MorseContext, PairContext, SearchWindow, entrance_time, entrance_times,
                       lyap_value, monotonicity_profile, morse_lyapunov, pair_lyapunov, tau_cocycle_check)
from .morse import (Filtration, MorseDecomposition, build_decomposition, coarsen, morse_union_identity_check,
                    repeller_of, verify_by_lyapunov)
from .noise import NoisePath, TimeGrid, evaluate, sample_wiener, shift, zero_path
from .pullback import (LimitResult, PullbackSchedule, alpha_limit, basin_estimate, invariant_hull,
                       is_forward_invariant, omega_limit, repeller_by_duality, uniform_entrance_time,
                       verify_attractor, verify_strong_neighborhood)
from .randset import (CellSet, Partition, RandomSet, complement, dilate, dist_point_set, erode, hausdorff,
                      hausdorff_semi, image_under_flow, intersect, union)
from .runner import RunReport, emit_plot_data, run

__version__ = "0.1.0"
