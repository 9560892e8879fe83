"""Dirty-derivative output feedback for controller-form LTI plants.

Closed-loop builders, explicit Lyapunov stability thresholds, a high-gain
observer baseline and reproducible noisy simulation studies.
"""

from .baselines import HighGainObserver, hgo_gains, hgo_rhs
from .certificates import (
    Thm1Certificate,
    Thm2Certificate,
    certify_thm1,
    certify_thm2,
    cross_term_constants,
    lemma2_constant,
    minimal_sigma,
    sum_square_constant,
)
from .closed_loop import (
    AugmentedSystem,
    build_aug_thm1,
    build_aug_thm2,
    error_coordinates,
    lyapunov_value,
)
from .dirty_diff import (
    DirtyChain,
    chain_outputs,
    chain_rhs,
    estimate_from_samples,
    frequency_response,
)
from .kernels import BACKEND
from .numerics import (
    Spectrum,
    eigenvalues,
    lyapunov_solve,
    matrix_power_apply,
    symmetric_extreme_eigs,
)
from .plant import (
    AdaptivePlant,
    ControllerFormPlant,
    benchmark_oscillator_rhs,
    build_matrices,
    lqr_gain,
    pole_placement_gain,
)
from .sim import (
    NoiseConfig,
    Trajectory,
    band_limited_noise,
    rk4_integrate,
    run_closed_loop_study,
    run_estimation_study,
)

__version__ = "0.1.0"
