"""Exponentially weighted least-squares state estimation.

Batch and recursive estimators that replace process noise with exponentially
decaying measurement weights, so filtering, prediction, fixed-lag smoothing and
out-of-sequence updates all reduce to the same exact update.  A reference
Kalman filter and a scenario simulator are included for comparison.
"""

from .batch import (
    BatchProblem,
    batch_gradient,
    batch_information,
    batch_solve,
    cost_difference,
    cost_eval,
    log_likelihood,
    minimize_cost,
    savitzky_golay_fit,
)
from .errors import (
    ConfigInvalid,
    EstimationError,
    InnovationSingular,
    InvalidMeasurement,
    NonSPDPrior,
    SingularInformation,
    SingularPropagation,
    UndefinedEstimate,
)
from .kalman import (
    KalmanState,
    RandomWalkNoise,
    WhiteNoiseAcceleration,
    ZeroNoise,
    kf_predict,
    kf_update,
    kf_update_information,
)
from .model import (
    ConstantAccelerationModel,
    ConstantVelocityModel,
    ConstantWeight,
    ExponentialWeight,
    KinematicModel,
    LinearModel,
    Measurement,
    StateEstimate,
    StaticModel,
    TransitionModel,
    WeightFunction,
    ca_transition,
    weight_eval,
)
from .recursive import (
    FilterState,
    init_prior,
    init_uninformative,
    predict,
    run_filter,
    smooth_fixed_lag,
    update_general,
    update_insequence,
    update_oosm,
)

__version__ = "0.1.0"
