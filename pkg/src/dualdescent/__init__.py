"""Mirror descent, natural gradient descent and their duality on exponential families."""

from .descent import (
    Iterate,
    RunAborted,
    StepRejected,
    StepSchedule,
    Trajectory,
    gd_step,
    mirror_map_step,
    mirror_step_proximal,
    natural_gradient_step,
    retraction_step,
    run_online,
)
from .domains import DomainError, RegionDescriptor
from .dual_geometry import (
    ConjugatePair,
    bernoulli_pair,
    bregman_dual,
    bregman_primal,
    duality_gap,
    gaussian_pair,
    metric_dual,
    metric_primal,
    numeric_conjugate,
    poisson_pair,
    product_pair,
)
from .efficiency import EfficiencyReport, run_efficiency, running_mean_identity_check
from .equivalence import EquivalenceReport, verify_cross_parameterization, verify_equivalence
from .families import (
    ExponentialFamily,
    Observation,
    fisher_information_mean,
    log_loss_mean,
    log_loss_natural,
    make_family,
    sample,
)

__version__ = "0.1.0"
