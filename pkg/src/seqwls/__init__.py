"""Optimal weighted least squares with sequential sample recycling."""

from .basis import (
    BasisFamily,
    DomainError,
    HaarNode,
    HaarTreeBasis,
    HermiteBasis,
    SingularWeightError,
    christoffel,
    grow_random_tree,
    haar_eval,
    hermite_eval,
    mu_density,
    optimal_weight,
    sigma_relative_density,
)
from .budget import (
    C,
    GAMMA,
    BudgetRule,
    FixedEps,
    PerStepEps,
    chernoff_tail,
    cost_tail_bound,
    eps_schedule,
    harmonic_cost_sum,
    matrix_chernoff_bound,
    n_eps,
    n_uniform,
)
from .leastsq import (
    WlsFit,
    assemble_gramian,
    best_approx_error,
    condition_number,
    l2_error,
    spectral_deviation,
    wls_fit,
)
from .samplers import (
    CostLedger,
    RngStream,
    SampleSet,
    algorithm1_step,
    algorithm2_step,
    algorithm3_step,
    hermite_cdf,
    initial_sample,
    multi_step,
    sample_mu,
    sample_sigma,
)

__version__ = "0.1.0"
