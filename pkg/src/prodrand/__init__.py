"""Products of rotationally invariant random matrices.

Samplers (:mod:`.ensembles`), stable log-norms of long products
(:mod:`.products`), closed forms and tail bounds (:mod:`.analytics`),
eps-nets (:mod:`.nets`) and seeded Monte Carlo campaigns (:mod:`.experiments`).
"""

from ._jit import backend
from .analytics import (
    BoundName,
    BoundValue,
    TailBound,
    gaussian_log_moment,
    log_gaussian_moment,
    mean_log_gaussian,
    mgf_lemma_bound,
    prop1_bound,
    quadform_tail_bound,
    relative_quadform_bounds,
    stirling_asymptotic,
    stirling_exponent,
    theorem1_min_steps,
    theorem1_union_bound,
    vn_moments,
)
from .ensembles import (
    EnsembleSpec,
    Family,
    SampledMatrix,
    SpectrumLaw,
    rotational_invariance_test,
    sample_diagonal_bernoulli,
    sample_gaussian,
    sample_haar_orthogonal,
    sample_haar_vector,
    sample_rank_one,
    sample_rotated_spectrum,
)
from .errors import (
    CapabilityError,
    DegenerateTrajectoryError,
    DomainError,
    ParameterError,
    ProdrandError,
    UsageError,
    ValidityError,
)
from .experiments import (
    Center,
    ExperimentRecord,
    TailExperimentConfig,
    emit_report,
    read_report,
    reproduce_bernoulli_identity,
    reproduce_rank_one_identity,
    run_mgf_check,
    run_norm_tail_scan,
    run_quadform_tail_experiment,
    run_tail_experiment,
    run_uniformity_check,
)
from .nets import EpsNet, build_net, coverage_check, net_cardinality_bound, net_norm_bound
from .products import Mode, ProductTrajectory, product_log_opnorm, product_log_vector, stretch_samples

__version__ = "0.1.0"
