"""Detection of sparse external-field signals in Ising models.

Graph and coupling families, exact and MCMC samplers, scan and magnetization
tests with their closed-form thresholds, small-n exact oracles, and Monte-Carlo
risk sweeps.
"""

from isingscan.graphs import (
    AdjacencyMatrix,
    CouplingMatrix,
    GraphSpec,
    GraphStats,
    build_complete,
    build_erdos_renyi,
    build_graph,
    build_lattice,
    build_random_regular,
    build_regular_circulant,
    coupling_from_graph,
    graph_stats,
)
from isingscan.model import (
    ModelParams,
    SamplerConfig,
    SpinConfig,
    conditional_prob_plus,
    exact_distribution,
    exact_sample,
    field_vector,
    glauber_sample,
    glauber_step,
    local_fields,
    log_weight,
    sample,
)
from isingscan.signals import (
    AlternativeSpec,
    SignalClass,
    alternative_field,
    disjoint_subcollection,
    make_lattice_cube_class,
    make_mean_field_class,
    validate_class,
)
from isingscan.detect import (
    TestKind,
    TestResult,
    TestSpec,
    conditional_scan,
    local_field_deviation,
    magnetization_test,
    naive_scan,
)

__version__ = "0.1.0"
