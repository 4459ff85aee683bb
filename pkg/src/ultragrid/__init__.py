"""ultragrid: discrete calculus on nested dyadic grids with a level-net solver.

The package realizes, at finite resolution, a calculus of grid functions
whose derivative is summation-by-parts exact, a measure theory built from
ball-averaged density functions, a classification of level-indexed nets by
their standard part, and a variational solver that minimizes a functional
level by level and splits the resulting net into a classical part plus a
remainder.  Three packaged studies (sawtooth oscillation, critical Sobolev
quotient, singular-potential interface problem) exercise the full stack.
"""

from .grid import (
    DEFAULT_NODE_CAP,
    Domain,
    GridLevel,
    NodeSet,
    ResourceLimitError,
    boundary_nodes,
    build_level,
    level_to_csv,
    monad_neighbors,
)
from .calculus import (
    DiffOp,
    GridFunction,
    TestFunction,
    bump,
    derivative,
    derivative_kernel_dimension,
    diff_op,
    divergence,
    gradient,
    grid_function_from_binary,
    grid_function_from_csv,
    grid_function_to_binary,
    grid_function_to_csv,
    inner,
    integral,
    laplacian,
    norm,
    pair_distribution,
    restrict,
    sigma,
    standard_battery,
)
from .measure import (
    Ball,
    Box,
    GaussResult,
    HalfSpace,
    NodeMask,
    density,
    gauss_check,
    normal_field,
    perimeter,
    surface_integral,
)
from .nets import (
    Classification,
    Kind,
    Net,
    classify,
    coarse_values,
    is_infinitesimal,
    pointwise_standard_part,
)
from .solver import (
    ELReport,
    LevelObjective,
    MinResult,
    PairingReport,
    ProblemSpec,
    SolutionNet,
    Splitting,
    check_gradient,
    minimize_level,
    prolong,
    solve_net,
    split,
    verify_euler_lagrange,
)
from .problems import (
    BubbleInitializer,
    InterfaceDecomposition,
    bubble,
    concentration_metric,
    extract_interface,
    quadratic_well,
    sawtooth_pattern,
    sawtooth_spec,
    sign_perturbed_spec,
    singular_spec,
    sobolev_constant,
)

__version__ = "0.1.0"
