"""alignlab: particle, kinetic and hydrodynamic solvers for alignment
dynamics with transported communication strength.

Layers:
    torus, accel          periodic geometry, kernels, jit-accelerated loops
    averaging             environmental averaging operators [u]_rho
    fields                strength/weight transport on periodic grids
    micro                 N-agent discrete-continuous simulator
    kinetic               1d-in-x, 1d-in-v phase-space solver + diagnostics
    macro                 1d pressureless/isentropic Euler alignment solver
    metrics               exact Wasserstein distances, deviation functionals
    experiments, cli      the six verification studies and the CLI
"""

from .torus import (
    CommunicationKernel,
    Mollifier,
    TorusGeometry,
    bochner_square,
    constant_kernel,
    cosine_kernel,
    inverse_power_kernel,
    kernel_eval,
    mollifier_eval,
    periodic_displacement,
    periodic_distance,
)
from .averaging import (
    AveragingModel,
    EmpiricalDensity,
    EmpiricalMomentum,
    GridDensity,
    GridMomentum,
    check_right_stochastic,
    favre_average,
    kernel_matrix,
    special_mollified_velocity,
    spectral_gap_estimate,
    velocity_average,
)
from .fields import (
    StrengthField,
    WeightField,
    advance_strength,
    advance_weight,
    sample_field,
    weight_to_strength,
)
from .micro import CuckerSmale, MotschTadmor, ParticleEnsemble, SModel, WModel
from .metrics import CircleMeasure, CouplingProblem, l1_distance, w1_circle, w2_circle, w_p_empirical

__version__ = "0.1.0"
