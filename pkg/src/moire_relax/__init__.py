"""Relaxation of one-dimensional bilayer moire chains.

Two routes are provided: the continuum GSFE functional (linear elasticity
plus a cosine stacking penalty) minimized on a periodic grid, and an
atomistic pair-potential model on a commensurate supercell. The
``continuum_comparison`` driver checks that the atomistic minimizers approach
the continuum ones as the lattice mismatch shrinks at fixed ``eta``.
"""

from .model import (
    DimensionlessGroups,
    IncommensurateTheta,
    ModelParams,
    StackingPotentialSpec,
    dimensionless_groups,
    disregistry0,
    lattice_counts,
    moire_period,
    params_from_eta,
)
from .optimizer import (
    MinimizeOptions,
    MinimizeResult,
    NonFiniteObjective,
    Objective,
    check_gradient,
    minimize,
)
from .gsfe import (
    DisplacementField,
    Grid,
    GridMismatch,
    RelaxationResult,
    discrete_energy,
    discrete_gradient,
    nondimensional_energy,
    relax,
    relaxed_disregistry,
)
from .potentials import PairPotential, gaussian, harmonic, lennard_jones
from .atomistic import (
    AtomisticSystem,
    ChainCrossing,
    DegenerateStiffness,
    atomistic_gradient,
    cauchy_born_density,
    continuum_comparison,
    fit_sinusoid,
    inter_energy,
    intra_energy,
    relax_atomistic,
    stacking_potential,
    stiffness,
)

__version__ = "0.1.0"
