"""Model parameters, moire geometry and nondimensional groups."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

COMMENSURATE_TOL = 1e-9


class IncommensurateTheta(ValueError):
    """Raised when 1/theta is not an integer, so no moire supercell exists."""


@dataclass(frozen=True)
class ModelParams:
    """Dimensional inputs of the bilayer chain.

    ``a`` is the layer-1 lattice constant, ``theta`` the relative mismatch
    (layer 2 has lattice constant ``a * (1 - theta)``), ``kappa`` the layer
    stiffness and ``v0`` the stacking energy amplitude, both per unit length.
    ``v0 == 0`` is allowed so that the uncoupled case ``eta = 0`` can be
    represented.
    """

    a: float
    theta: float
    kappa: float
    v0: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"lattice constant must be positive, got {self.a}")
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.v0 >= 0:
            raise ValueError(f"v0 must be non-negative, got {self.v0}")

    @property
    def stacking_period(self) -> float:
        """Period of the stacking energy in the disregistry, (1 - theta) a."""
        return (1.0 - self.theta) * self.a

    @property
    def moire_period(self) -> float:
        return moire_period(self)


@dataclass(frozen=True)
class DimensionlessGroups:
    epsilon: float
    delta_ratio: float
    eta: float

    @property
    def eta_abstract(self) -> float:
        """The ratio epsilon**2 / delta, i.e. 1 / eta**2."""
        if self.eta == 0:
            return math.inf
        return self.epsilon**2 / self.delta_ratio


class StackingForm(Enum):
    SINUSOID = "sinusoid"
    LATTICE_SUM = "lattice_sum"


@dataclass(frozen=True)
class StackingPotentialSpec:
    form: StackingForm
    v0: float
    period: float

    def __call__(self, disregistry):
        if self.form is not StackingForm.SINUSOID:
            raise NotImplementedError(
                "lattice-sum stacking is tabulated by atomistic.stacking_potential"
            )
        return -2.0 * self.v0 * np.cos(2.0 * np.pi * np.asarray(disregistry) / self.period)


def moire_period(params: ModelParams) -> float:
    return params.a * (1.0 - params.theta) / params.theta


def lattice_counts(params: ModelParams) -> tuple[int, int]:
    """Atoms per supercell in layer 1 (M) and layer 2 (N = M + 1)."""
    inv = 1.0 / params.theta
    n = round(inv)
    if abs(inv - n) > COMMENSURATE_TOL or n < 2:
        raise IncommensurateTheta(
            f"1/theta = {inv!r} is not an integer; no commensurate supercell"
        )
    return n - 1, n


def disregistry0(x, params: ModelParams):
    """Unrelaxed disregistry theta*x reduced into [0, (1 - theta) a)."""
    period = params.stacking_period
    d = np.mod(params.theta * np.asarray(x, dtype=float), period)
    # np.mod can round up to exactly `period` for tiny negative inputs
    d = np.where(d >= period, 0.0, d)
    if np.ndim(d) == 0:
        return float(d)
    return d


def dimensionless_groups(params: ModelParams) -> DimensionlessGroups:
    epsilon = params.theta / (1.0 - params.theta)
    delta = params.v0 / params.kappa
    return DimensionlessGroups(epsilon=epsilon, delta_ratio=delta, eta=math.sqrt(delta) / epsilon)


def params_from_eta(eta: float, theta: float, a: float = 1.0) -> ModelParams:
    """Parameters with kappa = 1 and v0 chosen so that the groups give ``eta``."""
    if eta < 0:
        raise ValueError(f"eta must be non-negative, got {eta}")
    epsilon = theta / (1.0 - theta)
    return ModelParams(a=a, theta=theta, kappa=1.0, v0=(eta * epsilon) ** 2)
