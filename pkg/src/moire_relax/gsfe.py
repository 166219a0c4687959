"""Periodic-grid discretization of the 1D GSFE functional.

The energy of the relative displacement ``u_-`` is

    E = sum_n [ kappa/2 * (D u)_n**2
                - 2 v0 cos(2 pi (delta0(x_n) + sqrt(2) u_n) / ((1 - theta) a)) ] dx

with ``(D u)_n`` the central difference (u_{n+1} - u_{n-1}) / (2 dx), or the
forward difference when ``stencil="forward"``. Indices wrap periodically.

Relaxation runs on the rescaled problem U = u / a with energies measured in
units of kappa * a**2 / a_M, in which only theta and eta enter. The result is
mapped back to dimensional units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, dimensionless_groups, disregistry0, moire_period
from .optimizer import MinimizeOptions, Objective, minimize

SQRT2 = math.sqrt(2.0)
STENCILS = ("central", "forward")
PERTURBATION_AMPLITUDE = 1e-3


class GridMismatch(ValueError):
    """The grid does not span exactly one moire period."""


@dataclass(frozen=True)
class Grid:
    n_points: int
    domain_length: float
    origin: float = 0.0

    def __post_init__(self):
        if self.n_points < 8:
            raise ValueError(f"grid needs at least 8 points, got {self.n_points}")
        if not self.domain_length > 0:
            raise ValueError("domain_length must be positive")

    @property
    def dx(self) -> float:
        return self.domain_length / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.origin + self.dx * np.arange(self.n_points)

    @classmethod
    def for_params(cls, params: ModelParams, n_points: int = 512) -> "Grid":
        return cls(n_points=n_points, domain_length=moire_period(params))


@dataclass(frozen=True)
class DisplacementField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != (self.grid.n_points,):
            raise ValueError(f"expected {self.grid.n_points} values, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    def value(self, n: int) -> float:
        return self.values[n % self.grid.n_points]

    @classmethod
    def zeros(cls, grid: Grid) -> "DisplacementField":
        return cls(grid, np.zeros(grid.n_points))


@dataclass
class RelaxationResult:
    field: DisplacementField
    energy: float
    gradient_norm: float
    iterations: int
    converged: bool
    status: str = ""


def _check_grid(grid: Grid, params: ModelParams):
    a_m = moire_period(params)
    if abs(grid.domain_length - a_m) > 1e-12 * a_m:
        raise GridMismatch(f"grid spans {grid.domain_length}, moire period is {a_m}")
    if grid.n_points < 8:
        raise ValueError("grid too small")


def _difference(u, dx, stencil):
    if stencil == "central":
        return (np.roll(u, -1) - np.roll(u, 1)) / (2 * dx)
    if stencil == "forward":
        return (np.roll(u, -1) - u) / dx
    raise ValueError(f"unknown stencil {stencil!r}, expected one of {STENCILS}")


def _elastic_gradient(u, dx, stiffness, stencil):
    if stencil == "central":
        return stiffness / (4 * dx) * (2 * u - np.roll(u, 2) - np.roll(u, -2))
    return stiffness / dx * (2 * u - np.roll(u, 1) - np.roll(u, -1))


def _energy(u, dx, stiffness, amplitude, wavenumber, phase0, stencil):
    du = _difference(u, dx, stencil)
    elastic = 0.5 * stiffness * du**2
    stacking = -2 * amplitude * np.cos(phase0 + wavenumber * u)
    return np.sum(elastic + stacking) * dx


def _gradient(u, dx, stiffness, amplitude, wavenumber, phase0, stencil):
    stack = 2 * amplitude * wavenumber * np.sin(phase0 + wavenumber * u) * dx
    return _elastic_gradient(u, dx, stiffness, stencil) + stack


def _dimensional_terms(grid: Grid, params: ModelParams):
    period = params.stacking_period
    phase0 = 2 * np.pi * disregistry0(grid.x, params) / period
    return grid.dx, params.kappa, params.v0, 2 * np.pi * SQRT2 / period, phase0


def discrete_energy(field: DisplacementField, params: ModelParams, stencil: str = "central"):
    """Riemann-sum energy of ``field`` (dimensional, per moire cell)."""
    _check_grid(field.grid, params)
    return _energy(field.values, *_dimensional_terms(field.grid, params), stencil)


def discrete_gradient(field: DisplacementField, params: ModelParams,
                      stencil: str = "central") -> np.ndarray:
    """Exact gradient of :func:`discrete_energy` with respect to each grid value."""
    _check_grid(field.grid, params)
    return _gradient(field.values, *_dimensional_terms(field.grid, params), stencil)


def elastic_energy(field: DisplacementField, stencil: str = "central", kappa: float = 1.0):
    du = _difference(field.values, field.grid.dx, stencil)
    return np.sum(0.5 * kappa * du**2) * field.grid.dx


def nondimensional_energy(values, eta: float, stacking_period: float = 1.0,
                          origin: float = 0.0, stencil: str = "central"):
    """Dimensionless energy E / (a_M v0) of U = u / a sampled on X in [0, 1).

        sum_n [ (DU)_n**2 / (2 eta**2)
                - 2 cos(2 pi (s X_n + sqrt(2) U_n) / s) ] dX

    With ``s = 1 - theta`` this is an exact rescaling of :func:`discrete_energy`;
    ``s = 1`` gives the simplified form in which the stacking period drift of
    order theta is dropped.
    """
    if not eta > 0:
        raise ValueError("the dimensionless energy is undefined for eta = 0")
    values = np.asarray(values)
    n = values.size
    dx = 1.0 / n
    x = origin + dx * np.arange(n)
    phase0 = 2 * np.pi * np.mod(stacking_period * x, stacking_period) / stacking_period
    return _energy(values, dx, 1.0 / eta**2, 1.0, 2 * np.pi * SQRT2 / stacking_period,
                   phase0, stencil)


def _scaled_objective(grid: Grid, params: ModelParams, stencil: str):
    """Objective in U = u / a with energies in units of kappa a**2 / a_M.

    The elastic weight is 1 and the stacking weight is eta**2, which stays
    finite for eta = 0.
    """
    groups = dimensionless_groups(params)
    period = 1.0 - params.theta
    phase0 = 2 * np.pi * disregistry0(grid.x, params) / params.stacking_period
    terms = (1.0 / grid.n_points, 1.0, groups.eta**2, 2 * np.pi * SQRT2 / period, phase0)
    return Objective(
        eval=lambda U: _energy(U, *terms, stencil),
        grad=lambda U: _gradient(U, *terms, stencil),
        dimension=grid.n_points,
    )


def relax(initial: DisplacementField, params: ModelParams,
          opts: MinimizeOptions | None = None, stencil: str = "central",
          seed: int | None = None) -> RelaxationResult:
    """Minimize the discrete energy starting from ``initial``.

    ``opts.tolerance`` is relative to ``kappa``: the run is converged when the
    dimensional gradient max-norm is at most ``opts.tolerance * kappa``. With
    ``seed`` set, a uniform perturbation of amplitude 1e-3 a is added to the
    start to leave a symmetric saddle.
    """
    opts = opts or MinimizeOptions()
    grid = initial.grid
    _check_grid(grid, params)
    groups = dimensionless_groups(params)
    objective = _scaled_objective(grid, params, stencil)

    start = np.asarray(initial.values, dtype=float) / params.a
    if seed is not None:
        rng = np.random.default_rng(seed)
        start = start + PERTURBATION_AMPLITUDE * rng.uniform(-1.0, 1.0, grid.n_points)
    # d(E_dim)/du = kappa * epsilon * d(E_scaled)/dU; keep a margin for rounding
    inner_tol = 0.5 * opts.tolerance / groups.epsilon
    inner = MinimizeOptions(memory=opts.memory, tolerance=inner_tol,
                            max_iterations=opts.max_iterations, line_search=opts.line_search)
    out = minimize(objective, start, inner)

    x = out.x
    if seed is not None and objective.eval(x) > objective.eval(np.asarray(initial.values) / params.a):
        x = np.asarray(initial.values, dtype=float) / params.a
    field = DisplacementField(grid, x * params.a)
    energy = float(discrete_energy(field, params, stencil))
    grad_norm = float(np.max(np.abs(discrete_gradient(field, params, stencil))))
    tolerance = opts.tolerance * params.kappa
    converged = out.converged and grad_norm <= tolerance
    return RelaxationResult(field=field, energy=energy, gradient_norm=grad_norm,
                            iterations=out.iterations, converged=converged, status=out.status)


@dataclass(frozen=True)
class Disregistry:
    """Relaxed disregistry sampled on the grid plus the closing point x = a_M."""

    x: np.ndarray
    unreduced: np.ndarray
    reduced: np.ndarray

    @property
    def winding(self) -> float:
        return float(self.unreduced[-1] - self.unreduced[0])


def relaxed_disregistry(result: RelaxationResult, params: ModelParams) -> Disregistry:
    """theta x + sqrt(2) u_- at every grid point, unreduced and reduced mod (1-theta) a."""
    grid = result.field.grid
    u = result.field.values
    n = np.arange(grid.n_points + 1)
    x = grid.origin + grid.dx * n
    u_closed = u[n % grid.n_points]
    unreduced = params.theta * x + SQRT2 * u_closed
    reduced = np.mod(unreduced, params.stacking_period)
    # a tiny negative value rounds up to the period itself
    reduced[reduced >= params.stacking_period] = 0.0
    return Disregistry(x=x, unreduced=unreduced, reduced=reduced)


def stacking_distance(reduced, period):
    """Distance of a reduced disregistry from the nearest perfect stacking (0 or period)."""
    reduced = np.asarray(reduced)
    return np.minimum(reduced, period - reduced)
