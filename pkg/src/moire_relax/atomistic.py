"""Atomistic pair-potential model of the bilayer chain on a moire supercell.

Lengths are in units of the layer-1 lattice constant. Layer 1 holds M atoms
at positions i, layer 2 holds N = M + 1 atoms at (1 - theta) j, and the
supercell has length M = N (1 - theta). Displacement arrays are the samples
U_1(eps i) and U_2(eps (1 - theta) j) of the nondimensional displacement
fields on [0, 1).

Energies are per-atom averages: the intralayer sum of each layer is divided
by that layer's atom count and the interlayer sum by the layer-1 count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .gsfe import DisplacementField, Grid, discrete_energy, relax
from .model import ModelParams, lattice_counts, params_from_eta
from .optimizer import MinimizeOptions, Objective, minimize
from .potentials import PairPotential

SQRT2 = math.sqrt(2.0)
CROSSING_LIMIT = 0.5
MIN_FIT_SAMPLES = 64


class ChainCrossing(ValueError):
    """Neighbouring atoms of one layer moved half a lattice spacing or more
    relative to each other."""


class DegenerateStiffness(ValueError):
    """The Cauchy-Born density has no non-degenerate minimum at zero strain."""


@dataclass(frozen=True)
class _Topology:
    m: int
    n: int
    compression: float
    offsets: np.ndarray
    targets1: np.ndarray
    targets2: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_offset: np.ndarray


def _build_topology(m: int, n: int, theta: float, image_range: int) -> _Topology:
    s = 1.0 - theta
    offsets = np.array([j for j in range(-image_range, image_range + 1) if j != 0])
    targets1 = (np.arange(m)[:, None] + offsets[None, :]) % m
    targets2 = (np.arange(n)[:, None] + offsets[None, :]) % n
    # interlayer partners: every layer-2 image within reach of atom i
    reach = image_range + 1.0
    pi, pj = [], []
    for i in range(m):
        lo = math.floor((i - reach) / s)
        hi = math.ceil((i + reach) / s)
        js = np.arange(lo, hi + 1)
        js = js[np.abs(i - s * js) <= reach]
        pi.append(np.full(js.size, i))
        pj.append(js)
    pair_i = np.concatenate(pi)
    pair_jraw = np.concatenate(pj)
    return _Topology(
        m=m, n=n, compression=s, offsets=offsets, targets1=targets1, targets2=targets2,
        pair_i=pair_i, pair_j=pair_jraw % n, pair_offset=pair_i - s * pair_jraw,
    )


@dataclass(frozen=True)
class AtomisticSystem:
    """Displacements of both layers plus the potentials acting on them.

    ``cells`` repeats the moire supercell; ``image_range`` (J) bounds the
    intralayer neighbour index and must cover both cutoffs.
    """

    params: ModelParams
    layer1: np.ndarray
    layer2: np.ndarray
    intra: PairPotential
    inter: PairPotential
    image_range: int | None = None
    cells: int = 1

    def __post_init__(self):
        m, n = lattice_counts(self.params)
        m, n = m * self.cells, n * self.cells
        layer1 = np.asarray(self.layer1, dtype=float)
        layer2 = np.asarray(self.layer2, dtype=float)
        if layer1.shape != (m,) or layer2.shape != (n,):
            raise ValueError(
                f"layer sizes must be {m} and {n}, got {layer1.shape} and {layer2.shape}")
        object.__setattr__(self, "layer1", layer1)
        object.__setattr__(self, "layer2", layer2)
        reach = max(self.intra.cutoff, self.inter.cutoff)
        if self.image_range is None:
            object.__setattr__(self, "image_range", math.ceil(reach))
        elif self.image_range < reach:
            raise ValueError(f"image_range {self.image_range} is shorter than cutoff {reach}")

    @classmethod
    def unrelaxed(cls, params: ModelParams, intra: PairPotential, inter: PairPotential,
                  image_range: int | None = None, cells: int = 1) -> "AtomisticSystem":
        m, n = lattice_counts(params)
        return cls(params, np.zeros(m * cells), np.zeros(n * cells), intra, inter,
                   image_range, cells)

    @property
    def m(self) -> int:
        return self.layer1.size

    @property
    def n(self) -> int:
        return self.layer2.size

    @cached_property
    def topology(self) -> _Topology:
        return _build_topology(self.m, self.n, self.params.theta, self.image_range)

    def with_displacements(self, layer1, layer2) -> "AtomisticSystem":
        new = replace(self, layer1=layer1, layer2=layer2)
        new.__dict__["topology"] = self.topology
        return new

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.layer1, self.layer2])


def _check_crossing(u1, u2, s):
    if np.max(np.abs(np.roll(u1, -1) - u1)) >= CROSSING_LIMIT:
        raise ChainCrossing("layer 1 neighbours moved half a lattice spacing apart")
    if np.max(np.abs(np.roll(u2, -1) - u2)) / s >= CROSSING_LIMIT:
        raise ChainCrossing("layer 2 neighbours moved half a lattice spacing apart")


def _intra(u1, u2, topo, pot):
    s = topo.compression
    arg1 = topo.offsets[None, :] + u1[topo.targets1] - u1[:, None]
    arg2 = topo.offsets[None, :] + (u2[topo.targets2] - u2[:, None]) / s
    return np.sum(pot.value(arg1)) / topo.m + np.sum(pot.value(arg2)) / topo.n


def _inter(u1, u2, topo, pot):
    arg = topo.pair_offset + u1[topo.pair_i] - u2[topo.pair_j]
    return np.sum(pot.value(arg)) / topo.m


def _gradient(u1, u2, topo, intra, inter):
    s = topo.compression
    m, n = topo.m, topo.n
    d1 = intra.d1(topo.offsets[None, :] + u1[topo.targets1] - u1[:, None])
    g1 = (np.bincount(topo.targets1.ravel(), d1.ravel(), minlength=m) - d1.sum(axis=1)) / m
    d2 = intra.d1(topo.offsets[None, :] + (u2[topo.targets2] - u2[:, None]) / s)
    g2 = (np.bincount(topo.targets2.ravel(), d2.ravel(), minlength=n) - d2.sum(axis=1)) / (n * s)
    dp = inter.d1(topo.pair_offset + u1[topo.pair_i] - u2[topo.pair_j])
    g1 = g1 + np.bincount(topo.pair_i, dp, minlength=m) / m
    g2 = g2 - np.bincount(topo.pair_j, dp, minlength=n) / m
    return g1, g2


def intra_energy(system: AtomisticSystem) -> float:
    topo = system.topology
    _check_crossing(system.layer1, system.layer2, topo.compression)
    return float(_intra(system.layer1, system.layer2, topo, system.intra))


def inter_energy(system: AtomisticSystem) -> float:
    topo = system.topology
    _check_crossing(system.layer1, system.layer2, topo.compression)
    return float(_inter(system.layer1, system.layer2, topo, system.inter))


def total_energy(system: AtomisticSystem) -> float:
    return intra_energy(system) + inter_energy(system)


def atomistic_gradient(system: AtomisticSystem) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of intra + inter energy with respect to layer-1 and layer-2 displacements."""
    topo = system.topology
    _check_crossing(system.layer1, system.layer2, topo.compression)
    return _gradient(system.layer1, system.layer2, topo, system.intra, system.inter)


def cauchy_born_density(potential: PairPotential, z):
    """Lattice sum of the potential over a chain stretched by 1 + z, zero at z = 0."""
    z = np.asarray(z, dtype=float)
    if np.any(1 + z <= 0):
        raise ValueError("stretch 1 + z must be positive")
    jmax = math.floor(potential.cutoff / min(1.0, float(np.min(1 + z)))) + 1
    j = np.array([k for k in range(-jmax, jmax + 1) if k != 0], dtype=float)
    stretched = potential.value(np.multiply.outer(1 + z, j)).sum(axis=-1)
    return stretched - potential.value(j).sum()


def stiffness(potential: PairPotential) -> float:
    """Second strain derivative of the Cauchy-Born density at zero strain."""
    jmax = math.floor(potential.cutoff)
    j = np.array([k for k in range(-jmax, jmax + 1) if k != 0], dtype=float)
    kappa = float(np.sum(j**2 * potential.d2(j)))
    if not kappa > 0:
        raise DegenerateStiffness(f"stiffness {kappa} is not positive")
    return kappa


def stacking_potential(potential: PairPotential, theta: float, z):
    """(1 - theta)-periodic image sum of the interlayer potential."""
    s = 1.0 - theta
    z = np.asarray(z, dtype=float)
    rc = potential.cutoff
    lo = math.floor((float(np.min(z)) - rc) / s) - 1
    hi = math.ceil((float(np.max(z)) + rc) / s) + 1
    j = np.arange(lo, hi + 1)
    return potential.value(np.subtract.outer(z, s * j)).sum(axis=-1)


@dataclass(frozen=True)
class TabulatedStacking:
    z: np.ndarray
    values: np.ndarray
    period: float


def tabulate_stacking(potential: PairPotential, theta: float, samples: int = 256) -> TabulatedStacking:
    period = 1.0 - theta
    z = period * np.arange(samples) / samples
    return TabulatedStacking(z=z, values=stacking_potential(potential, theta, z), period=period)


def fit_sinusoid(table: TabulatedStacking) -> tuple[float, float]:
    """Amplitude v0 of the fitted form -2 v0 cos(2 pi z / period) and the
    max-norm residual of the table against mean plus that cosine."""
    values = np.asarray(table.values, dtype=float)
    n = values.size
    if n < MIN_FIT_SAMPLES:
        raise ValueError(f"need at least {MIN_FIT_SAMPLES} samples per period, got {n}")
    phase = 2 * np.pi * np.asarray(table.z) / table.period
    c1 = 2.0 / n * np.sum(values * np.cos(phase))
    fitted = values.mean() + c1 * np.cos(phase)
    return float(-0.5 * c1), float(np.max(np.abs(values - fitted)))


@dataclass(frozen=True)
class DerivedContinuum:
    kappa_tilde: float
    v_tilde: TabulatedStacking
    v0_tilde: float
    residual: float


def derive_continuum(intra: PairPotential, inter: PairPotential, theta: float) -> DerivedContinuum:
    table = tabulate_stacking(inter, theta)
    v0, residual = fit_sinusoid(table)
    return DerivedContinuum(stiffness(intra), table, v0, residual)


def continuum_energy(values, kappa_tilde: float, v0_tilde: float, epsilon: float, theta: float):
    """Partially nondimensional continuum energy of U_- on a periodic grid of [0, 1).

        sum_n [ eps**2 kappa~ / 2 * ((U_{n+1} - U_{n-1}) / (2 dX))**2
                - 2 v0~ cos(2 pi ((1 - theta) X_n + sqrt(2) U_n) / (1 - theta)) ] dX
    """
    u = np.asarray(values, dtype=float)
    n = u.size
    dx = 1.0 / n
    x = dx * np.arange(n)
    s = 1.0 - theta
    total = 0.0
    for k in range(n):
        slope = (u[(k + 1) % n] - u[(k - 1) % n]) / (2 * dx)
        stacking = math.cos(2 * math.pi * (s * x[k] + SQRT2 * u[k]) / s)
        total += (0.5 * epsilon**2 * kappa_tilde * slope**2 - 2 * v0_tilde * stacking) * dx
    return total


@dataclass
class AtomisticRelaxation:
    system: AtomisticSystem
    energy: float
    gradient_norm: float
    iterations: int
    converged: bool
    status: str = ""


def relax_atomistic(system: AtomisticSystem, opts: MinimizeOptions | None = None) -> AtomisticRelaxation:
    """Minimize intra + inter energy over all 2M + 1 displacements.

    The rigid-translation zero mode is removed by keeping the mean of all
    displacements at zero. The optimizer works on the supercell total energy
    in units of the intralayer stiffness, and ``opts.tolerance`` applies to
    that gradient.
    """
    opts = opts or MinimizeOptions()
    topo = system.topology
    m = topo.m
    scale = m / stiffness(system.intra)

    def split(x):
        return x[:m], x[m:]

    def value(x):
        u1, u2 = split(x)
        try:
            _check_crossing(u1, u2, topo.compression)
        except ChainCrossing:
            return math.inf
        return scale * (_intra(u1, u2, topo, system.intra) + _inter(u1, u2, topo, system.inter))

    def grad(x):
        g1, g2 = _gradient(*split(x), topo, system.intra, system.inter)
        g = scale * np.concatenate([g1, g2])
        return g - g.mean()

    x0 = system.vector - system.vector.mean()
    out = minimize(Objective(value, grad, x0.size), x0, opts)
    relaxed = system.with_displacements(*split(out.x))
    return AtomisticRelaxation(system=relaxed, energy=total_energy(relaxed),
                               gradient_norm=out.gradient_norm, iterations=out.iterations,
                               converged=out.converged, status=out.status)


def minus_profile(system: AtomisticSystem) -> np.ndarray:
    """(U_1 - U_2) / sqrt(2) at layer-1 sites, U_2 linearly interpolated."""
    m, n = system.m, system.n
    x1 = np.arange(m) / m
    x2 = np.arange(n + 1) / n
    u2 = np.append(system.layer2, system.layer2[0])
    return (system.layer1 - np.interp(x1, x2, u2)) / SQRT2


@dataclass
class ComparisonRow:
    theta: float
    epsilon: float
    eta: float
    l2_error: float
    energy_gap: float
    atoms: int
    converged: bool
    atomistic: AtomisticRelaxation = field(repr=False, default=None)
    continuum: object = field(repr=False, default=None)


def tune_interlayer(intra: PairPotential, inter: PairPotential, theta: float,
                    eta: float) -> tuple[PairPotential, DerivedContinuum]:
    """Rescale ``inter`` so that stiffness and fitted stacking amplitude give ``eta``.

    Returns the rescaled potential and its derived continuum parameters.
    """
    epsilon = theta / (1.0 - theta)
    derived = derive_continuum(intra, inter, theta)
    if eta == 0:
        factor = 0.0
    else:
        if not derived.v0_tilde > 0:
            raise ValueError("interlayer potential has no attractive fundamental to rescale")
        factor = eta**2 * epsilon**2 * derived.kappa_tilde / derived.v0_tilde
    scaled = DerivedContinuum(derived.kappa_tilde,
                              replace(derived.v_tilde, values=derived.v_tilde.values * factor),
                              derived.v0_tilde * factor, derived.residual * factor)
    return inter.scaled(factor), scaled


def compare_at(theta: float, eta: float, intra: PairPotential, inter: PairPotential,
               opts: MinimizeOptions | None = None, grid_min: int = 512) -> ComparisonRow:
    """Relax both models at one mismatch with the interlayer amplitude tuned to ``eta``."""
    m, n = lattice_counts(ModelParams(1.0, theta, 1.0, 0.0))
    epsilon = theta / (1.0 - theta)
    inter_scaled, derived = tune_interlayer(intra, inter, theta, eta)
    v0_tilde = derived.v0_tilde

    params = params_from_eta(eta, theta, 1.0)
    start = AtomisticSystem.unrelaxed(params, intra, inter_scaled)
    atom = relax_atomistic(start, opts)

    k = math.ceil(grid_min / m)
    grid = Grid.for_params(params, m * k)
    cont = relax(DisplacementField.zeros(grid), params, opts)
    u_cont = cont.field.values[::k] / params.a
    u_atom = minus_profile(atom.system)
    l2 = float(np.sqrt(np.mean((u_atom - u_cont) ** 2)))

    if v0_tilde == 0:
        gap = 0.0
    else:
        scale = params.moire_period * params.v0
        e0 = float(discrete_energy(DisplacementField.zeros(grid), params))
        cont_drop = (cont.energy - e0) / scale
        atom_drop = (atom.energy - total_energy(start)) / v0_tilde
        gap = abs(atom_drop - cont_drop)
    return ComparisonRow(theta=theta, epsilon=epsilon, eta=eta, l2_error=l2, energy_gap=gap,
                         atoms=m + n, converged=atom.converged and cont.converged,
                         atomistic=atom, continuum=cont)


def continuum_comparison(theta_sequence, eta: float, intra: PairPotential, inter: PairPotential,
                         opts: MinimizeOptions | None = None, grid_min: int = 512,
                         jobs: int = 1) -> list[ComparisonRow]:
    """One :func:`compare_at` row per mismatch, in input order."""
    thetas = list(theta_sequence)
    if jobs <= 1:
        return [compare_at(t, eta, intra, inter, opts, grid_min) for t in thetas]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda t: compare_at(t, eta, intra, inter, opts, grid_min), thetas))


def eta_from_derived(derived: DerivedContinuum, epsilon: float) -> float:
    return math.sqrt(derived.v0_tilde / derived.kappa_tilde) / epsilon


__all__ = [
    "AtomisticSystem", "ChainCrossing", "DegenerateStiffness", "DerivedContinuum",
    "atomistic_gradient", "cauchy_born_density", "compare_at", "continuum_comparison",
    "continuum_energy", "derive_continuum", "tune_interlayer", "fit_sinusoid", "inter_energy", "intra_energy",
    "relax_atomistic", "stacking_potential", "stiffness", "tabulate_stacking", "total_energy",
]
