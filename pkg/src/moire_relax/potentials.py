"""Even pair potentials in nondimensional length units (lattice constant = 1)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SAMPLES = 100
FD_STEP = 1e-5
MAX_SAMPLED_VALUE = 1e2


@dataclass(frozen=True)
class PairPotential:
    """Pair potential with value and first two derivatives.

    The raw callbacks are wrapped so that every separation with
    ``|z| > cutoff`` contributes exactly zero. Construction checks evenness
    and the first derivative against finite differences on sample points.
    """

    raw_value: Callable
    raw_d1: Callable
    raw_d2: Callable
    cutoff: float
    name: str = "custom"
    parameters: dict = field(default_factory=dict)
    even: bool = True

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")
        if not self.even:
            raise ValueError("only even pair potentials are supported")
        self._verify()

    def value(self, z):
        z = np.asarray(z, dtype=float)
        inside = np.abs(z) <= self.cutoff
        return np.where(inside, self.raw_value(np.where(inside, z, 1.0)), 0.0)

    def d1(self, z):
        z = np.asarray(z, dtype=float)
        inside = np.abs(z) <= self.cutoff
        return np.where(inside, self.raw_d1(np.where(inside, z, 1.0)), 0.0)

    def d2(self, z):
        z = np.asarray(z, dtype=float)
        inside = np.abs(z) <= self.cutoff
        return np.where(inside, self.raw_d2(np.where(inside, z, 1.0)), 0.0)

    def scaled(self, factor: float) -> "PairPotential":
        params = dict(self.parameters)
        params["scale"] = params.get("scale", 1.0) * factor
        return PairPotential(
            raw_value=lambda z: factor * self.raw_value(z),
            raw_d1=lambda z: factor * self.raw_d1(z),
            raw_d2=lambda z: factor * self.raw_d2(z),
            cutoff=self.cutoff,
            name=self.name,
            parameters=params,
        )

    def _verify(self):
        z = np.linspace(0.0, self.cutoff, SAMPLES + 2)[1:-1]
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            plus = self.raw_value(z)
            minus = self.raw_value(-z)
        ok = np.isfinite(plus) & (np.abs(plus) <= MAX_SAMPLED_VALUE)
        scale = np.maximum(1.0, np.abs(plus[ok]))
        if np.any(np.abs(plus[ok] - minus[ok]) > 1e-12 * scale):
            raise ValueError(f"potential {self.name!r} is not even")
        zs = np.concatenate([-z[ok], z[ok]])
        # stay clear of kinks at the origin and the cutoff edge
        zs = zs[(np.abs(zs) > 10 * FD_STEP) & (np.abs(zs) < self.cutoff - 10 * FD_STEP)]
        fd = (self.raw_value(zs + FD_STEP) - self.raw_value(zs - FD_STEP)) / (2 * FD_STEP)
        d1 = self.raw_d1(zs)
        if np.any(np.abs(fd - d1) > 1e-7 * np.maximum(1.0, np.abs(d1))):
            raise ValueError(f"first derivative of {self.name!r} disagrees with its value")


def harmonic(stiffness: float = 1.0, r0: float = 1.0, cutoff: float = 1.5) -> PairPotential:
    """0.5 * stiffness * (|z| - r0)**2 inside the cutoff."""
    k = stiffness
    return PairPotential(
        raw_value=lambda z: 0.5 * k * (np.abs(z) - r0) ** 2,
        raw_d1=lambda z: k * (np.abs(z) - r0) * np.sign(z),
        raw_d2=lambda z: k * np.ones_like(np.asarray(z, dtype=float)),
        cutoff=cutoff,
        name="harmonic",
        parameters={"stiffness": stiffness, "r0": r0, "cutoff": cutoff},
    )


def _switch(r, r_on, r_off):
    """Quintic switch S with S = 1 below r_on, 0 above r_off, C2 at both ends."""
    w = r_off - r_on
    t = np.clip((r - r_on) / w, 0.0, 1.0)
    s = 1 - 10 * t**3 + 15 * t**4 - 6 * t**5
    ds = (-30 * t**2 + 60 * t**3 - 30 * t**4) / w
    dds = (-60 * t + 180 * t**2 - 120 * t**3) / w**2
    return s, ds, dds


def lennard_jones(depth: float = 1.0, r_min: float = 1.0, cutoff: float = 5.0,
                  switch_on: float | None = None) -> PairPotential:
    """Lennard-Jones form with its minimum ``-depth`` at ``r_min``.

    A quintic switch between ``switch_on`` (default 0.8 * cutoff) and the
    cutoff brings value, slope and curvature smoothly to zero.
    """
    r_on = 0.8 * cutoff if switch_on is None else switch_on
    sigma = r_min / 2 ** (1 / 6)

    def parts(z):
        r = np.abs(np.asarray(z, dtype=float))
        sr6 = (sigma / r) ** 6
        v = 4 * depth * (sr6**2 - sr6)
        dv = 4 * depth * (-12 * sr6**2 + 6 * sr6) / r
        ddv = 4 * depth * (156 * sr6**2 - 42 * sr6) / r**2
        s, ds, dds = _switch(r, r_on, cutoff)
        return r, v * s, dv * s + v * ds, ddv * s + 2 * dv * ds + v * dds

    return PairPotential(
        raw_value=lambda z: parts(z)[1],
        raw_d1=lambda z: np.sign(z) * parts(z)[2],
        raw_d2=lambda z: parts(z)[3],
        cutoff=cutoff,
        name="lennard_jones",
        parameters={"depth": depth, "r_min": r_min, "cutoff": cutoff, "switch_on": r_on},
    )


def gaussian(depth: float = 1.0, sigma: float = 0.4, cutoff: float = 5.0) -> PairPotential:
    """Attractive well -depth * exp(-z**2 / (2 sigma**2))."""
    s2 = sigma**2

    def g(z):
        return np.exp(-np.asarray(z, dtype=float) ** 2 / (2 * s2))

    return PairPotential(
        raw_value=lambda z: -depth * g(z),
        raw_d1=lambda z: depth * np.asarray(z) / s2 * g(z),
        raw_d2=lambda z: depth * (1 / s2 - np.asarray(z) ** 2 / s2**2) * g(z),
        cutoff=cutoff,
        name="gaussian",
        parameters={"depth": depth, "sigma": sigma, "cutoff": cutoff},
    )


def zero(cutoff: float = 1.0) -> PairPotential:
    return PairPotential(
        raw_value=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
        raw_d1=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
        raw_d2=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
        cutoff=cutoff,
        name="zero",
        parameters={"cutoff": cutoff},
    )


FACTORIES = {
    "harmonic": harmonic,
    "lennard_jones": lennard_jones,
    "gaussian": gaussian,
    "zero": zero,
}


def from_spec(spec: dict) -> PairPotential:
    """Build a named potential from ``{"name": ..., **parameters}``."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in FACTORIES:
        raise ValueError(f"unknown potential {name!r}; choose from {sorted(FACTORIES)}")
    scale = spec.pop("scale", None)
    pot = FACTORIES[name](**spec)
    return pot.scaled(scale) if scale is not None else pot
