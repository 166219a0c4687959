"""``moire-relax`` command line driver.

Usage::

    moire-relax <mode> [--config FILE] [--out DIR] [--jobs N] [--seed S]
                [--allow-nonconverged]

Modes: gsfe-relax, eta-sweep, atomistic-relax, derive-params,
convergence-study. The config file is JSON; dimensional quantities carry a
unit suffix in their key (``a_nm``, ``kappa_mev_per_nm``, ``v0_mev_per_nm``).
Command line flags override config keys, which override defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import atomistic, gsfe
from .model import ModelParams, dimensionless_groups, lattice_counts, moire_period, params_from_eta
from .optimizer import MinimizeOptions, NonFiniteObjective
from .output import OutputError, Series, _atomic_write, emit_csv, emit_svg
from .potentials import from_spec

log = logging.getLogger("moire_relax")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

GSFE_COLUMNS = ["x_over_aM", "u_minus_over_a", "delta_unreduced_over_a", "delta_mod_over_period"]
CONVERGENCE_COLUMNS = ["theta", "epsilon", "eta", "l2_error", "energy_gap", "atoms"]


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class Mode(Enum):
    GSFE_RELAX = "gsfe-relax"
    ETA_SWEEP = "eta-sweep"
    ATOMISTIC_RELAX = "atomistic-relax"
    DERIVE_PARAMS = "derive-params"
    CONVERGENCE_STUDY = "convergence-study"


@dataclass
class ModelSpec:
    """Either dimensional inputs (kappa and v0 given) or an (eta, theta) pair."""

    theta: float = 1 / 50
    a_nm: float = 0.25
    kappa_mev_per_nm: float | None = None
    v0_mev_per_nm: float | None = None
    eta: float | None = 1.0

    @property
    def dimensional(self) -> bool:
        return self.kappa_mev_per_nm is not None and self.v0_mev_per_nm is not None

    def params(self) -> ModelParams:
        if self.dimensional:
            return ModelParams(self.a_nm, self.theta, self.kappa_mev_per_nm, self.v0_mev_per_nm)
        if self.eta is not None:
            return params_from_eta(self.eta, self.theta, self.a_nm)
        raise ConfigError("model", "give kappa_mev_per_nm and v0_mev_per_nm, or eta")


@dataclass
class RunConfig:
    mode: Mode
    model: ModelSpec = field(default_factory=ModelSpec)
    grid_n: int = 512
    optimizer: MinimizeOptions = field(default_factory=MinimizeOptions)
    potentials: dict = field(default_factory=lambda: {
        "intra": {"name": "harmonic"},
        "inter": {"name": "gaussian", "sigma": 0.4},
    })
    etas: list = field(default_factory=lambda: [3.0, 1.0, 0.3, 0.0])
    thetas: list = field(default_factory=lambda: [1 / 10, 1 / 20, 1 / 40, 1 / 80])
    stencil: str = "central"
    output_dir: str = "out"
    emit_svg: bool = True
    seed: int | None = None
    jobs: int = 1
    allow_nonconverged: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["optimizer"]["line_search"] = self.optimizer.line_search.value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown key")
        try:
            data["mode"] = Mode(data.get("mode"))
        except ValueError:
            raise ConfigError("mode", f"must be one of {[m.value for m in Mode]}") from None
        model = data.get("model", {})
        if not isinstance(model, dict):
            raise ConfigError("model", "must be an object")
        model = dict(model)
        if "theta_inverse" in model:
            model["theta"] = 1.0 / model.pop("theta_inverse")
        try:
            data["model"] = ModelSpec(**model)
        except TypeError as exc:
            raise ConfigError("model", str(exc)) from None
        try:
            data["optimizer"] = MinimizeOptions(**data.get("optimizer", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError("optimizer", str(exc)) from None
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        if not isinstance(self.grid_n, int) or self.grid_n < 8:
            raise ConfigError("grid_n", "must be an integer >= 8")
        if self.stencil not in gsfe.STENCILS:
            raise ConfigError("stencil", f"must be one of {gsfe.STENCILS}")
        if self.jobs < 1:
            raise ConfigError("jobs", "must be >= 1")
        if self.mode is Mode.ETA_SWEEP and not self.etas:
            raise ConfigError("etas", "sweep needs at least one eta")
        if self.mode is Mode.CONVERGENCE_STUDY and not self.thetas:
            raise ConfigError("thetas", "study needs at least one theta")
        if self.mode in (Mode.ATOMISTIC_RELAX, Mode.CONVERGENCE_STUDY):
            for key in ("intra", "inter"):
                if key not in self.potentials:
                    raise ConfigError(f"potentials.{key}", "missing")
        try:
            params = self.model.params()
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("model", str(exc)) from None
        # every mode except derive-params builds a commensurate supercell
        if self.mode is not Mode.DERIVE_PARAMS:
            thetas = self.thetas if self.mode is Mode.CONVERGENCE_STUDY else [params.theta]
            for theta in thetas:
                try:
                    lattice_counts(ModelParams(1.0, theta, 1.0, 0.0))
                except ValueError as exc:
                    path = "thetas" if self.mode is Mode.CONVERGENCE_STUDY else "model.theta"
                    raise ConfigError(path, str(exc)) from None


def _theta_list(values) -> list:
    return [1.0 / v if v > 1 else float(v) for v in values]


def load_config(mode: str, config_path: str | None, overrides: dict) -> RunConfig:
    data = {}
    if config_path is not None:
        try:
            data = json.loads(Path(config_path).read_text())
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {config_path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("--config", "top level must be an object")
    data["mode"] = mode
    if "thetas" in data:
        data["thetas"] = _theta_list(data["thetas"])
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(data)


@dataclass
class ResultRecord:
    inputs: dict
    derived: dict
    energy: float | None
    iterations: int | None
    converged: bool
    files: list
    wall_time_s: float


def _groups_dict(params: ModelParams) -> dict:
    g = dimensionless_groups(params)
    out = {"a_M": moire_period(params), "epsilon": g.epsilon, "delta": g.delta_ratio,
           "eta": g.eta, "eta_abstract": g.eta_abstract}
    try:
        out["M"], out["N"] = lattice_counts(params)
    except ValueError:
        pass
    return out


def _relax_gsfe(params: ModelParams, cfg: RunConfig) -> gsfe.RelaxationResult:
    grid = gsfe.Grid.for_params(params, cfg.grid_n)
    return gsfe.relax(gsfe.DisplacementField.zeros(grid), params, cfg.optimizer,
                      stencil=cfg.stencil, seed=cfg.seed)


def _gsfe_rows(result: gsfe.RelaxationResult, params: ModelParams) -> list[dict]:
    d = gsfe.relaxed_disregistry(result, params)
    a_m = moire_period(params)
    u = result.field.values
    n = result.field.grid.n_points
    return [{
        "x_over_aM": d.x[k] / a_m,
        "u_minus_over_a": u[k % n] / params.a,
        "delta_unreduced_over_a": d.unreduced[k] / params.a,
        "delta_mod_over_period": d.reduced[k] / params.stacking_period,
    } for k in range(n + 1)]


def _gsfe_atoms(result: gsfe.RelaxationResult, params: ModelParams) -> list[dict]:
    """Atom positions before and after relaxation with u_+ = 0."""
    m, n = lattice_counts(params)
    grid = result.field.grid
    xs = np.append(grid.x, grid.origin + grid.domain_length)
    us = np.append(result.field.values, result.field.values[0])
    rows = []
    for layer, count, spacing, sign in ((1, m, params.a, 1.0), (2, n, params.stacking_period, -1.0)):
        for i in range(count):
            x = i * spacing
            u = sign * np.interp(x, xs, us) / math.sqrt(2)
            rows.append({"layer": layer, "index": i, "x_unrelaxed_over_a": x / params.a,
                         "x_relaxed_over_a": (x + u) / params.a})
    return rows


def run_gsfe_relax(cfg: RunConfig, out: Path):
    params = cfg.model.params()
    result = _relax_gsfe(params, cfg)
    rows = _gsfe_rows(result, params)
    files = [emit_csv(rows, out / "gsfe_relax.csv", GSFE_COLUMNS),
             emit_csv(_gsfe_atoms(result, params), out / "gsfe_atoms.csv")]
    if cfg.emit_svg:
        x = [r["x_over_aM"] for r in rows]
        eta = dimensionless_groups(params).eta
        files.append(emit_svg([Series(f"eta = {eta:g}", x, [r["u_minus_over_a"] for r in rows])],
                              out / "gsfe_u_minus.svg", "Relative displacement",
                              "x / a_M", "u_- / a"))
        files.append(emit_svg([Series(f"eta = {eta:g}", x,
                                      [r["delta_mod_over_period"] for r in rows])],
                              out / "gsfe_delta.svg", "Interlayer shift", "x / a_M",
                              "delta mod (1-theta)a / (1-theta)a"))
    return result.energy, result.iterations, result.converged, files, _groups_dict(params)


def run_eta_sweep(cfg: RunConfig, out: Path):
    def one(eta):
        params = params_from_eta(eta, cfg.model.theta, cfg.model.a_nm)
        return eta, params, _relax_gsfe(params, cfg)

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        results = list(pool.map(one, [float(e) for e in cfg.etas]))
    panel_a, panel_b, series_a, series_b = [], [], [], []
    for eta, params, result in results:
        rows = _gsfe_rows(result, params)
        panel_a += [{"eta": eta, "x_over_aM": r["x_over_aM"],
                     "u_minus_over_a": r["u_minus_over_a"]} for r in rows]
        panel_b += [{"eta": eta, "x_over_aM": r["x_over_aM"],
                     "delta_mod_over_period": r["delta_mod_over_period"]} for r in rows]
        x = [r["x_over_aM"] for r in rows]
        series_a.append(Series(f"eta = {eta:g}", x, [r["u_minus_over_a"] for r in rows]))
        series_b.append(Series(f"eta = {eta:g}", x, [r["delta_mod_over_period"] for r in rows]))
    files = [emit_csv(panel_a, out / "eta_sweep_u_minus.csv"),
             emit_csv(panel_b, out / "eta_sweep_delta.csv")]
    if cfg.emit_svg:
        files.append(emit_svg(series_a, out / "eta_sweep_u_minus.svg",
                              "Relative displacement u_-", "x / a_M", "u_- / a"))
        files.append(emit_svg(series_b, out / "eta_sweep_delta.svg", "Interlayer shift",
                              "x / a_M", "delta mod (1-theta)a / (1-theta)a"))
    energy = {f"{e:g}": r.energy for e, _, r in results}
    iterations = sum(r.iterations for _, _, r in results)
    converged = all(r.converged for _, _, r in results)
    derived = {f"{e:g}": _groups_dict(p) for e, p, _ in results}
    return energy, iterations, converged, files, derived


def run_atomistic_relax(cfg: RunConfig, out: Path):
    params = cfg.model.params()
    intra = from_spec(cfg.potentials["intra"])
    inter = from_spec(cfg.potentials["inter"])
    derived = atomistic.derive_continuum(intra, inter, params.theta)
    if not cfg.model.dimensional and cfg.model.eta is not None:
        inter, derived = atomistic.tune_interlayer(intra, inter, params.theta, cfg.model.eta)
    system = atomistic.AtomisticSystem.unrelaxed(params, intra, inter)
    result = atomistic.relax_atomistic(system, cfg.optimizer)
    rows = []
    s = 1.0 - params.theta
    for layer, disp, spacing in ((1, result.system.layer1, 1.0), (2, result.system.layer2, s)):
        for i, u in enumerate(disp):
            rows.append({"layer": layer, "index": i, "x_unrelaxed_over_a": i * spacing,
                         "displacement_over_a": float(u), "x_relaxed_over_a": i * spacing + u})
    files = [emit_csv(rows, out / "atomistic_positions.csv")]
    if cfg.emit_svg:
        m = result.system.m
        u_minus = atomistic.minus_profile(result.system)
        files.append(emit_svg([Series("atomistic U_-", list(np.arange(m) / m), list(u_minus))],
                              out / "atomistic_u_minus.svg", "Atomistic relative displacement",
                              "X", "U_-"))
    eps = params.theta / (1 - params.theta)
    info = {"kappa_tilde": derived.kappa_tilde, "v0_tilde": derived.v0_tilde,
            "sinusoid_residual": derived.residual,
            "eta": atomistic.eta_from_derived(derived, eps) if derived.v0_tilde > 0 else 0.0,
            "epsilon": eps}
    return result.energy, result.iterations, result.converged, files, info


def run_derive_params(cfg: RunConfig, out: Path):
    params = cfg.model.params()
    groups = _groups_dict(params)
    row = {"a_nm": params.a, "theta": params.theta, "kappa_mev_per_nm": params.kappa,
           "v0_mev_per_nm": params.v0, "a_M_nm": groups["a_M"], "M": groups.get("M", ""),
           "N": groups.get("N", ""), "epsilon": groups["epsilon"], "delta": groups["delta"],
           "eta": groups["eta"], "eta_abstract": groups["eta_abstract"]}
    files = [emit_csv([row], out / "derived_params.csv")]
    return None, None, True, files, groups


def run_convergence_study(cfg: RunConfig, out: Path):
    intra = from_spec(cfg.potentials["intra"])
    inter = from_spec(cfg.potentials["inter"])
    eta = cfg.model.eta if cfg.model.eta is not None else 1.0
    rows = atomistic.continuum_comparison(cfg.thetas, eta, intra, inter, cfg.optimizer,
                                          grid_min=cfg.grid_n, jobs=cfg.jobs)
    records = [{c: getattr(r, c) for c in CONVERGENCE_COLUMNS} for r in rows]
    files = [emit_csv(records, out / "convergence.csv", CONVERGENCE_COLUMNS)]
    if cfg.emit_svg:
        eps = [r.epsilon for r in rows]
        series = [Series(name, [e for e, v in zip(eps, vals) if v > 0],
                         [v for v in vals if v > 0])
                  for name, vals in (("L2 error", [r.l2_error for r in rows]),
                                     ("energy gap", [r.energy_gap for r in rows]))]
        series = [s for s in series if len(s.x)]
        if series:
            files.append(emit_svg(series, out / "convergence.svg",
                                  "Atomistic vs continuum minimizers", "epsilon", "error",
                                  logx=True, logy=True))
    for r in rows:
        if not r.converged:
            log.warning("theta=%g: relaxation did not converge (%s / %s)", r.theta,
                        r.atomistic.status, r.continuum.status)
    converged = all(r.converged for r in rows)
    iterations = sum(r.atomistic.iterations + r.continuum.iterations for r in rows)
    return None, iterations, converged, files, {"rows": [asdict_row(r) for r in rows]}


def asdict_row(row) -> dict:
    return {c: getattr(row, c) for c in CONVERGENCE_COLUMNS + ["converged"]}


RUNNERS = {
    Mode.GSFE_RELAX: run_gsfe_relax,
    Mode.ETA_SWEEP: run_eta_sweep,
    Mode.ATOMISTIC_RELAX: run_atomistic_relax,
    Mode.DERIVE_PARAMS: run_derive_params,
    Mode.CONVERGENCE_STUDY: run_convergence_study,
}


def run(cfg: RunConfig) -> ResultRecord:
    """Execute one configured run and write its outputs plus ``result.json``."""
    start = time.perf_counter()
    out = Path(cfg.output_dir)
    energy, iterations, converged, files, derived = RUNNERS[cfg.mode](cfg, out)
    record = ResultRecord(inputs=cfg.to_dict(), derived=derived, energy=energy,
                          iterations=iterations, converged=converged,
                          files=[str(f) for f in files],
                          wall_time_s=time.perf_counter() - start)
    summary = _atomic_write(out / "result.json",
                            json.dumps(asdict(record), indent=2, default=float) + "\n")
    record.files.append(str(summary))
    return record


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moire-relax", description=__doc__.split("\n\n")[0])
    parser.add_argument("mode", choices=[m.value for m in Mode])
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", dest="output_dir", help="output directory")
    parser.add_argument("--jobs", type=int, help="concurrent sweep entries")
    parser.add_argument("--seed", type=int, help="seed for the random initial perturbation")
    parser.add_argument("--grid-n", dest="grid_n", type=int)
    parser.add_argument("--allow-nonconverged", action="store_true", default=None,
                        help="warn instead of failing when a relaxation does not converge")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = {k: getattr(args, k) for k in
                 ("output_dir", "jobs", "seed", "grid_n", "allow_nonconverged")}
    try:
        cfg = load_config(args.mode, args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        record = run(cfg)
    except OutputError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"config error ({cfg.mode.value}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteObjective, ArithmeticError, ValueError) as exc:
        print(f"numerical failure in {cfg.mode.value}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for path in record.files:
        print(path)
    if not record.converged:
        if cfg.allow_nonconverged:
            log.warning("some relaxations did not converge")
        else:
            print(f"{cfg.mode.value}: relaxation did not converge", file=sys.stderr)
            return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
