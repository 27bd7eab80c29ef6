"""Scenario configuration: TOML loading, validation, and assembly.

A scenario file pins one model (two-site bosonic or spin lattice), an
initial state, a time grid, named observables, and the partner-run flags.
Unknown keys anywhere are hard errors: a typo in a physics parameter must
not silently fall back to a default.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .hilbert import HilbertSpace, OperatorMatrix, annihilation, number_op
from .lindblad import (
    DensityMatrix,
    LindbladModel,
    all_ground_state,
    fock_state,
    vacuum_state,
)
from .mapping import (
    gauge_parity_site,
    gauge_spin_flip,
    gauge_state,
    map_model,
    map_state,
    parity_signs,
    spin_flip_signs,
)
from .models import (
    DimerParams,
    LatticeGraph,
    SpinLatticeParams,
    build_dimer,
    build_spin_lattice,
    dimer_space,
    spin_space,
)
from .moments import moment_operator

__all__ = [
    "ConfigError",
    "MappingFlags",
    "IntegratorSettings",
    "ScenarioConfig",
    "load_config",
    "parse_config",
    "observable_operator",
    "bundled_scenario_path",
]


class ConfigError(ValueError):
    """Scenario file failed to parse or validate."""


@dataclass(frozen=True)
class MappingFlags:
    run_partner: bool = False
    apply_gauge: bool = False
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ConfigError("mapping.tolerance must be positive")


@dataclass(frozen=True)
class IntegratorSettings:
    method: str = "adaptive"
    rtol: float = 1e-8
    atol: float = 1e-10

    def __post_init__(self):
        if self.method not in ("adaptive", "fixed"):
            raise ConfigError(f"unknown integrator.method {self.method!r}")
        if self.rtol <= 0 or self.atol <= 0:
            raise ConfigError("integrator tolerances must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario: everything needed to reproduce a run."""

    name: str
    kind: str  # "dimer" or "spin"
    dimer: DimerParams | None
    spin: SpinLatticeParams | None
    initial_kind: str  # "vacuum", "fock", or "all_ground"
    occupations: tuple | None
    t_max: float
    n_points: int
    observables: tuple
    mapping: MappingFlags
    integrator: IntegratorSettings

    def space(self) -> HilbertSpace:
        if self.kind == "dimer":
            return dimer_space(self.dimer)
        return spin_space(self.spin)

    def build_model(self) -> LindbladModel:
        if self.kind == "dimer":
            return build_dimer(self.dimer)
        return build_spin_lattice(self.spin)

    def partner_model(self, q1: LindbladModel) -> LindbladModel:
        """Sign-inverted partner; gauge-aligned when the config asks for it."""
        q2 = map_model(q1)
        if not self.mapping.apply_gauge:
            return q2
        if self.kind == "dimer":
            # site-0 parity restores the drive and (two-site) hopping signs
            return gauge_parity_site(q2, 0)
        return gauge_spin_flip(q2)

    def initial_state(self, space: HilbertSpace) -> DensityMatrix:
        if self.initial_kind == "vacuum":
            return vacuum_state(space)
        if self.initial_kind == "all_ground":
            return all_ground_state(space)
        return fock_state(space, self.occupations)

    def transform_state(self, rho: DensityMatrix) -> DensityMatrix:
        """Image of a q1 state under the configured partner transform."""
        out = map_state(rho)
        if not self.mapping.apply_gauge:
            return out
        if self.kind == "dimer":
            return gauge_state(out, parity_signs(rho.space, 0))
        return gauge_state(out, spin_flip_signs(rho.space))

    def partner_initial_state(self, space: HilbertSpace) -> DensityMatrix:
        # basis projectors are real and diagonal, so conjugation and the
        # gauge signs fix them; routed through the full transform anyway so
        # any future initial-state kind inherits the correct behaviour
        return self.transform_state(self.initial_state(space))

    def observable_ops(self, space: HilbertSpace):
        return [(name, observable_operator(space, name)) for name in self.observables]

    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_points)

    def with_cutoff(self, cutoff: int) -> "ScenarioConfig":
        if self.kind != "dimer":
            raise ConfigError("cutoff override applies to bosonic scenarios only")
        try:
            dimer = replace(self.dimer, cutoff=cutoff)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        cfg = replace(self, dimer=dimer)
        _check_occupations(cfg)
        return cfg

    def with_tolerance(self, tol: float) -> "ScenarioConfig":
        return replace(self, mapping=replace(self.mapping, tolerance=tol))


def observable_operator(space: HilbertSpace, name: str) -> OperatorMatrix:
    """Resolve an observable name on a space.

    Grammar (sites are 1-based in names):
      n<k>          occupation of site k (boson number or spin excitation)
      a<k>          annihilation on bosonic site k
      m<pqrs>       normally ordered two-site moment, one digit per power
    """
    try:
        if name.startswith("m") and len(name) == 5 and name[1:].isdigit():
            return moment_operator(space, tuple(int(c) for c in name[1:]))
        if name.startswith(("n", "a")) and name[1:].isdigit():
            site = int(name[1:]) - 1
            if not 0 <= site < space.n_sites:
                raise ConfigError(
                    f"observable {name!r}: site out of range for "
                    f"{space.n_sites} sites"
                )
            if name[0] == "n":
                return number_op(space, site)
            return annihilation(space, site)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"observable {name!r}: {exc}") from None
    raise ConfigError(
        f"unknown observable {name!r} (expected n<k>, a<k>, or m<pqrs>)"
    )


def _take(section: dict, where: str, key: str, required=True, default=None):
    if key not in section:
        if required:
            raise ConfigError(f"missing key {key!r} in [{where}]")
        return default
    return section.pop(key)


def _no_leftovers(section: dict, where: str) -> None:
    if section:
        names = ", ".join(sorted(section))
        raise ConfigError(f"unknown keys in [{where}]: {names}")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number")
    return float(value)


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer")
    return value


def _boolean(value, where: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{where} must be true or false")
    return value


def _parse_dimer(section: dict) -> DimerParams:
    kwargs = dict(
        U=_number(_take(section, "model", "U"), "model.U"),
        delta_omega=_number(
            _take(section, "model", "delta_omega"), "model.delta_omega"
        ),
        epsilon=_number(_take(section, "model", "epsilon"), "model.epsilon"),
        J=_number(_take(section, "model", "J"), "model.J"),
        cutoff=_integer(_take(section, "model", "cutoff"), "model.cutoff"),
    )
    gamma = _take(section, "model", "gamma", required=False)
    if gamma is not None:
        kwargs["gamma"] = _number(gamma, "model.gamma")
    n_sites = _take(section, "model", "n_sites", required=False)
    if n_sites is not None:
        kwargs["n_sites"] = _integer(n_sites, "model.n_sites")
    _no_leftovers(section, "model")
    try:
        return DimerParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None


def _parse_spin(section: dict) -> SpinLatticeParams:
    graph_name = _take(section, "model", "graph")
    if graph_name == "triangle":
        graph = LatticeGraph.triangle()
    elif graph_name in ("chain", "ring"):
        n_sites = _integer(_take(section, "model", "n_sites"), "model.n_sites")
        try:
            graph = getattr(LatticeGraph, graph_name)(n_sites)
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None
    else:
        raise ConfigError(
            f"unknown graph {graph_name!r} (expected chain, ring, or triangle)"
        )
    drives = _take(section, "model", "drives")
    if not isinstance(drives, list):
        raise ConfigError("model.drives must be a list of numbers")
    kwargs = dict(
        delta_Omega=_number(
            _take(section, "model", "delta_Omega"), "model.delta_Omega"
        ),
        drives=tuple(_number(x, "model.drives") for x in drives),
        J=_number(_take(section, "model", "J"), "model.J"),
        graph=graph,
    )
    Gamma = _take(section, "model", "Gamma", required=False)
    if Gamma is not None:
        kwargs["Gamma"] = _number(Gamma, "model.Gamma")
    _no_leftovers(section, "model")
    try:
        return SpinLatticeParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None


def _check_occupations(cfg: ScenarioConfig) -> None:
    if cfg.initial_kind != "fock":
        return
    space = cfg.space()
    if len(cfg.occupations) != space.n_sites:
        raise ConfigError(
            f"initial_state.occupations needs {space.n_sites} entries"
        )
    for k, occ in enumerate(cfg.occupations):
        if not 0 <= occ < space.dims[k]:
            raise ConfigError(
                f"initial_state.occupations[{k}] = {occ} outside site "
                f"dimension {space.dims[k]}"
            )


def parse_config(text: str, name: str = "scenario") -> ScenarioConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from None

    model = raw.pop("model", None)
    if not isinstance(model, dict):
        raise ConfigError("missing [model] section")
    kind = _take(model, "model", "kind")
    if kind == "dimer":
        dimer, spin = _parse_dimer(model), None
    elif kind == "spin":
        dimer, spin = None, _parse_spin(model)
    else:
        raise ConfigError(f"unknown model.kind {kind!r}")

    initial = raw.pop("initial_state", None)
    if not isinstance(initial, dict):
        raise ConfigError("missing [initial_state] section")
    initial_kind = _take(initial, "initial_state", "kind")
    occupations = None
    if initial_kind == "fock":
        occ = _take(initial, "initial_state", "occupations")
        if not isinstance(occ, list) or not occ:
            raise ConfigError("initial_state.occupations must be a non-empty list")
        occupations = tuple(_integer(x, "initial_state.occupations") for x in occ)
    elif initial_kind not in ("vacuum", "all_ground"):
        raise ConfigError(f"unknown initial_state.kind {initial_kind!r}")
    _no_leftovers(initial, "initial_state")

    grid = raw.pop("grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("[grid] must be a section")
    t_max = _number(_take(grid, "grid", "t_max", required=False, default=5.0), "grid.t_max")
    n_points = _integer(
        _take(grid, "grid", "n_points", required=False, default=501), "grid.n_points"
    )
    _no_leftovers(grid, "grid")
    if t_max <= 0:
        raise ConfigError("grid.t_max must be positive")
    if n_points < 2:
        raise ConfigError("grid.n_points must be at least 2")

    obs_sec = raw.pop("observables", None)
    if not isinstance(obs_sec, dict):
        raise ConfigError("missing [observables] section")
    names = _take(obs_sec, "observables", "names")
    _no_leftovers(obs_sec, "observables")
    if not isinstance(names, list) or not names or not all(
        isinstance(n, str) for n in names
    ):
        raise ConfigError("observables.names must be a non-empty list of strings")
    if len(set(names)) != len(names):
        raise ConfigError("observables.names contains duplicates")

    mapping_sec = raw.pop("mapping", {})
    if not isinstance(mapping_sec, dict):
        raise ConfigError("[mapping] must be a section")
    mapping = MappingFlags(
        run_partner=_boolean(
            _take(mapping_sec, "mapping", "run_partner", required=False, default=False),
            "mapping.run_partner",
        ),
        apply_gauge=_boolean(
            _take(mapping_sec, "mapping", "apply_gauge", required=False, default=False),
            "mapping.apply_gauge",
        ),
        tolerance=_number(
            _take(mapping_sec, "mapping", "tolerance", required=False, default=1e-6),
            "mapping.tolerance",
        ),
    )
    _no_leftovers(mapping_sec, "mapping")

    integ_sec = raw.pop("integrator", {})
    if not isinstance(integ_sec, dict):
        raise ConfigError("[integrator] must be a section")
    integ_kwargs = {}
    method = _take(integ_sec, "integrator", "method", required=False)
    if method is not None:
        integ_kwargs["method"] = method
    for key in ("rtol", "atol"):
        val = _take(integ_sec, "integrator", key, required=False)
        if val is not None:
            integ_kwargs[key] = _number(val, f"integrator.{key}")
    _no_leftovers(integ_sec, "integrator")
    integrator = IntegratorSettings(**integ_kwargs)

    if raw:
        raise ConfigError(f"unknown sections: {', '.join(sorted(raw))}")

    cfg = ScenarioConfig(
        name=name,
        kind=kind,
        dimer=dimer,
        spin=spin,
        initial_kind=initial_kind,
        occupations=occupations,
        t_max=t_max,
        n_points=n_points,
        observables=tuple(names),
        mapping=mapping,
        integrator=integrator,
    )
    _check_occupations(cfg)
    # resolve every observable once so bad names fail at load time
    space = cfg.space()
    for obs_name in cfg.observables:
        observable_operator(space, obs_name)
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, name=path.stem)


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (fig1, fig2)."""
    path = Path(__file__).parent / "scenarios" / f"{name}.cfg"
    if not path.exists():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return path
