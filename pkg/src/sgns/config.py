"""Run configuration: typed sections, flat text format and a JSON mirror.

A run is described by dataclass sections (domain, model, noise, solver,
initial law, ensemble, diagnostics toggles, output). The canonical disk
format is flat ``section.key = value`` text, diffable and hand-editable;
a nested JSON mirror of the same keys is accepted interchangeably. Every
parsed configuration is validated eagerly, errors name the offending key,
and serialization round-trips bit-exactly, which is what makes the config
hash a faithful identity for a run.
"""

import json
import math
from dataclasses import dataclass, field, replace

from . import constitutive, noise, solver, spectral
from .errors import ConfigError, ResolutionTooLow


@dataclass(frozen=True)
class ModelSpec:
    family: str = "power"          # "power" or "newtonian"
    p: float = 2.5                 # power-law exponent (power only)
    mu: float = 1.0                # shear viscosity (newtonian only)
    lam: float = 0.0               # bulk coupling (newtonian only)
    pressure_a: float = 1.0
    pressure_gamma: float = 2.0


@dataclass(frozen=True)
class NoiseSpec:
    count: int = 4
    amplitude: float = 0.05
    alpha: float = 0.1


@dataclass(frozen=True)
class SolverSpec:
    level: str = "regularized"     # "regularized" or "base"
    dt: float = 1e-3
    t_final: float = 0.5
    hyper_viscosity: float = 1e-4
    regularization: float = 0.01
    cutoff_radius: float = math.inf
    pressure_weight: float = 1.0
    cfl_safety: float = 0.9
    snapshot_every: int = 0        # steps between snapshots; 0 disables
    stop_norm: float = math.inf    # in-run stopping thresholds; inf disables
    stop_dissipation: float = math.inf
    stop_radii: tuple = ()         # ladder for post-hoc stopping statistics


@dataclass(frozen=True)
class InitialSpec:
    rho_mid: float = 1.0
    rho_halfwidth: float = 0.5
    fill: float = 0.5
    rho_waves: int = 2
    velocity_scale: float = 0.1
    velocity_decay: float = 2.0
    velocity_cap: float = math.inf


@dataclass(frozen=True)
class EnsembleSpec:
    paths: int = 64
    base_seed: int = 0


@dataclass(frozen=True)
class DiagnosticsSpec:
    energy: bool = True
    entropy: bool = True
    bounds: bool = True
    qv: bool = True
    weakform: bool = True
    fenchel: bool = True
    stopping: bool = True
    orlicz: bool = False           # needs the sine family on a box <= 1


def _default_domain():
    return spectral.DomainSpec(
        dim=2, lengths=(math.pi, math.pi), family="sine",
        modes=(16, 16), grid=(48, 48),
    )


@dataclass(frozen=True)
class RunConfig:
    domain: spectral.DomainSpec = field(default_factory=_default_domain)
    model: ModelSpec = ModelSpec()
    noise: NoiseSpec = NoiseSpec()
    solver: SolverSpec = SolverSpec()
    initial: InitialSpec = InitialSpec()
    ensemble: EnsembleSpec = EnsembleSpec()
    diagnostics: DiagnosticsSpec = DiagnosticsSpec()
    output_dir: str = ""


# Canonical key order; each entry is (dotted key, value type). The type
# tags drive both parsing and formatting so the two stay inverse.
SCHEMA = (
    ("domain.dim", "int"),
    ("domain.lengths", "floats"),
    ("domain.family", "str"),
    ("domain.modes", "ints"),
    ("domain.grid", "ints"),
    ("model.family", "str"),
    ("model.p", "float"),
    ("model.mu", "float"),
    ("model.lam", "float"),
    ("model.pressure_a", "float"),
    ("model.pressure_gamma", "float"),
    ("noise.count", "int"),
    ("noise.amplitude", "float"),
    ("noise.alpha", "float"),
    ("solver.level", "str"),
    ("solver.dt", "float"),
    ("solver.t_final", "float"),
    ("solver.hyper_viscosity", "float"),
    ("solver.regularization", "float"),
    ("solver.cutoff_radius", "float"),
    ("solver.pressure_weight", "float"),
    ("solver.cfl_safety", "float"),
    ("solver.snapshot_every", "int"),
    ("solver.stop_norm", "float"),
    ("solver.stop_dissipation", "float"),
    ("solver.stop_radii", "floats"),
    ("initial.rho_mid", "float"),
    ("initial.rho_halfwidth", "float"),
    ("initial.fill", "float"),
    ("initial.rho_waves", "int"),
    ("initial.velocity_scale", "float"),
    ("initial.velocity_decay", "float"),
    ("initial.velocity_cap", "float"),
    ("ensemble.paths", "int"),
    ("ensemble.base_seed", "int"),
    ("diagnostics.energy", "bool"),
    ("diagnostics.entropy", "bool"),
    ("diagnostics.bounds", "bool"),
    ("diagnostics.qv", "bool"),
    ("diagnostics.weakform", "bool"),
    ("diagnostics.fenchel", "bool"),
    ("diagnostics.stopping", "bool"),
    ("diagnostics.orlicz", "bool"),
    ("output.directory", "str"),
)

_TYPES = dict(SCHEMA)


def _parse_value(key, kind, text):
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind == "str":
            return text
        if kind == "floats":
            return tuple(float(v) for v in text.split(",")) if text else ()
        if kind == "ints":
            return tuple(int(v) for v in text.split(",")) if text else ()
    except ValueError as err:
        raise ConfigError(f"{key}: {err}") from err
    raise ValueError(f"unknown schema type {kind!r}")


def _format_value(kind, value):
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("floats", "ints"):
        return ", ".join(repr(v) for v in value)
    if kind == "float":
        return repr(float(value))
    return str(value)


def to_mapping(config: RunConfig):
    """Flat dotted-key view of a configuration, in schema order."""
    dom = config.domain
    flat = {
        "domain.dim": dom.dim,
        "domain.lengths": dom.lengths_tuple(),
        "domain.family": dom.family,
        "domain.modes": dom.modes_tuple(),
        "domain.grid": dom.grid_tuple(),
        "output.directory": config.output_dir,
    }
    for section in ("model", "noise", "solver", "initial", "ensemble",
                    "diagnostics"):
        obj = getattr(config, section)
        for name in obj.__dataclass_fields__:
            flat[f"{section}.{name}"] = getattr(obj, name)
    return {key: flat[key] for key, _ in SCHEMA}


def _broadcast_axis(key, values, dim):
    if len(values) == 1 and dim > 1:
        return values * dim
    if len(values) != dim:
        raise ConfigError(f"{key}: expected 1 or {dim} values, got {len(values)}")
    return values


def from_mapping(flat):
    """Build a validated RunConfig from a flat dotted-key mapping."""
    unknown = sorted(set(flat) - set(_TYPES))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    values = {key: default for key, default in to_mapping(RunConfig()).items()}
    values.update(flat)

    if not isinstance(values["domain.dim"], int) or not 1 <= values["domain.dim"] <= 3:
        raise ConfigError("domain.dim: must be 1, 2 or 3")
    dim = values["domain.dim"]
    domain = spectral.DomainSpec(
        dim=dim,
        lengths=_broadcast_axis("domain.lengths",
                                tuple(values["domain.lengths"]), dim),
        family=values["domain.family"],
        modes=_broadcast_axis("domain.modes",
                              tuple(values["domain.modes"]), dim),
        grid=_broadcast_axis("domain.grid", tuple(values["domain.grid"]), dim),
    )

    def section(cls, name):
        kwargs = {
            key: values[f"{name}.{key}"] for key in cls.__dataclass_fields__
        }
        return cls(**kwargs)

    config = RunConfig(
        domain=domain,
        model=section(ModelSpec, "model"),
        noise=section(NoiseSpec, "noise"),
        solver=section(SolverSpec, "solver"),
        initial=section(InitialSpec, "initial"),
        ensemble=section(EnsembleSpec, "ensemble"),
        diagnostics=section(DiagnosticsSpec, "diagnostics"),
        output_dir=values["output.directory"],
    )
    validate(config)
    return config


def to_text(config: RunConfig):
    """Canonical flat-text serialization (the on-disk config format)."""
    lines = []
    previous = None
    for key, kind in SCHEMA:
        section = key.split(".", 1)[0]
        if previous is not None and section != previous:
            lines.append("")
        previous = section
        value = to_mapping(config)[key]
        lines.append(f"{key} = {_format_value(kind, value)}")
    return "\n".join(lines) + "\n"


def parse_text(text):
    """Parse the flat-text format; later keys may not repeat earlier ones."""
    flat = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if key in flat:
            raise ConfigError(f"duplicate config key {key!r}")
        flat[key] = _parse_value(key, _TYPES[key], value)
    return from_mapping(flat)


def to_json_text(config: RunConfig):
    """Nested JSON mirror of the flat key space."""
    nested = {}
    for key, value in to_mapping(config).items():
        section, name = key.split(".", 1)
        entry = nested.setdefault(section, {})
        entry[name] = list(value) if isinstance(value, tuple) else value
    return json.dumps(nested, indent=2, sort_keys=True) + "\n"


def from_json_text(text):
    try:
        nested = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON config: {err}") from err
    if not isinstance(nested, dict):
        raise ConfigError("JSON config must be an object of sections")
    flat = {}
    for section, entries in nested.items():
        if not isinstance(entries, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for name, value in entries.items():
            key = f"{section}.{name}"
            if key not in _TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            if isinstance(value, list):
                value = tuple(value)
            flat[key] = value
    return from_mapping(flat)


def load_config(path):
    """Read a configuration file, dispatching on the .json suffix."""
    with open(path) as fh:
        text = fh.read()
    if str(path).endswith(".json"):
        return from_json_text(text)
    return parse_text(text)


@dataclass(eq=False)
class Components:
    """Solver-ready objects built from one configuration."""

    basis: object
    model: object
    forcing: object
    params: object
    law: object


def build_components(config: RunConfig) -> Components:
    """Materialize basis, model, noise, params and law, or fail with paths."""
    if any(m < 1 for m in config.domain.modes_tuple()):
        raise ConfigError("domain.modes: need at least one mode per axis")
    try:
        basis = spectral.build_basis(config.domain)
    except ResolutionTooLow as err:
        raise ConfigError(f"domain.grid: {err}") from err
    except ValueError as err:
        raise ConfigError(f"domain: {err}") from err

    m = config.model
    if m.family == "power":
        if m.p <= 1.0:
            raise ConfigError("model.p: power-law exponent must exceed 1")
        family = constitutive.PowerLaw(p=m.p)
    elif m.family == "newtonian":
        try:
            family = constitutive.Newtonian(mu=m.mu, lam=m.lam)
        except ValueError as err:
            raise ConfigError(f"model: {err}") from err
    else:
        raise ConfigError(
            f"model.family: expected 'power' or 'newtonian', got {m.family!r}"
        )
    if m.pressure_gamma <= 1.0:
        raise ConfigError("model.pressure_gamma: adiabatic exponent must exceed 1")
    try:
        model = constitutive.ConstitutiveModel(
            family=family, pressure_a=m.pressure_a,
            pressure_gamma=m.pressure_gamma,
        )
    except ValueError as err:
        raise ConfigError(f"model: {err}") from err

    if not 0.0 < config.noise.alpha < 0.5:
        raise ConfigError("noise.alpha: cutoff level must lie in (0, 0.5)")
    try:
        forcing = noise.build_noise(
            count=config.noise.count, amplitude=config.noise.amplitude,
            alpha=config.noise.alpha,
        )
    except ValueError as err:
        raise ConfigError(f"noise: {err}") from err

    s = config.solver
    if s.level not in ("regularized", "base"):
        raise ConfigError(
            f"solver.level: expected 'regularized' or 'base', got {s.level!r}"
        )
    if s.level == "base" and s.regularization != 0.0:
        raise ConfigError("solver.level: the base level requires zero regularization")
    if s.dt <= 0.0:
        raise ConfigError("solver.dt: must be positive")
    if s.t_final <= 0.0:
        raise ConfigError("solver.t_final: must be positive")
    steps = round(s.t_final / s.dt)
    if steps < 1 or abs(steps * s.dt - s.t_final) > 1e-9 * max(1.0, s.t_final):
        raise ConfigError("solver.t_final: must be a whole number of dt steps")
    if s.snapshot_every < 0:
        raise ConfigError("solver.snapshot_every: must be nonnegative")
    if s.stop_radii:
        radii = tuple(s.stop_radii)
        if any(r <= 1.0 for r in radii) or list(radii) != sorted(radii):
            raise ConfigError(
                "solver.stop_radii: must be ascending and exceed one"
            )
    try:
        params = solver.SolverParams(
            dt=s.dt, hyper_viscosity=s.hyper_viscosity,
            regularization=s.regularization, cutoff_radius=s.cutoff_radius,
            pressure_weight=s.pressure_weight, cfl_safety=s.cfl_safety,
        )
    except ValueError as err:
        raise ConfigError(f"solver: {err}") from err

    i = config.initial
    try:
        law = solver.InitialLaw(
            rho_mid=i.rho_mid, rho_halfwidth=i.rho_halfwidth, fill=i.fill,
            rho_waves=i.rho_waves, velocity_scale=i.velocity_scale,
            velocity_decay=i.velocity_decay, velocity_cap=i.velocity_cap,
        )
    except ValueError as err:
        raise ConfigError(f"initial: {err}") from err

    if config.ensemble.paths < 1:
        raise ConfigError("ensemble.paths: need at least one path")
    if config.ensemble.base_seed < 0:
        raise ConfigError("ensemble.base_seed: must be nonnegative")
    return Components(basis=basis, model=model, forcing=forcing,
                      params=params, law=law)


def validate(config: RunConfig) -> RunConfig:
    """Validate by materializing every component; returns the config."""
    build_components(config)
    return config


def with_overrides(config: RunConfig, **flat):
    """Functional update through the flat key space, revalidating."""
    mapping = to_mapping(config)
    mapping.update(flat)
    return from_mapping(mapping)


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    value = 0xCBF29CE484222325
    for byte in data:
        value ^= byte
        value = (value * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return value


def config_hash(config: RunConfig) -> str:
    """Hash of the canonical text, the identity of a run."""
    return f"{fnv1a64(to_text(config).encode()):016x}"
