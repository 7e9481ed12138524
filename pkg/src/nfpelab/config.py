"""Run configuration: flat dotted-key text files.

Format: one `section.key = value` per line, `#` comments, UTF-8.
Unknown keys are hard errors so misspelled hypothesis knobs cannot be
silently ignored.  Values parse as int, float, bool, or bare string.

A resolved config (presets expanded, defaults filled) serializes back to
the same format; re-running from the frozen copy reproduces the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, MissingInputError
from .fields import Field, Grid, gaussian_density, gaussian_mixture_density, \
    read_snapshot, uniform_density
from .kernels import KernelSpec
from .nonlinearity import NonlinearitySpec
from .semigroup import DEFAULT_MONITORS, EvolutionConfig
from .scenarios import SCENARIO_NAMES, build_scenario

# key -> (type, default); None default means "required or preset-supplied"
KNOWN_KEYS: dict[str, tuple] = {
    "scenario": (str, None),
    "seed": (int, 0),
    "output.dir": (str, None),
    "threads": (int, None),

    "grid.dim": (int, None),
    "grid.n": (int, None),
    "grid.extent": (float, None),

    "nonlinearity.beta": (str, "linear"),
    "nonlinearity.slope": (float, 1.0),
    "nonlinearity.alpha": (float, 0.1),
    "nonlinearity.m": (float, 2.0),
    "nonlinearity.c": (float, 1.0),
    "nonlinearity.b": (str, "one"),
    "nonlinearity.r0": (float, 1.0),

    "drift.kind": (str, "zero"),
    "drift.potential": (str, "cosine"),
    "drift.amplitude": (float, 1.0),
    "drift.axis": (int, 0),
    "drift.potential_path": (str, None),
    "drift.path": (str, None),

    "kernel.kind": (str, "none"),
    "kernel.s": (float, 2.0),
    "kernel.mu": (float, 1.0),
    "kernel.alpha": (float, 1.0),
    "kernel.eps_cut": (float, 0.0),
    "kernel.path": (str, None),

    "initial.kind": (str, "gaussian"),
    "initial.sigma": (float, 1.0),
    "initial.components": (int, 4),
    "initial.path": (str, None),

    "evolution.T": (float, None),
    "evolution.n_steps": (int, None),
    "evolution.scheme": (str, "implicit_euler"),
    "evolution.eps": (float, None),
    "evolution.snapshot_every": (int, 0),
    "evolution.fp_tol": (float, 1e-10),
    "evolution.max_iter": (int, 500),
    "evolution.clip_negative": (bool, False),

    "particles.N": (int, 10000),
    "particles.dt": (float, 1e-2),
    "particles.T": (float, None),
    "particles.mode": (str, "frozen"),
    "particles.bandwidth": (float, None),
    "particles.trajectory": (str, None),
    "particles.snapshot_every": (int, 0),
    "particles.save_positions": (bool, False),

    "probes.enabled": (bool, False),
    "probes.eps_list": (str, "0.1,0.01,0.001"),
}

_REQUIRED_WITHOUT_SCENARIO = ("grid.dim", "grid.n", "grid.extent",
                              "evolution.T", "evolution.n_steps")


def _parse_value(text: str, line_no: int, key: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    out = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"{origin}:{line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{origin}:{line_no}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{origin}:{line_no}: duplicate key {key!r}")
        out[key] = _parse_value(value, line_no, key)
    return out


def parse_config_file(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"config file not found: {path}")
    return parse_config_text(p.read_text(encoding="utf-8"), origin=str(path))


def _coerce(key: str, value):
    want, _ = KNOWN_KEYS[key]
    if want is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"key {key!r} expects true/false, got {value!r}")
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"key {key!r} expects an integer, got {value!r}")
        return value
    if want is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"key {key!r} expects a number, got {value!r}")
    return str(value)


@dataclass
class ResolvedRun:
    """Everything a run needs, derived from a config mapping."""

    raw: dict
    grid: Grid
    spec: NonlinearitySpec
    kernel: KernelSpec
    u0: Field
    evolution: EvolutionConfig
    seed: int
    scenario: str | None = None
    probes_eps: tuple[float, ...] = ()
    probes_enabled: bool = False
    particles: dict = field(default_factory=dict)

    def config_text(self) -> str:
        lines = [f"{k} = {_format_value(v)}"
                 for k, v in sorted(self.raw.items())]
        return "\n".join(lines) + "\n"


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def resolve(config: dict, base_dir: Path | None = None) -> ResolvedRun:
    cfg = {}
    scenario_name = config.get("scenario")
    if scenario_name is not None:
        if scenario_name not in SCENARIO_NAMES:
            raise ConfigError(f"unknown scenario {scenario_name!r}; "
                              f"known: {', '.join(SCENARIO_NAMES)}")
        cfg.update(_scenario_defaults(scenario_name))
    for key, value in config.items():
        cfg[key] = _coerce(key, value)
    for key in _REQUIRED_WITHOUT_SCENARIO:
        if key not in cfg or cfg[key] is None:
            raise ConfigError(f"missing required key {key!r}")

    def get(key):
        if key in cfg:
            return cfg[key]
        _, default = KNOWN_KEYS[key]
        return default

    grid = Grid(get("grid.dim"), get("grid.n"), get("grid.extent"))

    spec_kwargs = dict(
        beta_kind=get("nonlinearity.beta"), slope=get("nonlinearity.slope"),
        alpha=get("nonlinearity.alpha"), m=get("nonlinearity.m"),
        c=get("nonlinearity.c"), b_kind=get("nonlinearity.b"),
        r0=get("nonlinearity.r0"), drift_kind=get("drift.kind"))
    if get("drift.kind") == "grad_potential":
        if get("drift.potential_path"):
            spec_kwargs["potential_kind"] = "tabulated"
            spec_kwargs["potential_table"] = _load_field(
                get("drift.potential_path"), base_dir)
        else:
            spec_kwargs.update(potential_kind=get("drift.potential"),
                               potential_amplitude=get("drift.amplitude"),
                               potential_axis=get("drift.axis"))
    elif get("drift.kind") == "tabulated":
        if not get("drift.path"):
            raise ConfigError("drift.kind = tabulated requires drift.path")
        spec_kwargs["drift_table"] = _load_field(get("drift.path"), base_dir)
    spec = NonlinearitySpec(**spec_kwargs)

    kernel_kwargs = dict(kind=get("kernel.kind"), s=get("kernel.s"),
                         mu=get("kernel.mu"), alpha=get("kernel.alpha"),
                         eps_cut=get("kernel.eps_cut"))
    if get("kernel.kind") == "tabulated":
        if not get("kernel.path"):
            raise ConfigError("kernel.kind = tabulated requires kernel.path")
        kernel_kwargs["table"] = _load_field(get("kernel.path"), base_dir)
    kernel = KernelSpec(**kernel_kwargs)
    kernel.validate(grid.dim)

    u0 = _initial_density(cfg, grid, get, base_dir)

    evolution = EvolutionConfig(
        T=get("evolution.T"), n_steps=get("evolution.n_steps"),
        scheme=get("evolution.scheme"), eps=get("evolution.eps"),
        snapshot_every=get("evolution.snapshot_every"),
        monitors=DEFAULT_MONITORS, fp_tol=get("evolution.fp_tol"),
        max_iter=get("evolution.max_iter"),
        clip_negative=get("evolution.clip_negative"))

    probes_eps = tuple(float(tok) for tok in
                       str(get("probes.eps_list")).split(",") if tok.strip())

    particles = {k.split(".", 1)[1]: v for k, v in cfg.items()
                 if k.startswith("particles.")}

    return ResolvedRun(raw=dict(sorted(cfg.items())), grid=grid, spec=spec,
                       kernel=kernel, u0=u0, evolution=evolution,
                       seed=get("seed") or 0, scenario=scenario_name,
                       probes_eps=probes_eps,
                       probes_enabled=bool(get("probes.enabled")),
                       particles=particles)


def _scenario_defaults(name: str) -> dict:
    sc = build_scenario(name)
    out = {
        "scenario": name,
        "grid.dim": sc.grid.dim, "grid.n": sc.grid.n,
        "grid.extent": sc.grid.extent[0],
        "nonlinearity.beta": sc.spec.beta_kind,
        "nonlinearity.slope": sc.spec.slope,
        "nonlinearity.alpha": sc.spec.alpha,
        "nonlinearity.m": sc.spec.m,
        "nonlinearity.c": sc.spec.c,
        "nonlinearity.b": sc.spec.b_kind,
        "drift.kind": sc.spec.drift_kind,
        "kernel.kind": sc.kernel.kind,
        "kernel.s": sc.kernel.s, "kernel.mu": sc.kernel.mu,
        "kernel.alpha": sc.kernel.alpha,
        "kernel.eps_cut": sc.kernel.eps_cut,
        "initial.kind": "gaussian", "initial.sigma": 1.0,
        "evolution.T": sc.evolution.T,
        "evolution.n_steps": sc.evolution.n_steps,
    }
    return out


def _initial_density(cfg: dict, grid: Grid, get, base_dir) -> Field:
    kind = get("initial.kind")
    if kind == "gaussian":
        return gaussian_density(grid, sigma=get("initial.sigma"))
    if kind == "mixture":
        return gaussian_mixture_density(grid, seed=get("seed") or 0,
                                        components=get("initial.components"))
    if kind == "uniform":
        return uniform_density(grid)
    if kind == "snapshot":
        if not get("initial.path"):
            raise ConfigError("initial.kind = snapshot requires initial.path")
        f = _load_field(get("initial.path"), base_dir)
        if f.grid != grid:
            raise ConfigError("initial snapshot grid does not match grid block")
        return f
    raise ConfigError(f"unknown initial.kind {kind!r}")


def _load_field(path: str, base_dir: Path | None) -> Field:
    p = Path(path)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    return read_snapshot(p)
