"""Named scenario presets.

Each preset bundles a grid, nonlinearity spec, kernel spec, initial
density, and evolution defaults.  Config files may start from a preset
and override individual keys.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .fields import Field, Grid, gaussian_density
from .kernels import KernelSpec
from .nonlinearity import NonlinearitySpec
from .semigroup import EvolutionConfig


@dataclass(frozen=True)
class Scenario:
    name: str
    grid: Grid
    spec: NonlinearitySpec
    kernel: KernelSpec
    u0: Field
    evolution: EvolutionConfig


def _linear_spec() -> NonlinearitySpec:
    return NonlinearitySpec(beta_kind="linear", slope=1.0, b_kind="one",
                            drift_kind="zero")


_DEFAULTS = {
    "heat": dict(dim=2, n=128, extent=20.0, kernel=dict(kind="none"),
                 sigma0=1.0, T=0.5, n_steps=500),
    "biot_savart_lamb_oseen": dict(dim=2, n=128, extent=20.0,
                                   kernel=dict(kind="biot_savart"),
                                   sigma0=1.0, T=0.5, n_steps=500),
    "riesz_aggregation_d3": dict(dim=3, n=64, extent=20.0,
                                 kernel=dict(kind="riesz", s=2.0, mu=1.0),
                                 sigma0=1.0, T=0.5, n_steps=500),
    "bessel_chemotaxis_d3": dict(dim=3, n=64, extent=20.0,
                                 kernel=dict(kind="bessel", alpha=1.0),
                                 sigma0=1.0, T=0.5, n_steps=500),
}

SCENARIO_NAMES = tuple(_DEFAULTS) + ("keller_segel",)


def build_scenario(name: str, n: int | None = None,
                   n_steps: int | None = None,
                   T: float | None = None) -> Scenario:
    """Materialize a named preset, optionally overriding resolution/time."""
    if name == "keller_segel":
        # anomalous-diffusion chemotaxis: Bessel drive with a degenerate
        # diffusion floor
        grid = Grid(2, n or 128, 20.0)
        spec = NonlinearitySpec(beta_kind="shifted_power", alpha=0.2, m=2.0,
                                c=1.0, b_kind="one", drift_kind="zero")
        kernel = KernelSpec(kind="bessel", alpha=0.8)
        u0 = gaussian_density(grid, sigma=1.0)
        evo = EvolutionConfig(T=T or 0.25, n_steps=n_steps or 250)
        return Scenario(name, grid, spec, kernel, u0, evo)
    if name not in _DEFAULTS:
        raise ConfigError(f"unknown scenario {name!r}; "
                          f"known: {', '.join(SCENARIO_NAMES)}")
    d = _DEFAULTS[name]
    grid = Grid(d["dim"], n or d["n"], d["extent"])
    spec = _linear_spec()
    kernel = KernelSpec(**d["kernel"])
    u0 = gaussian_density(grid, sigma=d["sigma0"])
    evo = EvolutionConfig(T=T or d["T"], n_steps=n_steps or d["n_steps"])
    return Scenario(name, grid, spec, kernel, u0, evo)
