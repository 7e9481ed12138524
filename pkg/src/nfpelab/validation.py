"""Self-contained oracle battery behind `nfpe validate`.

Every check pits a production code path against an independent route:
direct summation, closed forms, or exactly solvable special cases.  The
negative_control flag injects a deliberate quadrature-weight bug into
the convolution check to prove the oracle can fail.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .fields import Field, Grid, gaussian_density, gaussian_mixture_density
from .kernels import KernelSpec, gamma_estimate
from .nonlinearity import NonlinearitySpec, beta_eps, interaction_energy
from .resolvent import ResolventConfig, check_lemma31, resolvent_step
from .semigroup import EvolutionConfig, evolve
from .spectral import (convolve_direct, convolve_spectral, dft_forward,
                       dft_inverse, lp_norm)


@dataclass(frozen=True)
class OracleResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    seconds: float

    def line(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: {self.measured:.3e}"
                f" (threshold {self.threshold:.1e}, {self.seconds:.2f}s)")


def _timed(name, threshold, fn) -> OracleResult:
    t0 = time.perf_counter()
    measured = float(fn())
    dt = time.perf_counter() - t0
    return OracleResult(name, measured <= threshold, measured, threshold, dt)


def _check_dft_round_trip() -> float:
    worst = 0.0
    for dim, n in ((2, 64), (3, 16)):
        grid = Grid(dim, n, 7.5)
        rng = np.random.default_rng(1234 + dim)
        f = Field(grid, rng.standard_normal(grid.shape))
        back = dft_inverse(dft_forward(f))
        scale = float(np.abs(f.values).max())
        worst = max(worst,
                    float(np.abs(back.values - f.values).max()) / scale)
        # Parseval: sum |fhat|^2 = n^d sum |f|^2
        fh = dft_forward(f).coeffs
        lhs = float(np.sum(np.abs(fh) ** 2))
        rhs = float(n ** dim * np.sum(f.values ** 2))
        worst = max(worst, abs(lhs - rhs) / rhs)
    return worst


def _check_convolution(negative_control: bool) -> float:
    grid = Grid(2, 16, 4.0)
    rng = np.random.default_rng(77)
    k = Field(grid, rng.standard_normal(grid.shape + (2,)))
    u = Field(grid, rng.standard_normal(grid.shape))
    spectral = convolve_spectral(k, u).values
    if negative_control:
        spectral = spectral * (1.0 + 1e-3)  # injected multiplier bug
    direct = convolve_direct(k, u).values
    return float(np.abs(spectral - direct).max())


def _check_beta_eps_linear() -> float:
    spec = NonlinearitySpec(beta_kind="linear", slope=1.0)
    worst = 0.0
    for eps in (0.5, 0.1, 1e-3):
        r = np.linspace(-20.0, 20.0, 401)
        exact = eps * r + r / (1.0 + eps)
        got = beta_eps(r, spec, eps)
        worst = max(worst, float(np.abs(got - exact).max()
                                 / (1.0 + np.abs(exact).max())))
    return worst


def _check_entropy_interaction() -> float:
    grid = Grid(2, 16, 8.0)
    kspec = KernelSpec(kind="bessel", alpha=0.8)
    u = gaussian_mixture_density(grid, seed=5, components=3)
    fast = interaction_energy(u, kspec)
    from .kernels import interaction_potential
    w = interaction_potential(kspec, grid).values
    uv = u.values
    n = grid.n
    total = 0.0
    for i in np.ndindex(grid.shape):
        shifted = np.roll(w, shift=i, axis=(0, 1))
        total += uv[i] * float(np.sum(shifted * uv))
    direct = 0.5 * total * grid.cell_volume ** 2
    return abs(fast - direct) / max(abs(direct), 1e-300)


def _check_linear_resolvent() -> float:
    grid = Grid(2, 64, 10.0)
    spec = NonlinearitySpec()
    kspec = KernelSpec(kind="none")
    f = gaussian_density(grid, sigma=0.8)
    lam, eps = 1e-2, 1e-2
    res = resolvent_step(f, ResolventConfig(lam=lam, eps=eps), spec, kspec)
    # beta=id: u = (I - lam * mu * Lap)^{-1} f with mu = eps + 1/(1+eps)
    from .spectral import _ksq_r, _rfft, _irfft
    mu = eps + 1.0 / (1.0 + eps)
    exact = _irfft(grid, _rfft(grid, f.values) / (1.0 + lam * mu * _ksq_r(grid)))
    return float(np.abs(res.u.values - exact).max()
                 / np.abs(exact).max())


def _check_heat_oracle() -> float:
    grid = Grid(2, 64, 20.0)
    spec = NonlinearitySpec()
    kspec = KernelSpec(kind="none")
    u0 = gaussian_density(grid, sigma=1.0)
    T = 0.1
    cfg = EvolutionConfig(T=T, n_steps=100,
                          monitors=frozenset({"mass"}))
    traj = evolve(u0, cfg, spec, kspec)
    if traj.error:
        return float("inf")
    exact = gaussian_density(grid, sigma=float(np.sqrt(1.0 + 2 * T)))
    diff = Field(grid, traj.final.values - exact.values)
    return lp_norm(diff, 2)


def _check_lamb_oseen() -> float:
    grid = Grid(2, 64, 20.0)
    spec = NonlinearitySpec()
    u0 = gaussian_density(grid, sigma=1.0)
    T = 0.1
    cfg = EvolutionConfig(T=T, n_steps=100, monitors=frozenset({"mass"}))
    heat = evolve(u0, cfg, spec, KernelSpec(kind="none"))
    vortex = evolve(u0, cfg, spec, KernelSpec(kind="biot_savart"))
    if heat.error or vortex.error:
        return float("inf")
    dev = lp_norm(Field(grid, vortex.final.values - heat.final.values), 2)
    growth = float(vortex.final.values.max() - u0.values.max())
    # both the tangential-flow deviation and the gamma=0 maximum principle
    return max(dev, growth / 1e-3)


def _check_lemma31_matrix() -> float:
    cases = [
        ("heat", Grid(2, 64, 20.0), KernelSpec(kind="none")),
        ("biot_savart", Grid(2, 64, 20.0), KernelSpec(kind="biot_savart")),
        ("riesz", Grid(3, 32, 20.0), KernelSpec(kind="riesz", s=2.0, mu=1.0)),
        ("bessel", Grid(3, 32, 20.0), KernelSpec(kind="bessel", alpha=1.0)),
    ]
    spec = NonlinearitySpec()
    worst = 0.0
    for name, grid, kspec in cases:
        est = gamma_estimate(kspec, grid)
        gamma = est.value  # grid-resolution estimate; see README on bessel
        f = gaussian_mixture_density(grid, seed=42)
        for lam in (1e-3, 1e-2):
            for eps in (1e-2, 1e-3):
                cfg = ResolventConfig(lam=lam, eps=eps)
                res = resolvent_step(f, cfg, spec, kspec)
                rep = check_lemma31(res, f, cfg, gamma)
                worst = max(worst,
                            abs(rep.mass_out - rep.mass_in) / 1e-9,
                            -rep.min_u / 1e-8,
                            (rep.max_u - rep.linf_bound) / 1e-8)
    return worst


def run_battery(negative_control: bool = False,
                quick: bool = False) -> list[OracleResult]:
    checks = [
        _timed("dft round trip and parseval", 1e-12, _check_dft_round_trip),
        _timed("spectral vs direct convolution (n=16)", 1e-10,
               lambda: _check_convolution(negative_control)),
        _timed("scalar beta_eps closed form (linear beta)", 1e-13,
               _check_beta_eps_linear),
        _timed("entropy interaction vs direct double sum", 1e-10,
               _check_entropy_interaction),
        _timed("linear resolvent closed form", 1e-10,
               _check_linear_resolvent),
    ]
    if not quick:
        checks += [
            _timed("heat kernel evolution oracle", 1e-3, _check_heat_oracle),
            _timed("lamb-oseen tangential flow + maximum principle", 5e-3,
                   _check_lamb_oseen),
            _timed("lemma 3.1 invariant matrix (normalized)", 1.0,
                   _check_lemma31_matrix),
        ]
    return checks


def battery_table(results: list[OracleResult]) -> str:
    lines = [r.line() for r in results]
    total = sum(r.seconds for r in results)
    ok = all(r.passed for r in results)
    lines.append(f"battery: {'all pass' if ok else 'FAILURES'} "
                 f"({total:.1f}s total)")
    return "\n".join(lines)
