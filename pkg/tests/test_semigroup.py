"""Tests for time evolution, the exponential formula, the frozen-linear
equation, and trajectory comparison monitors.

The heat case (linear beta, no drift, no kernel) provides closed-form
oracles: periodized Gaussians evolve with variance sigma0^2 + 2t, and
the backward-Euler chain must converge to the exact spectral semigroup
at first order.
"""

import numpy as np
import pytest

from nfpelab.fields import Field, Grid, gaussian_density, uniform_density
from nfpelab.kernels import KernelSpec
from nfpelab.nonlinearity import NonlinearitySpec
from nfpelab.semigroup import (EvolutionConfig, evolve, evolve_frozen_linear,
                               exponential_formula, monitor_theorem21)
from nfpelab.spectral import hminus1_norm, lp_norm

LINEAR = NonlinearitySpec()
NONE = KernelSpec(kind="none")


def _heat_exact(grid, sigma0, t):
    return gaussian_density(grid, sigma=float(np.sqrt(sigma0 ** 2 + 2 * t)))


class TestEvolve:
    def test_heat_oracle(self):
        g = Grid(2, 64, 20.0)
        u0 = gaussian_density(g, sigma=1.0)
        T = 0.1
        traj = evolve(u0, EvolutionConfig(T=T, n_steps=100), LINEAR, NONE)
        assert traj.error is None
        err = lp_norm(Field(g, traj.final.values
                            - _heat_exact(g, 1.0, T).values), 2)
        assert err < 1e-3

    def test_uniform_is_stationary(self):
        g = Grid(2, 32, 10.0)
        u0 = uniform_density(g)
        traj = evolve(u0, EvolutionConfig(T=0.05, n_steps=10), LINEAR, NONE)
        assert np.array_equal(traj.final.values, u0.values)

    def test_mass_series(self):
        g = Grid(2, 32, 10.0)
        u0 = gaussian_density(g, sigma=1.0)
        traj = evolve(u0, EvolutionConfig(T=0.05, n_steps=20), LINEAR,
                      KernelSpec(kind="biot_savart"))
        assert np.abs(traj.mass - 1.0).max() <= 1e-9

    def test_positivity_series(self):
        g = Grid(2, 32, 10.0)
        u0 = gaussian_density(g, sigma=1.0)
        traj = evolve(u0, EvolutionConfig(T=0.05, n_steps=20), LINEAR, NONE)
        assert traj.min_u.min() >= -1e-8

    def test_rejects_non_probability(self):
        g = Grid(2, 32, 10.0)
        with pytest.raises(ValueError, match="unit mass"):
            evolve(Field(g, np.full(g.shape, 1.0)),
                   EvolutionConfig(T=0.1, n_steps=2), LINEAR, NONE)
        bad = gaussian_density(g, sigma=1.0).values.copy()
        bad[0, 0] = -1e-6
        with pytest.raises(ValueError, match="simplex"):
            evolve(Field(g, bad), EvolutionConfig(T=0.1, n_steps=2),
                   LINEAR, NONE)

    def test_partial_trajectory_on_failure(self):
        g = Grid(2, 32, 10.0)
        u0 = gaussian_density(g, sigma=1.0)
        cfg = EvolutionConfig(T=0.1, n_steps=10, fp_tol=1e-30, max_iter=4)
        traj = evolve(u0, cfg, LINEAR, NONE)
        assert traj.error is not None
        assert traj.times.size < 11

    def test_energy_identity_defect(self):
        g = Grid(2, 32, 10.0)
        u0 = gaussian_density(g, sigma=1.0)
        traj = evolve(u0, EvolutionConfig(T=0.05, n_steps=20), LINEAR,
                      KernelSpec(kind="biot_savart"))
        for k in range(1, traj.times.size):
            scale = max(1.0, traj.l2[k] ** 2)
            assert traj.energy_defect[k] <= 10.0 * traj.residual[k] * scale \
                + 1e-14

    def test_entropy_monotone_heat(self):
        g = Grid(2, 64, 20.0)
        u0 = gaussian_density(g, sigma=1.0)
        traj = evolve(u0, EvolutionConfig(T=0.05, n_steps=20), LINEAR, NONE)
        ent = traj.entropy
        assert np.all(np.isfinite(ent))
        for k in range(1, ent.size):
            assert ent[k] <= ent[k - 1] + 10.0 * max(traj.residual[k], 1e-16)

    def test_step_halving_first_order(self):
        g = Grid(2, 64, 20.0)
        u0 = gaussian_density(g, sigma=1.0)
        T = 0.1
        finals = {}
        for n in (50, 100, 200):
            finals[n] = evolve(u0, EvolutionConfig(T=T, n_steps=n),
                               LINEAR, NONE).final
        d1 = hminus1_norm(Field(g, finals[50].values - finals[100].values))
        d2 = hminus1_norm(Field(g, finals[100].values - finals[200].values))
        assert d1 / d2 >= 1.8

    def test_snapshot_cadence(self):
        g = Grid(2, 32, 10.0)
        u0 = gaussian_density(g, sigma=1.0)
        traj = evolve(u0, EvolutionConfig(T=0.05, n_steps=10,
                                          snapshot_every=2), LINEAR, NONE)
        assert traj.snapshot_times == [0.0] + [pytest.approx(0.005 * k)
                                               for k in (2, 4, 6, 8, 10)]


class TestExponentialFormula:
    def test_n1_is_single_resolvent_step(self):
        g = Grid(2, 32, 10.0)
        u0 = gaussian_density(g, sigma=1.0)
        from nfpelab.resolvent import ResolventConfig, resolvent_step
        t = 0.01
        out = exponential_formula(u0, t, 1, LINEAR, NONE)
        ref = resolvent_step(u0, ResolventConfig(lam=t, eps=np.sqrt(t)),
                             LINEAR, NONE).u
        assert np.array_equal(out.values, ref.values)

    def test_cauchy_differences_decrease(self):
        g = Grid(2, 32, 10.0)
        u0 = gaussian_density(g, sigma=1.0)
        t = 0.1
        s = {n: exponential_formula(u0, t, n, LINEAR, NONE)
             for n in (8, 16, 32, 64)}
        diffs = [hminus1_norm(Field(g, s[n].values - s[2 * n].values))
                 for n in (8, 16, 32)]
        assert diffs[0] > diffs[1] > diffs[2]

    def test_heat_convergence_first_order(self):
        g = Grid(2, 64, 20.0)
        u0 = gaussian_density(g, sigma=1.0)
        t = 0.1
        exact = _heat_exact(g, 1.0, t)
        errs = [lp_norm(Field(g, exponential_formula(u0, t, n, LINEAR,
                                                     NONE).values
                              - exact.values), 2)
                for n in (16, 32, 64)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[0] / errs[2] > 2.5  # roughly O(1/n) over a factor 4


class TestFrozenLinear:
    def _traj(self, kspec, g):
        u0 = gaussian_density(g, sigma=1.0)
        cfg = EvolutionConfig(T=0.02, n_steps=10, snapshot_every=1)
        traj = evolve(u0, cfg, LINEAR, kspec)
        assert traj.error is None
        return u0, cfg, traj

    def test_self_consistency_heat(self):
        g = Grid(2, 32, 10.0)
        u0, cfg, traj = self._traj(NONE, g)
        lin = evolve_frozen_linear(u0, traj, cfg, LINEAR, NONE)
        assert lin.error is None
        gap = np.abs(lin.final.values - traj.final.values).max()
        assert gap < 1e-8 * traj.final.values.max()

    def test_self_consistency_biot_savart(self):
        g = Grid(2, 32, 10.0)
        kspec = KernelSpec(kind="biot_savart")
        u0, cfg, traj = self._traj(kspec, g)
        lin = evolve_frozen_linear(u0, traj, cfg, LINEAR, kspec)
        gap = np.abs(lin.final.values - traj.final.values).max()
        assert gap < 1e-7 * traj.final.values.max()

    def test_zero_stays_zero(self):
        g = Grid(2, 32, 10.0)
        _, cfg, traj = self._traj(NONE, g)
        lin = evolve_frozen_linear(Field(g, np.zeros(g.shape)), traj, cfg,
                                   LINEAR, NONE)
        assert np.abs(lin.final.values).max() == 0.0

    def test_mass_conserved(self):
        g = Grid(2, 32, 10.0)
        u0, cfg, traj = self._traj(NONE, g)
        lin = evolve_frozen_linear(u0, traj, cfg, LINEAR, NONE)
        assert np.abs(lin.mass - 1.0).max() <= 1e-9

    def test_time_grid_mismatch_rejected(self):
        g = Grid(2, 32, 10.0)
        u0, cfg, traj = self._traj(NONE, g)
        other = EvolutionConfig(T=0.02, n_steps=7)
        with pytest.raises(ValueError, match="snapshot"):
            evolve_frozen_linear(u0, traj, other, LINEAR, NONE)


class TestMonitor:
    def test_identical_trajectories_degenerate(self):
        g = Grid(2, 32, 10.0)
        u0 = gaussian_density(g, sigma=1.0)
        cfg = EvolutionConfig(T=0.02, n_steps=5, snapshot_every=1)
        traj = evolve(u0, cfg, LINEAR, NONE)
        rep = monitor_theorem21(traj, traj, gamma=0.0)
        assert rep.degenerate
        assert rep.distance.max() <= 1e-12

    def test_heat_contraction_nonincreasing(self):
        g = Grid(2, 32, 10.0)
        u0 = gaussian_density(g, sigma=1.0)
        u0b = gaussian_density(g, sigma=1.1)
        cfg = EvolutionConfig(T=0.05, n_steps=10, snapshot_every=1)
        ta = evolve(u0, cfg, LINEAR, NONE)
        tb = evolve(u0b, cfg, LINEAR, NONE)
        rep = monitor_theorem21(ta, tb, gamma=0.0)
        assert rep.contraction_nonincreasing
        assert rep.omega_hat <= 1e-6
        assert rep.linf_ok
        assert np.isfinite(rep.narrow_constant)

    def test_grid_mismatch(self):
        g1, g2 = Grid(2, 32, 10.0), Grid(2, 32, 12.0)
        cfg = EvolutionConfig(T=0.02, n_steps=4, snapshot_every=1)
        t1 = evolve(gaussian_density(g1, sigma=1.0), cfg, LINEAR, NONE)
        t2 = evolve(gaussian_density(g2, sigma=1.0), cfg, LINEAR, NONE)
        with pytest.raises(ValueError, match="grids"):
            monitor_theorem21(t1, t2, gamma=0.0)
