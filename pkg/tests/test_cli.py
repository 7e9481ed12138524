"""End-to-end tests of the command-line front door and the run formats.

Exercises exit codes (0 ok / 1 solver or battery / 2 hypothesis warning /
64 config / 66 missing input), run-directory reproducibility, and the
oracle battery including its negative control.
"""

import numpy as np

from nfpelab.cli import main
from nfpelab.fields import Grid, read_snapshot, write_snapshot
from nfpelab.runio import read_monitors_csv
from nfpelab.validation import run_battery

HEAT_SMALL = """
# compact heat run for the test suite
grid.dim = 2
grid.n = 32
grid.extent = 10.0
nonlinearity.beta = linear
nonlinearity.slope = 1.0
nonlinearity.b = one
kernel.kind = none
initial.kind = gaussian
initial.sigma = 1.0
evolution.T = 0.02
evolution.n_steps = 10
evolution.snapshot_every = 1
seed = 1
"""


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestConfigErrors:
    def test_missing_required_key(self, tmp_path, capsys):
        cfg = _write(tmp_path, "grid.dim = 2\ngrid.extent = 10.0\n"
                               "evolution.T = 0.1\nevolution.n_steps = 5\n")
        code = main(["solve", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 64
        assert "grid.n" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        cfg = _write(tmp_path, HEAT_SMALL + "grid.resolution = 4\n")
        code = main(["solve", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 64
        assert "grid.resolution" in capsys.readouterr().err

    def test_malformed_line(self, tmp_path, capsys):
        cfg = _write(tmp_path, "grid.dim 2\n")
        code = main(["solve", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 64
        err = capsys.readouterr().err
        assert ":1:" in err

    def test_missing_config_file(self, tmp_path):
        code = main(["solve", str(tmp_path / "absent.cfg"),
                     "--out", str(tmp_path / "o")])
        assert code == 66


class TestSolve:
    def test_heat_run_outputs(self, tmp_path):
        cfg = _write(tmp_path, HEAT_SMALL)
        out = tmp_path / "run"
        assert main(["solve", str(cfg), "--out", str(out)]) == 0
        cols = read_monitors_csv(out / "monitors.csv")
        assert np.abs(cols["mass"] - 1.0).max() <= 1e-9
        assert (out / "config.resolved.txt").exists()
        assert (out / "validation.txt").exists()
        assert (out / "snapshots" / "index.csv").exists()

    def test_rerun_reproduces_monitors_bytes(self, tmp_path):
        cfg = _write(tmp_path, HEAT_SMALL)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["solve", str(cfg), "--out", str(out1)]) == 0
        # rerun from the frozen copy of the resolved config
        frozen = out1 / "config.resolved.txt"
        assert main(["solve", str(frozen), "--out", str(out2)]) == 0
        assert (out1 / "monitors.csv").read_bytes() == \
            (out2 / "monitors.csv").read_bytes()

    def test_scenario_shortcut(self, tmp_path):
        cfg = _write(tmp_path, "scenario = heat\ngrid.n = 32\n"
                               "evolution.T = 0.01\n"
                               "evolution.n_steps = 5\nseed = 1\n")
        out = tmp_path / "run"
        assert main(["solve", str(cfg), "--out", str(out)]) == 0

    def test_hypothesis_warning_exit_code(self, tmp_path):
        # degenerate diffusion floor: hypothesis (i) fails, run completes
        cfg = _write(tmp_path, HEAT_SMALL.replace(
            "nonlinearity.beta = linear",
            "nonlinearity.beta = shifted_power\nnonlinearity.alpha = 0.0"))
        out = tmp_path / "run"
        code = main(["solve", str(cfg), "--out", str(out)])
        assert code == 2
        assert (out / "monitors.csv").exists()  # run completed
        assert "FAIL" in (out / "validation.txt").read_text()

    def test_solver_failure_exit_code(self, tmp_path):
        cfg = _write(tmp_path, HEAT_SMALL +
                     "evolution.fp_tol = 1e-30\nevolution.max_iter = 4\n")
        out = tmp_path / "run"
        code = main(["solve", str(cfg), "--out", str(out)])
        assert code == 1
        assert (out / "error.txt").exists()

    def test_probes_emit_h_eps_csv(self, tmp_path):
        cfg = _write(tmp_path, HEAT_SMALL + "probes.enabled = true\n")
        out = tmp_path / "run"
        assert main(["solve", str(cfg), "--out", str(out)]) == 0
        text = (out / "h_eps.csv").read_text().splitlines()
        assert text[0] == "t,eps,h_eps,bound_C_sqrt_eps_exp_Ct"
        assert len(text) > 10


class TestParticles:
    def _pde_run(self, tmp_path):
        cfg = _write(tmp_path, HEAT_SMALL, name="pde.cfg")
        out = tmp_path / "pde"
        assert main(["solve", str(cfg), "--out", str(out)]) == 0
        return out

    def test_frozen_mode_against_stored_run(self, tmp_path):
        pde_dir = self._pde_run(tmp_path)
        cfg = _write(tmp_path, HEAT_SMALL + f"""
particles.N = 2000
particles.dt = 0.002
particles.T = 0.02
particles.mode = frozen
particles.trajectory = {pde_dir}
""", name="part.cfg")
        out = tmp_path / "particles"
        assert main(["particles", str(cfg), "--out", str(out)]) == 0
        cols = read_monitors_csv(out / "particle_monitors.csv")
        assert np.isfinite(cols["hm1_distance_to_pde"]).all()
        assert np.abs(cols["kde_mass"] - 1.0).max() < 1e-9

    def test_self_consistent_standalone(self, tmp_path):
        cfg = _write(tmp_path, HEAT_SMALL + """
particles.N = 500
particles.dt = 0.004
particles.T = 0.02
particles.mode = self_consistent
""", name="part.cfg")
        out = tmp_path / "particles"
        assert main(["particles", str(cfg), "--out", str(out)]) == 0

    def test_bad_trajectory_path(self, tmp_path, capsys):
        cfg = _write(tmp_path, HEAT_SMALL + f"""
particles.mode = frozen
particles.trajectory = {tmp_path / 'nowhere'}
""", name="part.cfg")
        code = main(["particles", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 66

    def test_positions_flag_writes_csv(self, tmp_path):
        pde_dir = self._pde_run(tmp_path)
        cfg = _write(tmp_path, HEAT_SMALL + f"""
particles.N = 50
particles.dt = 0.002
particles.T = 0.02
particles.mode = frozen
particles.trajectory = {pde_dir}
particles.save_positions = true
""", name="part.cfg")
        out = tmp_path / "particles"
        assert main(["particles", str(cfg), "--out", str(out)]) == 0
        lines = (out / "particles.csv").read_text().splitlines()
        assert lines[0] == "t,particle_id,x1,x2"


class TestKernels:
    def test_biot_savart_gamma_zero(self, tmp_path, capsys):
        cfg = _write(tmp_path, HEAT_SMALL.replace("kernel.kind = none",
                                                  "kernel.kind = biot_savart"))
        out = tmp_path / "k"
        code = main(["kernels", str(cfg), "--out", str(out)])
        assert code == 0
        report = (out / "kernel_report.txt").read_text()
        assert "gamma constant: 0.0" in report

    def test_riesz_s1_flags_divergence(self, tmp_path):
        cfg = _write(tmp_path, """
grid.dim = 3
grid.n = 16
grid.extent = 16.0
kernel.kind = riesz
kernel.s = 1.0
evolution.T = 0.01
evolution.n_steps = 1
""")
        out = tmp_path / "k"
        code = main(["kernels", str(cfg), "--out", str(out)])
        assert code == 2
        assert "diverged under refinement: True" in \
            (out / "kernel_report.txt").read_text()

    def test_tabulated_round_trip_bit_identical(self, tmp_path):
        g = Grid(2, 16, 8.0)
        rng = np.random.default_rng(3)
        table = rng.standard_normal(g.shape + (2,))
        from nfpelab.fields import Field
        src = tmp_path / "table.nfpe"
        write_snapshot(Field(g, table), src)
        cfg = _write(tmp_path, f"""
grid.dim = 2
grid.n = 16
grid.extent = 8.0
kernel.kind = tabulated
kernel.path = {src}
evolution.T = 0.01
evolution.n_steps = 1
""")
        out = tmp_path / "k"
        main(["kernels", str(cfg), "--out", str(out)])
        back = read_snapshot(out / "kernel.nfpe")
        assert back.grid == g
        assert np.array_equal(back.values, table)
        assert (out / "kernel.nfpe").read_bytes() == src.read_bytes()


class TestValidateCommand:
    def test_quick_battery_passes(self, capsys):
        assert main(["validate", "--quick"]) == 0
        out = capsys.readouterr().out
        assert "all pass" in out

    def test_negative_control_fails(self, capsys):
        assert main(["validate", "--quick", "--negative-control"]) == 1
        out = capsys.readouterr().out
        assert "FAIL" in out

    def test_negative_control_hits_convolution_oracle(self):
        results = run_battery(negative_control=True, quick=True)
        by_name = {r.name: r for r in results}
        conv = [r for name, r in by_name.items() if "convolution" in name][0]
        assert not conv.passed
        # every other oracle stays green
        assert all(r.passed for r in results if "convolution" not in r.name)


class TestReport:
    def test_report_renders_figures(self, tmp_path):
        cfg = _write(tmp_path, HEAT_SMALL + "probes.enabled = true\n")
        out = tmp_path / "run"
        assert main(["solve", str(cfg), "--out", str(out)]) == 0
        assert main(["report", str(out)]) == 0
        figs = sorted(p.name for p in (out / "figures").glob("*.png"))
        assert "monitors.png" in figs
        assert "snapshots.png" in figs
        assert "h_eps.png" in figs
        for p in (out / "figures").glob("*.png"):
            assert p.stat().st_size > 1000

    def test_report_missing_dir(self, tmp_path):
        assert main(["report", str(tmp_path / "absent")]) == 66
